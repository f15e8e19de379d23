#include "bblrm/json_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace bblrm {

namespace {

// Reads typed members of one JSON object, recording problems instead of
// throwing so that a whole document can be reported at once.
class ObjectReader {
public:
    ObjectReader(const Json& obj, std::string path, std::vector<FieldError>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {
        if (!obj_.is_object()) {
            fail(path_.empty() ? "(root)" : path_, "expected an object");
            valid_ = false;
        }
    }

    bool valid() const { return valid_; }

    void number(const char* key, double& out) {
        if (const Json* v = find(key)) {
            if (v->is_number()) out = v->get<double>();
            else fail(field(key), "expected a number");
        }
    }

    void integer(const char* key, int& out) {
        if (const Json* v = find(key)) {
            if (v->is_number_integer()) out = v->get<int>();
            else fail(field(key), "expected an integer");
        }
    }

    void index(const char* key, std::size_t& out) {
        if (const Json* v = find(key)) {
            if (is_non_negative_integer(*v)) out = v->get<std::size_t>();
            else fail(field(key), "expected a non-negative integer");
        }
    }

    void seed(const char* key, std::uint64_t& out) {
        if (const Json* v = find(key)) {
            if (is_non_negative_integer(*v)) {
                out = v->get<std::uint64_t>();
            } else if (v->is_string()) {
                try {
                    std::size_t used = 0;
                    out = std::stoull(v->get<std::string>(), &used);
                    if (used != v->get<std::string>().size()) throw std::invalid_argument("trailing");
                } catch (const std::exception&) {
                    fail(field(key), "expected an unsigned 64-bit integer");
                }
            } else {
                fail(field(key), "expected an unsigned 64-bit integer");
            }
        }
    }

    void boolean(const char* key, bool& out) {
        if (const Json* v = find(key)) {
            if (v->is_boolean()) out = v->get<bool>();
            else fail(field(key), "expected true or false");
        }
    }

    void string(const char* key, std::string& out) {
        if (const Json* v = find(key)) {
            if (v->is_string()) out = v->get<std::string>();
            else fail(field(key), "expected a string");
        }
    }

    void numbers(const char* key, std::vector<double>& out) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) {
                fail(field(key), "expected an array of numbers");
                return;
            }
            std::vector<double> values;
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number()) {
                    fail(field(key) + "[" + std::to_string(i) + "]", "expected a number");
                    return;
                }
                values.push_back((*v)[i].get<double>());
            }
            out = std::move(values);
        }
    }

    const Json* object(const char* key) { return find(key); }

    bool has(const char* key) const { return valid_ && obj_.contains(key); }

    void reject_unknown() {
        if (!valid_) return;
        for (const auto& [key, _] : obj_.items()) {
            if (!seen_.count(key)) fail(field(key.c_str()), "unknown field");
        }
    }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void fail(const std::string& where, const std::string& msg) { errors_.push_back({where, msg}); }

private:
    const Json* find(const char* key) {
        seen_.insert(key);
        if (!valid_) return nullptr;
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    const Json& obj_;
    std::string path_;
    std::vector<FieldError>& errors_;
    std::set<std::string> seen_;
    bool valid_ = true;
};

template <typename Fn>
void read_section(ObjectReader& parent, const char* key, std::vector<FieldError>& errors, Fn&& fn) {
    if (const Json* sub = parent.object(key)) {
        ObjectReader reader(*sub, parent.field(key), errors);
        if (reader.valid()) {
            fn(reader);
            reader.reject_unknown();
        }
    }
}

}  // namespace

TrialConfig trial_config_from_json(const Json& doc, TrialConfig base) {
    std::vector<FieldError> errors;
    TrialConfig cfg = std::move(base);
    ObjectReader root(doc, "", errors);
    if (!root.valid()) throw ConfigError(std::move(errors));

    bool ref_index_given = false;
    read_section(root, "grid", errors, [&](ObjectReader& r) {
        r.numbers("doses", cfg.grid.doses);
        r.number("ref_dose", cfg.grid.ref_dose);
        ref_index_given = r.has("ref_index");
        std::size_t ref_index = 0;
        r.index("ref_index", ref_index);
        if (ref_index_given) cfg.grid.ref_index = ref_index;
    });
    if (!ref_index_given) cfg.grid.ref_index = cfg.grid.index_of(cfg.grid.ref_dose);

    read_section(root, "intervals", errors, [&](ObjectReader& r) {
        r.number("u", cfg.intervals.u);
        r.number("o", cfg.intervals.o);
        r.number("target", cfg.intervals.target);
    });
    read_section(root, "prior", errors, [&](ObjectReader& r) {
        r.number("mean1", cfg.prior.mean1);
        r.number("sd1", cfg.prior.sd1);
        r.number("mean2", cfg.prior.mean2);
        r.number("sd2", cfg.prior.sd2);
    });
    read_section(root, "mcmc", errors, [&](ObjectReader& r) {
        r.integer("burn_in", cfg.mcmc.burn_in);
        r.integer("kept", cfg.mcmc.kept);
        r.integer("thin", cfg.mcmc.thin);
        r.seed("seed", cfg.mcmc.seed);
        r.number("target_acceptance", cfg.mcmc.target_acceptance);
    });
    read_section(root, "decision", errors, [&](ObjectReader& r) {
        r.number("alpha", cfg.decision.alpha);
        r.number("omega", cfg.decision.omega);
        r.number("gamma", cfg.decision.gamma);
        std::string rule = to_string(cfg.decision.rule);
        r.string("rule", rule);
        try {
            cfg.decision.rule = escalation_rule_from_string(rule);
        } catch (const InvalidArgument& e) {
            r.fail(r.field("rule"), e.what());
        }
        r.boolean("no_skip", cfg.decision.no_skip);
        r.boolean("burden_enabled", cfg.decision.burden_enabled);
    });
    root.integer("cohort_size", cfg.cohort_size);
    root.integer("max_cohorts", cfg.max_cohorts);
    root.index("start_dose_index", cfg.start_dose_index);
    root.reject_unknown();

    if (errors.empty()) errors = cfg.field_errors();
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return cfg;
}

Json to_json(const TrialConfig& c) {
    Json grid = {{"doses", c.grid.doses}, {"ref_dose", c.grid.ref_dose}};
    if (c.grid.ref_index) grid["ref_index"] = *c.grid.ref_index;
    return Json{
        {"grid", grid},
        {"intervals", {{"u", c.intervals.u}, {"o", c.intervals.o}, {"target", c.intervals.target}}},
        {"prior", {{"mean1", c.prior.mean1}, {"sd1", c.prior.sd1}, {"mean2", c.prior.mean2}, {"sd2", c.prior.sd2}}},
        {"mcmc",
         {{"burn_in", c.mcmc.burn_in},
          {"kept", c.mcmc.kept},
          {"thin", c.mcmc.thin},
          {"seed", c.mcmc.seed},
          {"target_acceptance", c.mcmc.target_acceptance}}},
        {"decision",
         {{"alpha", c.decision.alpha},
          {"omega", c.decision.omega},
          {"gamma", c.decision.gamma},
          {"rule", to_string(c.decision.rule)},
          {"no_skip", c.decision.no_skip},
          {"burden_enabled", c.decision.burden_enabled}}},
        {"cohort_size", c.cohort_size},
        {"max_cohorts", c.max_cohorts},
        {"start_dose_index", c.start_dose_index},
    };
}

Scenario scenario_from_json(const Json& doc, const DoseGrid& grid) {
    std::vector<FieldError> errors;
    ObjectReader r(doc, "", errors);
    if (!r.valid()) throw ConfigError(std::move(errors));
    Scenario s;
    std::vector<double> doses;
    r.string("name", s.name);
    r.numbers("doses", doses);
    r.numbers("dlt_probs", s.dlt_probs);
    r.numbers("ndltae_probs", s.ndltae_probs);
    r.reject_unknown();
    for (const char* key : {"name", "doses", "dlt_probs", "ndltae_probs"}) {
        if (!doc.contains(key)) errors.push_back({key, "missing"});
    }
    if (errors.empty() && doses != grid.doses) {
        errors.push_back({"doses", "do not match the trial dose grid"});
    }
    for (const auto& v : s.violations(grid.size())) {
        const auto colon = v.find(':');
        errors.push_back({v.substr(0, colon), colon == std::string::npos ? v : v.substr(colon + 2)});
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return s;
}

CohortObservation cohort_from_json(const Json& doc, const DoseGrid& grid, const std::string& where) {
    std::vector<FieldError> errors;
    ObjectReader r(doc, where, errors);
    if (!r.valid()) throw ConfigError(std::move(errors));
    CohortObservation obs;
    const bool has_dose = r.has("dose");
    const bool has_index = r.has("dose_index");
    double dose = 0.0;
    r.number("dose", dose);
    r.index("dose_index", obs.dose_index);
    r.integer("n", obs.n);
    r.integer("dlt_count", obs.dlt_count);
    r.integer("ndltae_count", obs.ndltae_count);
    if (!r.has("n")) r.fail(r.field("n"), "missing");
    if (!r.has("dlt_count")) r.fail(r.field("dlt_count"), "missing");
    if (!r.has("ndltae_count")) r.fail(r.field("ndltae_count"), "missing");

    if (has_dose) {
        if (auto idx = grid.index_of(dose)) {
            if (has_index && *idx != obs.dose_index) r.fail(r.field("dose_index"), "disagrees with dose");
            obs.dose_index = *idx;
        } else {
            r.fail(r.field("dose"), "is not a grid dose");
        }
    } else if (!has_index) {
        r.fail(r.field("dose"), "missing");
    } else if (obs.dose_index >= grid.size()) {
        r.fail(r.field("dose_index"), "outside the dose grid");
    }
    if (errors.empty()) {
        if (obs.n < 1) r.fail(r.field("n"), "must be >= 1");
        if (obs.dlt_count < 0 || obs.dlt_count > obs.n) r.fail(r.field("dlt_count"), "must lie in [0, n]");
        if (obs.ndltae_count < 0 || obs.ndltae_count > obs.n) r.fail(r.field("ndltae_count"), "must lie in [0, n]");
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return obs;
}

TrialHistory history_from_json(const Json& doc, const DoseGrid& grid) {
    if (!doc.is_object() || !doc.contains("cohorts") || !doc["cohorts"].is_array()) {
        throw ConfigError(std::vector<FieldError>{{"cohorts", "expected an object with a 'cohorts' array"}});
    }
    TrialHistory history;
    std::vector<FieldError> errors;
    const Json& cohorts = doc["cohorts"];
    for (std::size_t i = 0; i < cohorts.size(); ++i) {
        try {
            history.cohorts.push_back(cohort_from_json(cohorts[i], grid, "cohorts[" + std::to_string(i) + "]"));
        } catch (const ConfigError& e) {
            errors.insert(errors.end(), e.errors().begin(), e.errors().end());
        }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return history;
}

Json to_json(const CohortObservation& obs, const DoseGrid& grid) {
    return Json{{"dose", grid[obs.dose_index]},
                {"dose_index", obs.dose_index},
                {"n", obs.n},
                {"dlt_count", obs.dlt_count},
                {"ndltae_count", obs.ndltae_count}};
}

Json to_json(const TrialHistory& history, const DoseGrid& grid) {
    Json cohorts = Json::array();
    for (const auto& c : history.cohorts) cohorts.push_back(to_json(c, grid));
    return Json{{"cohorts", cohorts}};
}

Json to_json(const Recommendation& rec, const DoseGrid& grid) {
    Json probs = Json::array();
    for (std::size_t i = 0; i < rec.interval_probs.size(); ++i) {
        const auto& p = rec.interval_probs[i];
        probs.push_back({{"dose", grid[i]}, {"under", p.under}, {"target", p.target}, {"over", p.over}});
    }
    return Json{{"dose", grid[rec.dose_index]},
                {"dose_index", rec.dose_index},
                {"rationale", to_string(rec.rationale)},
                {"mtd_quantile", rec.mtd_quantile},
                {"interval_probs", probs}};
}

Json to_json(const EngineResult& result, const DoseGrid& grid) {
    Json out = to_json(result.recommendation, grid);
    out["seed"] = result.seed;
    out["acceptance_rate"] = result.acceptance_rate;
    if (!result.bands.empty()) {
        Json bands = Json::array();
        for (std::size_t i = 0; i < result.bands.size(); ++i) {
            const auto& b = result.bands[i];
            bands.push_back({{"dose", grid[i]}, {"lower", b.lower}, {"median", b.median}, {"upper", b.upper}});
        }
        out["dlt_bands"] = bands;
    }
    return out;
}

Json to_json(const TrialRecord& record, const DoseGrid& grid) {
    Json recs = Json::array();
    for (const auto& r : record.recommendations) recs.push_back(to_json(r, grid));
    Json out{{"seed", record.seed},
             {"cohorts", to_json(record.history, grid)["cohorts"]},
             {"recommendations", recs},
             {"declared_mtd_index", record.declared_mtd_index},
             {"declared_mtd_dose", grid[record.declared_mtd_index]}};
    if (record.error) out["error"] = *record.error;
    return out;
}

Json to_json(const OperatingCharacteristics& oc, const DoseGrid& grid) {
    Json hist = Json::object();
    for (std::size_t i = 0; i < grid.size() && i < oc.mtd_selection_histogram.size(); ++i) {
        hist[format_dose(grid[i])] = oc.mtd_selection_histogram[i];
    }
    return Json{{"scenario", oc.scenario},
                {"alpha", oc.alpha},
                {"omega", oc.omega},
                {"n_trials", oc.n_trials},
                {"n_failed", oc.n_failed},
                {"master_seed", oc.master_seed},
                {"pct_toxic_mtd", oc.pct_toxic_mtd},
                {"pct_true_mtd", oc.pct_true_mtd},
                {"mean_patients_total", oc.mean_patients_total},
                {"mean_patients_at_toxic_doses", oc.mean_patients_at_toxic_doses},
                {"mtd_selection_histogram", hist}};
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

}  // namespace bblrm

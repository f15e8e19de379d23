#include "bblrm/scenarios.hpp"

#include <algorithm>
#include <sstream>

namespace bblrm {

std::optional<std::size_t> Scenario::true_mtd_index() const {
    for (std::size_t i = 0; i < dlt_probs.size(); ++i) {
        if (dlt_probs[i] == kTrueMtdProbability) return i;
    }
    return std::nullopt;
}

std::vector<std::size_t> Scenario::toxic_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dlt_probs.size(); ++i) {
        if (dlt_probs[i] > kToxicThreshold) out.push_back(i);
    }
    return out;
}

bool Scenario::is_toxic(std::size_t dose_index) const {
    return dose_index < dlt_probs.size() && dlt_probs[dose_index] > kToxicThreshold;
}

std::vector<std::string> Scenario::violations(std::size_t grid_size) const {
    std::vector<std::string> out;
    auto check_vector = [&](const std::vector<double>& v, const char* field) {
        if (v.size() != grid_size) {
            std::ostringstream msg;
            msg << field << ": length " << v.size() << " does not match " << grid_size << " doses";
            out.push_back(msg.str());
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] >= 0.0 && v[i] <= 1.0)) {
                std::ostringstream msg;
                msg << field << "[" << i << "]: " << v[i] << " is not a probability";
                out.push_back(msg.str());
            }
        }
    };
    if (name.empty()) out.emplace_back("name: must not be empty");
    check_vector(dlt_probs, "dlt_probs");
    check_vector(ndltae_probs, "ndltae_probs");
    for (std::size_t i = 1; i < dlt_probs.size(); ++i) {
        if (dlt_probs[i] < dlt_probs[i - 1]) {
            std::ostringstream msg;
            msg << "dlt_probs[" << i << "]: " << dlt_probs[i] << " is below the previous dose's "
                << dlt_probs[i - 1];
            out.push_back(msg.str());
        }
    }
    return out;
}

void Scenario::validate(std::size_t grid_size) const {
    const auto problems = violations(grid_size);
    if (problems.empty()) return;
    std::ostringstream msg;
    msg << "scenario '" << name << "' is invalid:";
    for (const auto& p : problems) msg << "\n  - " << p;
    throw InvalidArgument(msg.str());
}

const std::vector<Scenario>& builtin_scenarios() {
    static const std::vector<Scenario> scenarios = {
        {"S1",
         {0.11, 0.25, 0.35, 0.41, 0.47, 0.52, 0.58, 0.63, 0.70},
         {0.35, 0.80, 0.95, 0.95, 0.95, 0.95, 0.95, 0.95, 0.95}},
        {"S2",
         {0.08, 0.16, 0.25, 0.35, 0.42, 0.45, 0.53, 0.60, 0.70},
         {0.20, 0.55, 0.80, 0.95, 0.95, 0.95, 0.95, 0.95, 0.95}},
        {"S3",
         {0.02, 0.05, 0.14, 0.25, 0.35, 0.42, 0.51, 0.60, 0.68},
         {0.10, 0.20, 0.35, 0.80, 0.95, 0.95, 0.95, 0.95, 0.95}},
        {"S4",
         {0.03, 0.05, 0.10, 0.16, 0.25, 0.35, 0.40, 0.48, 0.55},
         {0.10, 0.20, 0.35, 0.55, 0.80, 0.95, 0.95, 0.95, 0.95}},
        {"S5",
         {0.001, 0.005, 0.03, 0.10, 0.16, 0.25, 0.38, 0.50, 0.60},
         {0.10, 0.10, 0.10, 0.35, 0.55, 0.80, 0.95, 0.95, 0.95}},
        {"S6",
         {0.01, 0.02, 0.05, 0.08, 0.11, 0.14, 0.25, 0.37, 0.47},
         {0.10, 0.10, 0.20, 0.20, 0.35, 0.55, 0.80, 0.95, 0.95}},
        {"S7",
         {0.01, 0.03, 0.04, 0.05, 0.08, 0.11, 0.14, 0.25, 0.37},
         {0.10, 0.10, 0.10, 0.20, 0.20, 0.35, 0.55, 0.80, 0.95}},
    };
    return scenarios;
}

const Scenario& builtin_scenario(const std::string& name) {
    const auto& all = builtin_scenarios();
    auto it = std::find_if(all.begin(), all.end(), [&](const Scenario& s) { return s.name == name; });
    if (it == all.end()) throw InvalidArgument("unknown scenario '" + name + "' (built-in: S1..S7)");
    return *it;
}

double ndltae_prob_for(double p_dlt) {
    if (p_dlt < 0.05) return 0.10;
    if (p_dlt < 0.10) return 0.20;
    if (p_dlt < 0.15) return 0.35;
    if (p_dlt < 0.20) return 0.55;
    if (p_dlt <= 0.25) return 0.80;
    if (p_dlt < 0.30) return 0.90;
    if (p_dlt < 0.33) return 0.93;
    return 0.95;
}

CohortObservation simulate_cohort(const Scenario& scenario, std::size_t dose_index, int n, Rng& rng) {
    if (dose_index >= scenario.dlt_probs.size()) throw InvalidArgument("dose index outside scenario");
    if (n < 1) throw InvalidArgument("cohort size must be >= 1");
    CohortObservation obs{dose_index, n, 0, 0};
    const double p_dlt = scenario.dlt_probs[dose_index];
    const double p_ae = scenario.ndltae_probs[dose_index];
    for (int j = 0; j < n; ++j) {
        // Two uniforms per patient regardless of outcome, so the stream
        // position never depends on the truth.
        const double u_dlt = uniform01(rng);
        const double u_ae = uniform01(rng);
        if (u_dlt < p_dlt) ++obs.dlt_count;
        if (u_ae < p_ae) ++obs.ndltae_count;
    }
    return obs;
}

}  // namespace bblrm

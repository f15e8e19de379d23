#include "bblrm/simulator.hpp"

#include "bblrm/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <thread>

namespace bblrm {

std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return derive_seed(master_seed, index);
}

TrialRecord run_trial(const Scenario& scenario, const TrialConfig& config, std::uint64_t seed,
                      const StopPredicate& stop) {
    config.validate();
    scenario.validate(config.grid.size());

    TrialRecord record;
    record.seed = seed;
    std::size_t dose = config.start_dose_index;
    record.declared_mtd_index = dose;
    try {
        for (int k = 0; k < config.max_cohorts; ++k) {
            const auto cohort_index = static_cast<std::uint64_t>(k);
            Rng outcomes(derive_seed(seed, kOutcomeStream + cohort_index));
            record.history.cohorts.push_back(simulate_cohort(scenario, dose, config.cohort_size, outcomes));

            EngineResult step = evaluate(config, record.history, derive_seed(seed, kEngineStream + cohort_index));
            dose = step.recommendation.dose_index;
            record.recommendations.push_back(std::move(step.recommendation));
            record.declared_mtd_index = dose;
            if (stop && stop(record.history, record.recommendations.back())) break;
        }
    } catch (const std::exception& e) {
        record.error = e.what();
    }
    return record;
}

BatchResult run_batch(const Scenario& scenario, const TrialConfig& config, int n_trials,
                      std::uint64_t master_seed, int parallelism, bool keep_records) {
    if (n_trials < 1) throw InvalidArgument("n_trials must be >= 1");
    config.validate();
    scenario.validate(config.grid.size());

    std::vector<TrialRecord> records(static_cast<std::size_t>(n_trials));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n_trials; i = next++) {
            records[static_cast<std::size_t>(i)] =
                run_trial(scenario, config, trial_seed(master_seed, static_cast<std::uint64_t>(i)));
        }
    };
    const int workers = std::clamp(parallelism, 1, n_trials);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    BatchResult result;
    OperatingCharacteristics& oc = result.oc;
    oc.scenario = scenario.name;
    oc.alpha = config.decision.alpha;
    oc.omega = config.decision.burden_enabled ? config.decision.omega : 0.0;
    oc.n_trials = n_trials;
    oc.master_seed = master_seed;
    oc.mtd_selection_histogram.assign(config.grid.size(), 0);

    const auto true_mtd = scenario.true_mtd_index();
    long toxic = 0, correct = 0, patients = 0, patients_toxic = 0;
    for (const auto& r : records) {
        if (r.error) {
            ++oc.n_failed;
            continue;
        }
        ++oc.mtd_selection_histogram[r.declared_mtd_index];
        if (scenario.is_toxic(r.declared_mtd_index)) ++toxic;
        if (true_mtd && r.declared_mtd_index == *true_mtd) ++correct;
        for (const auto& c : r.history.cohorts) {
            patients += c.n;
            if (scenario.is_toxic(c.dose_index)) patients_toxic += c.n;
        }
    }
    // Failed trials count against the percentages; patient means are over
    // completed trials.
    oc.pct_toxic_mtd = 100.0 * static_cast<double>(toxic) / n_trials;
    oc.pct_true_mtd = 100.0 * static_cast<double>(correct) / n_trials;
    if (const int ok = n_trials - oc.n_failed; ok > 0) {
        oc.mean_patients_total = static_cast<double>(patients) / ok;
        oc.mean_patients_at_toxic_doses = static_cast<double>(patients_toxic) / ok;
    }
    if (keep_records) result.records = std::move(records);

    if (static_cast<double>(oc.n_failed) > 0.001 * n_trials) {
        throw BatchFailure(fmt::format("{} of {} trials failed in scenario {}", oc.n_failed, n_trials,
                                       scenario.name),
                           std::move(result));
    }
    return result;
}

std::vector<OperatingCharacteristics> sweep(const std::vector<Scenario>& scenarios,
                                            const std::vector<double>& alphas,
                                            const std::vector<double>& omegas, const TrialConfig& config,
                                            int n_trials, std::uint64_t master_seed, int parallelism) {
    if (scenarios.empty() || alphas.empty() || omegas.empty()) {
        throw InvalidArgument("sweep needs at least one scenario, alpha and omega");
    }
    std::vector<OperatingCharacteristics> rows;
    rows.reserve(scenarios.size() * alphas.size() * omegas.size());
    for (const auto& scenario : scenarios) {
        for (double alpha : alphas) {
            for (double omega : omegas) {
                TrialConfig cell = config;
                cell.decision.alpha = alpha;
                cell.decision.omega = omega;
                rows.push_back(run_batch(scenario, cell, n_trials, master_seed, parallelism).oc);
            }
        }
    }
    return rows;
}

std::string format_dose(double dose) {
    return fmt::format("{:g}", dose);
}

void write_oc_csv_header(std::ostream& os, const DoseGrid& grid) {
    os << "scenario,alpha,omega,n_trials,master_seed,pct_toxic_mtd,pct_true_mtd,"
          "mean_patients_total,mean_patients_at_toxic_doses";
    for (double d : grid.doses) os << ",sel_" << format_dose(d);
    os << '\n';
}

void write_oc_csv_row(std::ostream& os, const OperatingCharacteristics& oc, const DoseGrid& grid) {
    os << fmt::format("{},{:g},{:g},{},{},{:.2f},{:.2f},{:.4f},{:.4f}", oc.scenario, oc.alpha, oc.omega,
                      oc.n_trials, oc.master_seed, oc.pct_toxic_mtd, oc.pct_true_mtd,
                      oc.mean_patients_total, oc.mean_patients_at_toxic_doses);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        os << ',' << (i < oc.mtd_selection_histogram.size() ? oc.mtd_selection_histogram[i] : 0L);
    }
    os << '\n';
}

void write_oc_long_csv(std::ostream& os, const std::vector<OperatingCharacteristics>& rows,
                       const DoseGrid& grid) {
    os << "scenario,alpha,omega,metric,value\n";
    for (const auto& oc : rows) {
        const auto key = fmt::format("{},{:g},{:g}", oc.scenario, oc.alpha, oc.omega);
        os << fmt::format("{},pct_toxic_mtd,{:.2f}\n", key, oc.pct_toxic_mtd);
        os << fmt::format("{},pct_true_mtd,{:.2f}\n", key, oc.pct_true_mtd);
        os << fmt::format("{},mean_patients_total,{:.4f}\n", key, oc.mean_patients_total);
        os << fmt::format("{},mean_patients_at_toxic_doses,{:.4f}\n", key, oc.mean_patients_at_toxic_doses);
        for (std::size_t i = 0; i < grid.size() && i < oc.mtd_selection_histogram.size(); ++i) {
            os << fmt::format("{},sel_{},{}\n", key, format_dose(grid[i]), oc.mtd_selection_histogram[i]);
        }
    }
}

}  // namespace bblrm

#pragma once

// Simulated trials and operating characteristics.

#include "bblrm/engine.hpp"
#include "bblrm/scenarios.hpp"
#include "bblrm/trial_config.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bblrm {

/// Called after each cohort's recommendation; returning true ends the trial
/// early. No stopping rule is installed by default.
using StopPredicate = std::function<bool(const TrialHistory&, const Recommendation&)>;

struct TrialRecord {
    std::uint64_t seed = 0;
    TrialHistory history;
    std::vector<Recommendation> recommendations;  // one per cohort
    std::size_t declared_mtd_index = 0;
    std::optional<std::string> error;
};

struct OperatingCharacteristics {
    std::string scenario;
    double alpha = 0.0;
    double omega = 0.0;
    int n_trials = 0;
    int n_failed = 0;
    std::uint64_t master_seed = 0;
    double pct_toxic_mtd = 0.0;
    double pct_true_mtd = 0.0;
    std::vector<long> mtd_selection_histogram;  // per grid dose
    double mean_patients_total = 0.0;
    double mean_patients_at_toxic_doses = 0.0;
};

struct BatchResult {
    OperatingCharacteristics oc;
    std::vector<TrialRecord> records;  // filled when requested
};

/// Raised when more than 0.1% of a batch's trials fail.
class BatchFailure : public std::runtime_error {
public:
    BatchFailure(const std::string& what, BatchResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const BatchResult& partial() const noexcept { return partial_; }

private:
    BatchResult partial_;
};

/// Per-trial seed for trial `index` of a batch.
std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t index) noexcept;

/// Runs cohorts until max_cohorts (or the stop predicate fires). The declared
/// MTD is the recommendation issued after the final cohort. Component errors
/// end the trial and are stored in the record.
TrialRecord run_trial(const Scenario& scenario, const TrialConfig& config, std::uint64_t seed,
                      const StopPredicate& stop = {});

/// n_trials independent trials on `parallelism` worker threads. Output does not
/// depend on the thread count.
BatchResult run_batch(const Scenario& scenario, const TrialConfig& config, int n_trials,
                      std::uint64_t master_seed, int parallelism = 1, bool keep_records = false);

/// Cross product scenario x alpha x omega, in that nesting order. Every cell
/// uses the same master seed, so cells share trial seeds.
std::vector<OperatingCharacteristics> sweep(const std::vector<Scenario>& scenarios,
                                            const std::vector<double>& alphas,
                                            const std::vector<double>& omegas, const TrialConfig& config,
                                            int n_trials, std::uint64_t master_seed, int parallelism = 1);

/// Fixed-column CSV: scenario, alpha, omega, n_trials, master_seed,
/// pct_toxic_mtd, pct_true_mtd, mean_patients_total,
/// mean_patients_at_toxic_doses, sel_<dose>...
void write_oc_csv_header(std::ostream& os, const DoseGrid& grid);
void write_oc_csv_row(std::ostream& os, const OperatingCharacteristics& oc, const DoseGrid& grid);

/// Long format: scenario, alpha, omega, metric, value.
void write_oc_long_csv(std::ostream& os, const std::vector<OperatingCharacteristics>& rows,
                       const DoseGrid& grid);

std::string format_dose(double dose);

}  // namespace bblrm

#include "bblrm/inference.hpp"

#include "bblrm/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

namespace bblrm {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// log(1 + exp(x)) without overflow.
double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double normal_log_density(double x, double mean, double sd) noexcept {
    const double z = (x - mean) / sd;
    return -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
}

double log_binomial_coefficient(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_prior(const ThetaSample& theta, const PriorSpec& prior) noexcept {
    return normal_log_density(theta.theta1, prior.mean1, prior.sd1) +
           normal_log_density(theta.theta2, prior.mean2, prior.sd2);
}

// 2x2 lower Cholesky factor of a symmetric positive definite matrix stored
// as {a11, a12, a22}. Returns false when the matrix is not positive definite.
bool cholesky2(const std::array<double, 3>& cov, std::array<double, 3>& chol) {
    if (!(cov[0] > 0.0)) return false;
    const double l11 = std::sqrt(cov[0]);
    const double l21 = cov[1] / l11;
    const double rem = cov[2] - l21 * l21;
    if (!(rem > 0.0)) return false;
    chol = {l11, l21, std::sqrt(rem)};
    return true;
}

// Running mean and covariance (Welford) of 2-d states.
struct RunningMoments {
    double count = 0.0;
    double mean1 = 0.0, mean2 = 0.0;
    double m11 = 0.0, m12 = 0.0, m22 = 0.0;

    void add(const ThetaSample& x) {
        count += 1.0;
        const double d1 = x.theta1 - mean1;
        const double d2 = x.theta2 - mean2;
        mean1 += d1 / count;
        mean2 += d2 / count;
        m11 += d1 * (x.theta1 - mean1);
        m12 += d1 * (x.theta2 - mean2);
        m22 += d2 * (x.theta2 - mean2);
    }

    std::array<double, 3> covariance() const {
        return {m11 / (count - 1.0), m12 / (count - 1.0), m22 / (count - 1.0)};
    }
};

[[noreturn]] void fail_state(const ThetaSample& theta, double value) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "non-finite log posterior " << value << " at theta1=" << theta.theta1
        << ", theta2=" << theta.theta2;
    throw SamplerFailure(msg.str());
}

}  // namespace

void PriorSpec::validate() const {
    if (!(sd1 > 0.0) || !(sd2 > 0.0)) throw InvalidArgument("prior sds must be positive");
    if (!std::isfinite(mean1) || !std::isfinite(mean2) || !std::isfinite(sd1) || !std::isfinite(sd2)) {
        throw InvalidArgument("prior parameters must be finite");
    }
}

void McmcConfig::validate() const {
    if (burn_in < 0) throw InvalidArgument("burn_in must be >= 0");
    if (kept < 1) throw InvalidArgument("kept must be >= 1");
    if (thin < 1) throw InvalidArgument("thin must be >= 1");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
        throw InvalidArgument("target_acceptance must lie in (0, 1)");
    }
}

double log_posterior(const ThetaSample& theta, const TrialHistory& history,
                     const DoseGrid& grid, const PriorSpec& prior) {
    double total = log_prior(theta, prior);
    for (const auto& cohort : history.cohorts) {
        const double eta = dlt_log_odds(theta, grid[cohort.dose_index], grid.ref_dose);
        // log p and log(1 - p) evaluated from the log-odds
        const double log_p = eta >= 0.0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
        const double log_q = log_p - eta;
        total += log_binomial_coefficient(cohort.n, cohort.dlt_count) + cohort.dlt_count * log_p +
                 (cohort.n - cohort.dlt_count) * log_q;
    }
    return total;
}

PooledLogPosterior::PooledLogPosterior(const TrialHistory& history, const DoseGrid& grid,
                                       const PriorSpec& prior, double centre)
    : prior_(prior), centre_(centre) {
    std::vector<double> dlt(grid.size(), 0.0);
    std::vector<double> total(grid.size(), 0.0);
    for (const auto& cohort : history.cohorts) {
        dlt.at(cohort.dose_index) += cohort.dlt_count;
        total.at(cohort.dose_index) += cohort.n;
        constant_ += log_binomial_coefficient(cohort.n, cohort.dlt_count);
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (total[i] > 0.0) {
            terms_.push_back({std::log(grid[i] / grid.ref_dose) - centre, dlt[i], total[i] - dlt[i]});
        }
    }
    constant_ -= 2.0 * kHalfLog2Pi + std::log(prior.sd1) + std::log(prior.sd2);
}

double PooledLogPosterior::sheared(const ThetaSample& point) const noexcept {
    const double slope = std::exp(point.theta2);
    const double z1 = (point.theta1 - slope * centre_ - prior_.mean1) / prior_.sd1;
    const double z2 = (point.theta2 - prior_.mean2) / prior_.sd2;
    double total = constant_ - 0.5 * (z1 * z1 + z2 * z2);
    for (const auto& term : terms_) {
        const double eta = point.theta1 + slope * term.log_ratio;
        const double sp = softplus(eta);  // -log(1 - p)
        total -= term.dlt * (sp - eta) + term.no_dlt * sp;
    }
    return total;
}

double PooledLogPosterior::operator()(const ThetaSample& theta) const noexcept {
    return sheared({theta.theta1 + std::exp(theta.theta2) * centre_, theta.theta2});
}

namespace {

// Multivariate t (5 dof) independence proposal in the sampler's coordinates.
class TProposal {
public:
    static constexpr double kDof = 5.0;

    bool fit(const RunningMoments& m, double inflation) {
        if (m.count <= 100.0) return false;
        auto cov = m.covariance();
        const double s2 = inflation * inflation * (kDof - 2.0) / kDof;
        for (auto& c : cov) c *= s2;
        if (!cholesky2(cov, chol_)) return false;
        mean1_ = m.mean1;
        mean2_ = m.mean2;
        return true;
    }

    template <typename Normal>
    ThetaSample draw(Rng& rng, Normal& normal) {
        const double z1 = normal(rng);
        const double z2 = normal(rng);
        const double w = std::sqrt(kDof / chi2_(rng));
        return {mean1_ + w * chol_[0] * z1, mean2_ + w * (chol_[1] * z1 + chol_[2] * z2)};
    }

    // up to a constant
    double log_density(const ThetaSample& x) const noexcept {
        const double y1 = (x.theta1 - mean1_) / chol_[0];
        const double y2 = (x.theta2 - mean2_ - chol_[1] * y1) / chol_[2];
        return -0.5 * (kDof + 2.0) * std::log1p((y1 * y1 + y2 * y2) / kDof);
    }

private:
    std::array<double, 3> chol_{};
    double mean1_ = 0.0, mean2_ = 0.0;
    std::gamma_distribution<double> chi2_{kDof / 2.0, 2.0};
};

}  // namespace

PosteriorSamples sample_posterior(const TrialHistory& history, const DoseGrid& grid,
                                  const PriorSpec& prior, const McmcConfig& config) {
    config.validate();
    prior.validate();
    history.validate(grid);

    // The chain moves in sheared coordinates (psi, theta2) with
    // psi = theta1 + exp(theta2) * centre, where centre is the patient-weighted
    // mean log dose ratio. psi is the log-odds at the data's centre, which the
    // likelihood pins down nearly independently of theta2. The shear has unit
    // Jacobian, so the target density is unchanged.
    double centre = 0.0;
    if (!history.empty()) {
        double weight = 0.0;
        for (const auto& c : history.cohorts) {
            centre += c.n * std::log(grid[c.dose_index] / grid.ref_dose);
            weight += c.n;
        }
        centre /= weight;
    }
    const PooledLogPosterior density(history, grid, prior, centre);
    auto to_theta = [centre](const ThetaSample& s) {
        return ThetaSample{s.theta1 - std::exp(s.theta2) * centre, s.theta2};
    };

    Rng rng(derive_seed(config.seed, kMcmcStream));
    std::normal_distribution<double> normal(0.0, 1.0);

    constexpr double kOptimalScale2d = 1.6829;  // 2.38 / sqrt(2)
    constexpr double kTInflation = 1.25;
    constexpr int kBatch = 50;

    ThetaSample current{prior.mean1 + std::exp(prior.mean2) * centre, prior.mean2};
    double current_lp = density.sheared(current);
    if (!std::isfinite(current_lp)) fail_state(to_theta(current), current_lp);

    std::array<double, 3> chol{prior.sd1, 0.0, prior.sd2};
    double log_scale = std::log(kOptimalScale2d);
    TProposal t_proposal;
    bool independence = false;

    long accepted = 0;
    long proposed = 0;
    auto metropolis = [&](const ThetaSample& proposal, double log_correction) -> bool {
        const double proposal_lp = density.sheared(proposal);
        if (!std::isfinite(proposal_lp)) fail_state(to_theta(proposal), proposal_lp);
        ++proposed;
        if (std::log(uniform01(rng)) < proposal_lp - current_lp + log_correction) {
            current = proposal;
            current_lp = proposal_lp;
            ++accepted;
            return true;
        }
        return false;
    };
    auto random_walk_step = [&]() -> bool {
        const double z1 = normal(rng);
        const double z2 = normal(rng);
        const double scale = std::exp(log_scale);
        return metropolis({current.theta1 + scale * chol[0] * z1,
                           current.theta2 + scale * (chol[1] * z1 + chol[2] * z2)},
                          0.0);
    };
    auto independence_step = [&] {
        const ThetaSample proposal = t_proposal.draw(rng, normal);
        metropolis(proposal, t_proposal.log_density(current) - t_proposal.log_density(proposal));
    };
    auto reshape = [&](const RunningMoments& m) {
        std::array<double, 3> candidate;
        if (m.count > 100.0 && cholesky2(m.covariance(), candidate)) {
            chol = candidate;
            log_scale = std::log(kOptimalScale2d);
        }
        if (t_proposal.fit(m, kTInflation)) independence = true;
    };

    // Burn-in, first half: random walk with Robbins-Monro scale adaptation per
    // batch. Second half: the proposal shape and a t independence proposal are
    // fitted to the first half, then refitted to the mixed second half.
    RunningMoments first_half, second_half;
    int batch_accepted = 0;
    int batch_index = 0;
    const int half = config.burn_in / 2;
    for (int it = 1; it <= config.burn_in; ++it) {
        batch_accepted += random_walk_step() ? 1 : 0;
        if (it <= half) {
            if (it > half / 2) first_half.add(current);
        } else {
            second_half.add(current);
            if (independence) {
                independence_step();
                second_half.add(current);
            }
        }
        if (it % kBatch == 0) {
            ++batch_index;
            const double rate = static_cast<double>(batch_accepted) / kBatch;
            log_scale += (rate - config.target_acceptance) * 2.0 / std::sqrt(batch_index);
            batch_accepted = 0;
        }
        if (it == half) reshape(first_half);
    }
    if (second_half.count > 100.0) {
        independence = false;
        reshape(second_half);
    }

    // Proposals are frozen from here on.
    accepted = 0;
    proposed = 0;
    PosteriorSamples out;
    out.seed = config.seed;
    out.draws.reserve(static_cast<std::size_t>(config.kept));
    for (int k = 0; k < config.kept; ++k) {
        for (int t = 0; t < config.thin; ++t) {
            random_walk_step();
            if (independence) independence_step();
        }
        out.draws.push_back(to_theta(current));
    }
    out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposed);
    return out;
}

double effective_sample_size(std::span<const double> chain) {
    const std::size_t n = chain.size();
    if (n < 4) return static_cast<double>(n);
    double mean = 0.0;
    for (double x : chain) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : chain) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n);
    if (var <= 0.0) return static_cast<double>(n);

    auto autocorr = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) acc += (chain[i] - mean) * (chain[i + lag] - mean);
        return acc / (static_cast<double>(n) * var);
    };

    // Geyer: sum consecutive pairs while they stay positive.
    double tau = -1.0;
    for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
        const double pair = autocorr(lag) + autocorr(lag + 1);
        if (pair <= 0.0) break;
        tau += 2.0 * pair;
    }
    return static_cast<double>(n) / std::max(tau, 1.0 / static_cast<double>(n));
}

}  // namespace bblrm

#pragma once

#include "lspe/estimators.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lspe {

/// c_xx = E||xx^H - K_x||_F^2, r_xx = E||xx^H||_F^2 for the i.i.d. Gaussian prior.
struct PriorConstants {
    double c_xx = 0.0;
    double r_xx = 0.0;
};

PriorConstants prior_constants(const SignalPrior& prior);

/// Minimum S-MSE of the LSPE:
/// c_xx - sum_{m,m'} [T^-1]_{mm'} tr(V_m^H V_m').
double smse_lspe(const LspeQuantities& q, const MeasurementSystem& sys,
                 const PriorConstants& consts, double ridge = kDefaultRidge);

struct SiError {
    double smse = 0.0;
    double beta_hat = 0.0;
};

/// S-MSE of the optimally scaled spectral initializer.
SiError smse_si(const LspeQuantities& q, const MeasurementSystem& sys, const PriorConstants& consts);

/// ||x_hat x_hat^H - x x^H||^2 <= 4 ||D - x x^H||^2 holds per instance.
double eer_bound(double smse);

/// min_alpha ||x - alpha x_hat||^2 / ||x||^2
double nmse(const Vec& x, const Vec& x_hat);

/// ||D - x x^H||_F^2
double spectral_error(const Mat& d, const Vec& x);
/// ||x_hat x_hat^H - x x^H||_F^2
double estimation_error(const Vec& x_hat, const Vec& x);

/// Pairwise sum in index order; result does not depend on how the values
/// were produced.
double pairwise_sum(std::span<const double> v);

/// Analytic S-MSE of a prepared estimator; NaN when no closed-form
/// quantities exist for its preprocessor.
double analytic_smse(const PreparedEstimator& est, const MeasurementSystem& sys,
                     double ridge = kDefaultRidge);

struct ErrorReport {
    double smse_analytic = std::numeric_limits<double>::quiet_NaN();
    double eer_bound = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> smse_empirical;
    std::optional<double> eer_empirical;
    std::optional<double> nmse_mean;
    std::size_t trials = 0;
    /// Trials where ||x_hat x_hat^H - xx^H||^2 > 4 ||D - xx^H||^2.
    std::size_t bound_violations = 0;
    /// max over trials of eer / (4 * spectral error)
    double max_bound_ratio = 0.0;
    std::size_t unconverged = 0;
};

struct TrialOptions {
    std::size_t trials = 500;
    std::uint64_t seed = 1;
    /// Trial k draws from stream stream_base + k.
    std::uint64_t stream_base = 0;
    unsigned threads = 1;
    double tol = kDefaultEigTol;
    int max_iter = kDefaultEigMaxIter;
    double ridge = kDefaultRidge;
};

/// Monte-Carlo errors of one estimator on one fixed system. Every trial
/// owns its own Rng stream and the means are reduced in trial order, so the
/// report is identical for any thread count.
ErrorReport empirical_errors(const MeasurementSystem& sys, const EstimatorSpec& spec,
                             const TrialOptions& opts);

struct MomentCheck {
    std::string lemma;
    std::string params;
    double analytic = 0.0;
    double estimate = 0.0;
    double std_error = 0.0;
    bool pass = false;
};

struct MomentReport {
    std::vector<MomentCheck> checks;
    bool all_passed() const;
};

/// Closed-form Gaussian moments checked by moment_oracles. Swappable so the
/// oracle harness itself can be tested against a corrupted formula.
struct MomentFormulas {
    /// Cov(u1^2, u2^2) for real jointly Gaussian (u1, u2).
    std::function<double(double mu1, double mu2, double cov)> folded_cov;
    /// Var(u^2) for real u ~ N(mu, var).
    std::function<double(double mu, double var)> folded_var;
    /// E[exp(-u^H G u)] for u ~ CN(0, sigma).
    std::function<double(const CMatrix& g, const CMatrix& sigma)> exp_quadratic;
    /// E[exp(-gamma^T u)] for u ~ N(mean, sigma).
    std::function<double(const RVector& gamma, const RVector& mean, const RMatrix& sigma)> exp_linear;

    static MomentFormulas gaussian();
};

inline constexpr double kMomentSigmas = 5.0;

MomentReport moment_oracles(Rng& rng, std::size_t samples = 1'000'000,
                            const MomentFormulas& formulas = MomentFormulas::gaussian());

}  // namespace lspe

#pragma once

#include "lspe/model.hpp"
#include "lspe/num_kernel.hpp"
#include "lspe/preprocess.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lspe {

enum class Provenance { LspeReal, LspeComplex, LspeExp, LspeGeneric, SpectralInit };

std::string to_string(Provenance p);

/// Relative ridge used when T turns out numerically singular.
inline constexpr double kDefaultRidge = 1e-9;

/// Moments that define the minimum S-MSE affine spectral matrix:
/// t_bar = E[T(y)], t_mat = Cov(T(y)), V_m = E[(T(y_m) - t_bar_m)(xx^H - K_x)].
/// V_m is held either as c_m a_m a_m^H (v_coeffs) or densely (generic_v).
struct LspeQuantities {
    Provenance provenance = Provenance::LspeGeneric;
    Preprocessor preproc;
    Field field = Field::Complex;
    CMatrix k_x;
    RVector t_bar;
    RMatrix t_mat;
    std::optional<RVector> v_coeffs;
    std::vector<CMatrix> generic_v;
    /// Factorization of t_mat computed once with kDefaultRidge.
    std::shared_ptr<const SpdFactor> t_factor;

    Eigen::Index m() const { return t_bar.size(); }
    bool rank_one() const { return v_coeffs.has_value(); }
    /// Cached factor when ridge matches, otherwise a fresh one.
    std::shared_ptr<const SpdFactor> factor(double ridge) const;
};

/// Real phase retrieval, identity preprocessing.
LspeQuantities quantities_real(const MeasurementSystem& sys);
/// Complex phase retrieval, identity preprocessing.
LspeQuantities quantities_complex(const MeasurementSystem& sys);
/// Complex phase retrieval, T(y) = exp(-gamma y).
LspeQuantities quantities_exp(const MeasurementSystem& sys, double gamma);

/// Caller-supplied moments for an arbitrary preprocessor.
LspeQuantities quantities_generic(CMatrix k_x, RVector t_bar, RMatrix t_mat,
                                  std::vector<CMatrix> v, const Preprocessor& preproc);

/// Sample-moment estimate of (t_bar, T, V_m) for any preprocessor; feeds
/// the generic engine when no closed form exists.
LspeQuantities estimate_quantities(const MeasurementSystem& sys, const Preprocessor& preproc,
                                   std::size_t samples, Rng& rng);

struct SpectralMatrix {
    Mat d;
    Provenance provenance = Provenance::LspeGeneric;
    /// Solved t for LSPEs; beta * T(y) for the spectral initializer.
    RVector t_weights;
};

struct Estimate {
    Vec x_hat;
    double lambda1 = 0.0;
    bool converged = false;
    int iters = 0;
};

/// D = K_x + sum_m t_m V_m with T t = T(y) - t_bar.
SpectralMatrix assemble(const LspeQuantities& q, const MeasurementSystem& sys, const RVector& y,
                        const Preprocessor& preproc, double ridge = kDefaultRidge);

/// D_beta = beta * sum_m T(y_m) a_m a_m^H
SpectralMatrix si_matrix(const MeasurementSystem& sys, const RVector& y,
                         const Preprocessor& preproc, double beta);

/// Numerator sum_m a_m^H V~_m a_m and denominator sum T~_{mm'} |a_m^H a_m'|^2
/// of the optimal spectral-initializer scale, with V~_m = V_m + t_bar_m K_x
/// and T~ = T + t_bar t_bar^T.
struct SiMoments {
    double numerator = 0.0;
    double denominator = 0.0;
};

SiMoments si_moments(const MeasurementSystem& sys, const LspeQuantities& q);

/// S-MSE-minimizing scale of D_beta.
double si_optimal_beta(const MeasurementSystem& sys, const Preprocessor& preproc,
                       const LspeQuantities& q);

/// Scaled leading eigenvector sqrt(lambda1) u1, or zero when lambda1 <= 0.
Estimate extract(const SpectralMatrix& d, double tol, int max_iter, Rng& rng);

/// lspe-r | lspe-c | lspe-exp:GAMMA | si:PREPROC
struct EstimatorSpec {
    enum class Kind { LspeReal, LspeComplex, LspeExp, SpectralInit };

    Kind kind = Kind::LspeComplex;
    Preprocessor preproc;

    static EstimatorSpec parse(const std::string& text);
    std::string name() const;
};

/// Closed-form quantities matching the estimator's preprocessor, when they
/// exist for the system's field (identity: real/complex, exp: complex).
std::optional<LspeQuantities> closed_form_quantities(const MeasurementSystem& sys,
                                                     const Preprocessor& preproc);

/// Per-system state for one estimator: quantities, factorization and the
/// spectral-initializer scale. Immutable, shared across trials.
class PreparedEstimator {
public:
    PreparedEstimator(const EstimatorSpec& spec, const MeasurementSystem& sys,
                      double ridge = kDefaultRidge);

    const EstimatorSpec& spec() const { return spec_; }
    const std::optional<LspeQuantities>& quantities() const { return q_; }
    /// Scale used by the spectral initializer (1 when no closed form exists).
    double beta() const { return beta_; }

    SpectralMatrix spectral_matrix(const MeasurementSystem& sys, const RVector& y) const;

private:
    EstimatorSpec spec_;
    std::optional<LspeQuantities> q_;
    double beta_ = 1.0;
    double ridge_;
};

}  // namespace lspe

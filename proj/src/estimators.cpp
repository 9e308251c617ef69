#include "lspe/estimators.hpp"

#include <algorithm>
#include <cmath>

namespace lspe {

namespace {

constexpr double kHermitianTol = 1e-10;

void require_field(const MeasurementSystem& sys, Field f, const char* who) {
    if (sys.field() != f) {
        throw std::invalid_argument(std::string(who) + ": requires a " + to_string(f) + " system");
    }
}

LspeQuantities rank_one_quantities(Provenance prov, const Preprocessor& preproc,
                                   const MeasurementSystem& sys, RVector t_bar, RMatrix t_mat,
                                   RVector coeffs) {
    LspeQuantities q;
    q.provenance = prov;
    q.preproc = preproc;
    q.field = sys.field();
    q.k_x = sys.prior().sigma_x_sq * CMatrix::Identity(sys.n(), sys.n());
    q.t_bar = std::move(t_bar);
    q.t_mat = 0.5 * (t_mat + t_mat.transpose());
    q.v_coeffs = std::move(coeffs);
    q.t_factor = std::make_shared<const SpdFactor>(q.t_mat, kDefaultRidge);
    return q;
}

// Symmetrize and check that the correction is at rounding level.
Mat hermitian_part(Field field, CMatrix d) {
    const CMatrix sym = 0.5 * (d + d.adjoint());
    const double scale = sym.size() == 0 ? 0.0 : sym.cwiseAbs().maxCoeff();
    const double corr = sym.size() == 0 ? 0.0 : (sym - d).cwiseAbs().maxCoeff();
    if (corr > kHermitianTol * std::max(scale, 1e-300)) {
        throw NumericalError("assembled spectral matrix is not Hermitian");
    }
    if (field == Field::Real) return Mat(field, sym.real().cast<cplx>());
    return Mat(field, sym);
}

// A^H diag(w) A
CMatrix weighted_gram(const CMatrix& a, const RVector& w) {
    return a.adjoint() * (w.cast<cplx>().asDiagonal() * a);
}

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::LspeReal: return "lspe_real";
        case Provenance::LspeComplex: return "lspe_complex";
        case Provenance::LspeExp: return "lspe_exp";
        case Provenance::LspeGeneric: return "lspe_generic";
        case Provenance::SpectralInit: return "spectral_init";
    }
    return "?";
}

std::shared_ptr<const SpdFactor> LspeQuantities::factor(double ridge) const {
    if (t_factor && t_factor->ridge() == ridge) return t_factor;
    return std::make_shared<const SpdFactor>(t_mat, ridge);
}

LspeQuantities quantities_real(const MeasurementSystem& sys) {
    require_field(sys, Field::Real, "quantities_real");
    const RMatrix cz = sys.c_z().real();
    const double s2 = sys.prior().sigma_x_sq;
    RVector t_bar = cz.diagonal() + sys.noise().mean_ey;
    RMatrix t_mat = 2.0 * cz.cwiseProduct(cz) + sys.noise().c_ey;
    RVector c = RVector::Constant(sys.m(), 2.0 * s2 * s2);
    return rank_one_quantities(Provenance::LspeReal, Preprocessor::identity(), sys,
                               std::move(t_bar), std::move(t_mat), std::move(c));
}

LspeQuantities quantities_complex(const MeasurementSystem& sys) {
    require_field(sys, Field::Complex, "quantities_complex");
    const CMatrix& cz = sys.c_z();
    const double s2 = sys.prior().sigma_x_sq;
    RVector t_bar = cz.diagonal().real() + sys.noise().mean_ey;
    RMatrix t_mat = cz.cwiseAbs2() + sys.noise().c_ey;
    RVector c = RVector::Constant(sys.m(), s2 * s2);
    return rank_one_quantities(Provenance::LspeComplex, Preprocessor::identity(), sys,
                               std::move(t_bar), std::move(t_mat), std::move(c));
}

LspeQuantities quantities_exp(const MeasurementSystem& sys, double gamma) {
    require_field(sys, Field::Complex, "quantities_exp");
    const Preprocessor preproc = Preprocessor::exponential(gamma);
    const CMatrix& cz = sys.c_z();
    const RMatrix& c_ey = sys.noise().c_ey;
    const double s2 = sys.prior().sigma_x_sq;
    const Eigen::Index m = sys.m();

    const RVector q = (gamma * cz.diagonal().real()).array() + 1.0;
    const RVector p =
        (-gamma * sys.noise().mean_ey.array() + 0.5 * gamma * gamma * c_ey.diagonal().array()).exp();

    RMatrix den = q * q.transpose() - gamma * gamma * cz.cwiseAbs2();
    if (den.minCoeff() <= 0.0) {
        throw NumericalError("quantities_exp: q q^T - gamma^2 |C_z|^2 has a nonpositive entry");
    }
    const RMatrix pp = p * p.transpose();
    RMatrix t_mat(m, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < m; ++i)
            t_mat(i, j) = pp(i, j) * (std::exp(gamma * gamma * c_ey(i, j)) / den(i, j) -
                                      1.0 / (q(i) * q(j)));

    RVector t_bar = p.cwiseQuotient(q);
    RVector c = (-gamma * s2 * s2 * p.array() / q.array().square()).matrix();
    return rank_one_quantities(Provenance::LspeExp, preproc, sys, std::move(t_bar),
                               std::move(t_mat), std::move(c));
}

LspeQuantities quantities_generic(CMatrix k_x, RVector t_bar, RMatrix t_mat,
                                  std::vector<CMatrix> v, const Preprocessor& preproc) {
    const Eigen::Index m = t_bar.size();
    if (t_mat.rows() != m || t_mat.cols() != m || static_cast<Eigen::Index>(v.size()) != m) {
        throw std::invalid_argument("quantities_generic: dimension mismatch");
    }
    for (const auto& vm : v) {
        if (vm.rows() != k_x.rows() || vm.cols() != k_x.cols()) {
            throw std::invalid_argument("quantities_generic: V_m shape differs from K_x");
        }
    }
    LspeQuantities q;
    q.provenance = Provenance::LspeGeneric;
    q.preproc = preproc;
    q.field = k_x.imag().cwiseAbs().maxCoeff() == 0.0 &&
                      std::all_of(v.begin(), v.end(),
                                  [](const CMatrix& x) { return x.imag().cwiseAbs().maxCoeff() == 0.0; })
                  ? Field::Real
                  : Field::Complex;
    q.k_x = std::move(k_x);
    q.t_bar = std::move(t_bar);
    q.t_mat = 0.5 * (t_mat + t_mat.transpose());
    q.generic_v = std::move(v);
    q.t_factor = std::make_shared<const SpdFactor>(q.t_mat, kDefaultRidge);
    return q;
}

LspeQuantities estimate_quantities(const MeasurementSystem& sys, const Preprocessor& preproc,
                                   std::size_t samples, Rng& rng) {
    if (samples < 2) throw std::invalid_argument("estimate_quantities: need at least 2 samples");
    const Eigen::Index m = sys.m();
    const Eigen::Index n = sys.n();
    const CMatrix k_x = sys.prior().sigma_x_sq * CMatrix::Identity(n, n);

    RVector sum_t = RVector::Zero(m);
    RMatrix sum_tt = RMatrix::Zero(m, m);
    std::vector<CMatrix> sum_tv(static_cast<std::size_t>(m), CMatrix::Zero(n, n));
    for (std::size_t s = 0; s < samples; ++s) {
        const Vec x = sample_signal(sys.prior(), rng);
        const RVector t = apply(preproc, forward_measure(sys, x, rng).y);
        const CMatrix xx = x.values() * x.values().adjoint() - k_x;
        sum_t += t;
        sum_tt.selfadjointView<Eigen::Lower>().rankUpdate(t);
        for (Eigen::Index i = 0; i < m; ++i) sum_tv[static_cast<std::size_t>(i)] += t(i) * xx;
    }
    const double ns = static_cast<double>(samples);
    RVector t_bar = sum_t / ns;
    RMatrix t_mat = sum_tt.selfadjointView<Eigen::Lower>();
    t_mat = (t_mat - ns * t_bar * t_bar.transpose()) / (ns - 1.0);
    // E[T (xx^H - K)] = E[(T - t_bar)(xx^H - K)] since xx^H - K is centered.
    for (auto& v : sum_tv) v /= ns;
    return quantities_generic(k_x, std::move(t_bar), std::move(t_mat), std::move(sum_tv), preproc);
}

SpectralMatrix assemble(const LspeQuantities& q, const MeasurementSystem& sys, const RVector& y,
                        const Preprocessor& preproc, double ridge) {
    if (!(preproc == q.preproc)) {
        throw std::invalid_argument("assemble: preprocessor " + preproc.name() +
                                    " does not match quantities built for " + q.preproc.name());
    }
    if (y.size() != q.m() || sys.m() != q.m()) {
        throw std::invalid_argument("assemble: y has length " + std::to_string(y.size()) +
                                    ", expected M=" + std::to_string(q.m()));
    }
    const RVector rhs = apply(preproc, y) - q.t_bar;
    RVector t = q.factor(ridge)->solve(rhs);

    CMatrix d;
    if (q.rank_one()) {
        d = q.k_x + weighted_gram(sys.a().values(), t.cwiseProduct(*q.v_coeffs));
    } else {
        d = q.k_x;
        for (Eigen::Index i = 0; i < q.m(); ++i) d += t(i) * q.generic_v[static_cast<std::size_t>(i)];
    }
    return {hermitian_part(sys.field(), std::move(d)), q.provenance, std::move(t)};
}

SpectralMatrix si_matrix(const MeasurementSystem& sys, const RVector& y,
                         const Preprocessor& preproc, double beta) {
    if (!std::isfinite(beta)) throw std::invalid_argument("si_matrix: beta must be finite");
    if (y.size() != sys.m()) {
        throw std::invalid_argument("si_matrix: y has length " + std::to_string(y.size()) +
                                    ", expected M=" + std::to_string(sys.m()));
    }
    RVector w = beta * apply(preproc, y);
    CMatrix d = weighted_gram(sys.a().values(), w);
    return {hermitian_part(sys.field(), std::move(d)), Provenance::SpectralInit, std::move(w)};
}

SiMoments si_moments(const MeasurementSystem& sys, const LspeQuantities& q) {
    const CMatrix& a = sys.a().values();
    const CMatrix& g = sys.gram();
    const Eigen::Index m = sys.m();
    if (q.m() != m) throw std::invalid_argument("si_moments: quantities built for another system");

    // a_m^H K_x a_m for every m.
    const RVector aka = (a * q.k_x * a.adjoint()).diagonal().real();
    SiMoments out;
    for (Eigen::Index i = 0; i < m; ++i) {
        double av_a = 0.0;
        if (q.rank_one()) {
            const double norm2 = g(i, i).real();
            av_a = (*q.v_coeffs)(i) * norm2 * norm2;
        } else {
            av_a = (a.row(i) * q.generic_v[static_cast<std::size_t>(i)] * a.row(i).adjoint())(0).real();
        }
        out.numerator += av_a + q.t_bar(i) * aka(i);
    }
    const RMatrix t_tilde = q.t_mat + q.t_bar * q.t_bar.transpose();
    out.denominator = t_tilde.cwiseProduct(g.cwiseAbs2()).sum();
    return out;
}

double si_optimal_beta(const MeasurementSystem& sys, const Preprocessor& preproc,
                       const LspeQuantities& q) {
    if (!(preproc == q.preproc)) {
        throw std::invalid_argument("si_optimal_beta: quantities belong to " + q.preproc.name());
    }
    const SiMoments mo = si_moments(sys, q);
    if (!(mo.denominator > 0.0)) throw NumericalError("si_optimal_beta: zero denominator");
    return mo.numerator / mo.denominator;
}

Estimate extract(const SpectralMatrix& d, double tol, int max_iter, Rng& rng) {
    const Eigenpair ep = leading_eigenpair(d.d, tol, max_iter, rng);
    Estimate e;
    e.lambda1 = ep.value;
    e.converged = ep.converged;
    e.iters = ep.iters;
    const double scale = ep.value > 0.0 ? std::sqrt(ep.value) : 0.0;
    CVector x = scale * ep.vector;
    if (d.d.field() == Field::Real) x = x.real().cast<cplx>();
    e.x_hat = Vec(d.d.field(), std::move(x));
    return e;
}

EstimatorSpec EstimatorSpec::parse(const std::string& text) {
    if (text == "lspe-r") return {Kind::LspeReal, Preprocessor::identity()};
    if (text == "lspe-c") return {Kind::LspeComplex, Preprocessor::identity()};
    if (text.rfind("lspe-exp:", 0) == 0) {
        const Preprocessor p = Preprocessor::parse("exp:" + text.substr(9));
        return {Kind::LspeExp, p};
    }
    if (text.rfind("si:", 0) == 0) return {Kind::SpectralInit, Preprocessor::parse(text.substr(3))};
    throw ParseError("unknown estimator '" + text + "' (expected lspe-r, lspe-c, lspe-exp:GAMMA or si:PREPROC)");
}

std::string EstimatorSpec::name() const {
    switch (kind) {
        case Kind::LspeReal: return "lspe-r";
        case Kind::LspeComplex: return "lspe-c";
        case Kind::LspeExp: return "lspe-exp:" + format_double(preproc.param);
        case Kind::SpectralInit: return "si:" + preproc.name();
    }
    return "?";
}

std::optional<LspeQuantities> closed_form_quantities(const MeasurementSystem& sys,
                                                     const Preprocessor& preproc) {
    switch (preproc.kind) {
        case Preprocessor::Kind::Identity:
            return sys.field() == Field::Real ? quantities_real(sys) : quantities_complex(sys);
        case Preprocessor::Kind::Exponential:
            if (sys.field() == Field::Complex) return quantities_exp(sys, preproc.param);
            return std::nullopt;
        default:
            return std::nullopt;
    }
}

PreparedEstimator::PreparedEstimator(const EstimatorSpec& spec, const MeasurementSystem& sys,
                                     double ridge)
    : spec_(spec), ridge_(ridge) {
    switch (spec.kind) {
        case EstimatorSpec::Kind::LspeReal:
            q_ = quantities_real(sys);
            break;
        case EstimatorSpec::Kind::LspeComplex:
            q_ = quantities_complex(sys);
            break;
        case EstimatorSpec::Kind::LspeExp:
            q_ = quantities_exp(sys, spec.preproc.param);
            break;
        case EstimatorSpec::Kind::SpectralInit:
            q_ = closed_form_quantities(sys, spec.preproc);
            if (q_) beta_ = si_optimal_beta(sys, spec.preproc, *q_);
            break;
    }
    if (q_ && spec.kind != EstimatorSpec::Kind::SpectralInit && ridge != kDefaultRidge) {
        q_->t_factor = q_->factor(ridge);
    }
}

SpectralMatrix PreparedEstimator::spectral_matrix(const MeasurementSystem& sys,
                                                  const RVector& y) const {
    if (spec_.kind == EstimatorSpec::Kind::SpectralInit) return si_matrix(sys, y, spec_.preproc, beta_);
    return assemble(*q_, sys, y, spec_.preproc, ridge_);
}

}  // namespace lspe

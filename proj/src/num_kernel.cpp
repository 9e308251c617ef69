#include "lspe/num_kernel.hpp"

#include <cmath>
#include <limits>

namespace lspe {

namespace {

// Cholesky pivots below this fraction of the largest diagonal entry are
// treated as a failed factorization (numerically rank-deficient input).
constexpr double kPivotTol = 1e-12;

void require_same_shape(const Mat& a, const Mat& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
    if (a.field() != b.field()) {
        throw std::invalid_argument(std::string(what) + ": field mismatch");
    }
}

bool factor_ok(const Eigen::LLT<RMatrix>& llt, double max_diag) {
    if (llt.info() != Eigen::Success) return false;
    const auto& l = llt.matrixLLT();
    for (Eigen::Index k = 0; k < l.rows(); ++k) {
        const double p = l(k, k);
        if (!std::isfinite(p) || p * p <= kPivotTol * max_diag) return false;
    }
    return true;
}

}  // namespace

std::string to_string(Field f) { return f == Field::Real ? "real" : "complex"; }

Field parse_field(const std::string& s) {
    if (s == "real" || s == "R") return Field::Real;
    if (s == "complex" || s == "C") return Field::Complex;
    throw std::invalid_argument("unknown field '" + s + "' (expected real or complex)");
}

Mat::Mat(Field field, CMatrix values) : field_(field), values_(std::move(values)) {
    if (field_ == Field::Real && values_.size() > 0 && values_.imag().cwiseAbs().maxCoeff() != 0.0) {
        throw std::invalid_argument("Mat: real matrix with nonzero imaginary part");
    }
}

Mat::Mat(const RMatrix& values) : field_(Field::Real), values_(values.cast<cplx>()) {}

Mat Mat::zeros(Field field, Eigen::Index rows, Eigen::Index cols) {
    return Mat(field, CMatrix::Zero(rows, cols));
}

Mat Mat::identity(Field field, Eigen::Index n) { return Mat(field, CMatrix::Identity(n, n)); }

double Mat::max_abs() const { return values_.size() == 0 ? 0.0 : values_.cwiseAbs().maxCoeff(); }

bool Mat::is_hermitian(double rel_tol) const {
    if (rows() != cols()) return false;
    if (values_.size() == 0) return true;
    const double diff = (values_ - values_.adjoint()).cwiseAbs().maxCoeff();
    return diff <= rel_tol * max_abs();
}

Vec::Vec(Field field, CVector values) : field_(field), values_(std::move(values)) {
    if (field_ == Field::Real && values_.size() > 0 && values_.imag().cwiseAbs().maxCoeff() != 0.0) {
        throw std::invalid_argument("Vec: real vector with nonzero imaginary part");
    }
}

Vec::Vec(const RVector& values) : field_(Field::Real), values_(values.cast<cplx>()) {}

Mat hadamard(const Mat& a, const Mat& b, HadamardMode mode) {
    require_same_shape(a, b, "hadamard");
    const CMatrix& av = a.values();
    const CMatrix& bv = b.values();
    switch (mode) {
        case HadamardMode::Product:
            return Mat(a.field(), av.cwiseProduct(bv));
        case HadamardMode::ConjProduct:
            return Mat(a.field(), av.cwiseProduct(bv.conjugate()));
        case HadamardMode::Divide:
            for (Eigen::Index j = 0; j < bv.cols(); ++j)
                for (Eigen::Index i = 0; i < bv.rows(); ++i)
                    if (bv(i, j) == cplx(0.0, 0.0))
                        throw NumericalError("hadamard divide: zero divisor at (" +
                                             std::to_string(i) + "," + std::to_string(j) + ")");
            return Mat(a.field(), av.cwiseQuotient(bv));
    }
    throw std::logic_error("hadamard: bad mode");
}

SpdFactor::SpdFactor(const RMatrix& t, double ridge) : ridge_(ridge) {
    if (t.rows() != t.cols()) throw std::invalid_argument("solve_spd: matrix not square");
    if (ridge < 0.0) throw std::invalid_argument("solve_spd: negative ridge");
    const double scale = t.size() == 0 ? 0.0 : t.cwiseAbs().maxCoeff();
    if (t.size() > 0 && (t - t.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw std::invalid_argument("solve_spd: matrix not symmetric");
    }
    const double max_diag = t.size() == 0 ? 0.0 : t.diagonal().maxCoeff();
    llt_.compute(t);
    if (factor_ok(llt_, max_diag)) return;

    const double shift = ridge * t.diagonal().mean();
    if (ridge > 0.0 && shift > 0.0) {
        RMatrix shifted = t;
        shifted.diagonal().array() += shift;
        llt_.compute(shifted);
        if (factor_ok(llt_, max_diag + shift)) {
            regularized_ = true;
            return;
        }
    }
    throw NumericalError("solve_spd: factorization failed (rank-deficient T, ridge " +
                         std::to_string(ridge) + ")");
}

RVector SpdFactor::solve(const RVector& rhs) const {
    if (rhs.size() != size()) {
        throw std::invalid_argument("solve_spd: rhs length " + std::to_string(rhs.size()) +
                                    " != " + std::to_string(size()));
    }
    return llt_.solve(rhs);
}

RMatrix SpdFactor::solve(const RMatrix& rhs) const {
    if (rhs.rows() != size()) throw std::invalid_argument("solve_spd: rhs row mismatch");
    return llt_.solve(rhs);
}

SpdSolution solve_spd(const RMatrix& t, const RVector& rhs, double ridge) {
    SpdFactor f(t, ridge);
    return {f.solve(rhs), f.regularized()};
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    auto splitmix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return splitmix(splitmix(a) ^ (b + 0x632be59bd9b4e019ULL));
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(mix_seed(seed, stream)) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

cplx Rng::complex_normal(double variance) {
    const double sd = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {sd * re, sd * im};
}

Vec sample_gaussian(Rng& rng, Eigen::Index n, Field field, double variance) {
    if (!(variance > 0.0) || !std::isfinite(variance)) {
        throw std::invalid_argument("sample_gaussian: variance must be positive");
    }
    CVector v(n);
    if (field == Field::Real) {
        const double sd = std::sqrt(variance);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = cplx(sd * rng.normal(), 0.0);
    } else {
        for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.complex_normal(variance);
    }
    return Vec(field, std::move(v));
}

void normalize_phase(CVector& v) {
    const double scale = v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
    if (scale == 0.0) return;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double mag = std::abs(v(i));
        if (mag > 1e-12 * scale) {
            v *= std::conj(v(i)) / mag;
            v(i) = cplx(std::abs(v(i)), 0.0);
            return;
        }
    }
}

Eigenpair leading_eigenpair(const Mat& d, double tol, int max_iter, Rng& rng) {
    if (!(tol > 0.0)) throw std::invalid_argument("leading_eigenpair: tol must be positive");
    if (d.rows() == 0 || !d.is_hermitian()) {
        throw std::invalid_argument("leading_eigenpair: input is not a nonempty Hermitian matrix");
    }
    const CMatrix& a = d.values();
    const Eigen::Index n = a.rows();
    const double shift = a.cwiseAbs().rowwise().sum().maxCoeff();

    Eigenpair out;
    if (shift == 0.0) {
        out.vector = CVector::Unit(n, 0);
        out.converged = true;
        return out;
    }

    CVector u = sample_gaussian(rng, n, d.field(), 1.0).values();
    u.normalize();

    for (int k = 1; k <= max_iter; ++k) {
        CVector w = a * u + shift * u;
        const double nw = w.norm();
        if (nw == 0.0 || !std::isfinite(nw)) break;
        w /= nw;
        const double change = (w - u).norm();
        u = std::move(w);
        out.iters = k;
        if (change < tol) {
            out.converged = true;
            break;
        }
    }

    // Rayleigh-quotient polish: a converged power iterate sits next to the
    // leading eigenvector, so inverse iteration with the Rayleigh shift
    // stays on it and drives the residual to rounding level.
    if (out.converged) {
        double mu = (u.adjoint() * a * u)(0).real();
        double residual = (a * u - mu * u).norm();
        for (int k = 0; k < 3 && residual > 0.0; ++k) {
            // Offset by a few ulps of the matrix scale so an exact eigenvalue
            // does not make the shifted matrix numerically singular.
            CMatrix shifted = a;
            shifted.diagonal().array() -= mu + 16.0 * std::numeric_limits<double>::epsilon() * shift;
            CVector v = shifted.partialPivLu().solve(u);
            const double nv = v.norm();
            if (!std::isfinite(nv) || nv == 0.0) break;
            v /= nv;
            if (d.field() == Field::Real) v = v.real().cast<cplx>();
            const double mu_v = (v.adjoint() * a * v)(0).real();
            const double res_v = (a * v - mu_v * v).norm();
            if (!(res_v < residual)) break;
            u = std::move(v);
            mu = mu_v;
            residual = res_v;
        }
    }

    normalize_phase(u);
    out.value = (u.adjoint() * a * u)(0).real();
    out.vector = std::move(u);
    return out;
}

}  // namespace lspe

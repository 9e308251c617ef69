#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace lspe {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Raised when a computation cannot produce a meaningful number
/// (failed factorization, zero denominator, pole hit).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Field { Real, Complex };

std::string to_string(Field f);
Field parse_field(const std::string& s);

/// Dense matrix tagged with its scalar field. Real matrices are stored in
/// complex form with an identically zero imaginary part.
class Mat {
public:
    Mat() = default;
    Mat(Field field, CMatrix values);
    explicit Mat(const RMatrix& values);

    static Mat zeros(Field field, Eigen::Index rows, Eigen::Index cols);
    static Mat identity(Field field, Eigen::Index n);

    Field field() const { return field_; }
    Eigen::Index rows() const { return values_.rows(); }
    Eigen::Index cols() const { return values_.cols(); }
    const CMatrix& values() const { return values_; }
    cplx operator()(Eigen::Index r, Eigen::Index c) const { return values_(r, c); }

    /// Real part; only meaningful (lossless) for Real matrices.
    RMatrix real() const { return values_.real(); }

    double max_abs() const;
    /// max|A - A^H| <= 1e-10 * max|A|
    bool is_hermitian(double rel_tol = 1e-10) const;

private:
    Field field_ = Field::Complex;
    CMatrix values_;
};

/// Field-tagged vector, same storage convention as Mat.
class Vec {
public:
    Vec() = default;
    Vec(Field field, CVector values);
    explicit Vec(const RVector& values);

    Field field() const { return field_; }
    Eigen::Index size() const { return values_.size(); }
    const CVector& values() const { return values_; }
    cplx operator()(Eigen::Index i) const { return values_(i); }

private:
    Field field_ = Field::Complex;
    CVector values_;
};

enum class HadamardMode { Product, ConjProduct, Divide };

Mat hadamard(const Mat& a, const Mat& b, HadamardMode mode);

/// Cholesky factorization of a real symmetric matrix with a single
/// ridge-regularized retry. Immutable after construction.
class SpdFactor {
public:
    SpdFactor(const RMatrix& t, double ridge);

    RVector solve(const RVector& rhs) const;
    RMatrix solve(const RMatrix& rhs) const;

    bool regularized() const { return regularized_; }
    double ridge() const { return ridge_; }
    Eigen::Index size() const { return llt_.matrixLLT().rows(); }

private:
    Eigen::LLT<RMatrix> llt_;
    double ridge_;
    bool regularized_ = false;
};

struct SpdSolution {
    RVector x;
    bool regularized = false;
};

SpdSolution solve_spd(const RMatrix& t, const RVector& rhs, double ridge);

/// Seeded Gaussian source. Identical (seed, stream) pairs give identical
/// sequences: the engine is mt19937_64 and the normal transform is the
/// polar method, neither of which depends on the standard library vendor.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double normal();
    /// Circularly symmetric, E|z|^2 = variance.
    cplx complex_normal(double variance);

    std::uint64_t next_u64() { return engine_(); }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Mix two 64-bit values into one (splitmix64 finalizer chain).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

Vec sample_gaussian(Rng& rng, Eigen::Index n, Field field, double variance);

struct Eigenpair {
    double value = 0.0;
    CVector vector;
    bool converged = false;
    int iters = 0;
};

inline constexpr double kDefaultEigTol = 1e-10;
inline constexpr int kDefaultEigMaxIter = 1000;

/// Algebraically largest eigenpair of a Hermitian matrix by power iteration
/// on d + c*I with c the largest absolute row sum. The vector is unit-norm
/// with its first nonzero component real and positive.
Eigenpair leading_eigenpair(const Mat& d, double tol, int max_iter, Rng& rng);

/// Rotate v so that its first component with |v_i| > eps is real positive.
void normalize_phase(CVector& v);

}  // namespace lspe

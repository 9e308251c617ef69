#pragma once

#include "lspe/num_kernel.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lspe {

/// Malformed matrix, measurement or config input.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// i.i.d. zero-mean Gaussian signal prior, K_x = sigma_x_sq * I.
struct SignalPrior {
    Eigen::Index n = 1;
    double sigma_x_sq = 1.0;
    Field field = Field::Complex;

    void validate() const;
};

/// Signal noise e^z ~ (C)N(0, c_ez) and measurement noise
/// e^y ~ N(mean_ey, c_ey), both M-dimensional.
struct NoiseModel {
    CMatrix c_ez;
    RVector mean_ey;
    RMatrix c_ey;

    static NoiseModel noiseless(Eigen::Index m);
    /// c_ez = var_ez * I, mean_ey = mean_ey * 1, c_ey = var_ey * I.
    static NoiseModel white(Eigen::Index m, double var_ez, double mean_ey, double var_ey);

    Eigen::Index m() const { return mean_ey.size(); }
    void validate(Field field) const;
};

enum class EnsembleKind { IidGaussian, RowCorrelated, FromFile };

struct Ensemble {
    EnsembleKind kind = EnsembleKind::IidGaussian;
    double rho = 0.0;
    std::string path;
    Eigen::Index m = 1;
    Eigen::Index n = 1;
    Field field = Field::Complex;

    void validate() const;
};

/// Everything that defines y = |A x + e^z|^2 + e^y. Immutable.
class MeasurementSystem {
public:
    MeasurementSystem(Mat a, SignalPrior prior, NoiseModel noise);

    const Mat& a() const { return a_; }
    const SignalPrior& prior() const { return prior_; }
    const NoiseModel& noise() const { return noise_; }
    /// C_z = sigma_x^2 A A^H + C_{e^z}
    const CMatrix& c_z() const { return c_z_; }
    /// G = A A^H
    const CMatrix& gram() const { return gram_; }

    Field field() const { return a_.field(); }
    Eigen::Index m() const { return a_.rows(); }
    Eigen::Index n() const { return a_.cols(); }

    /// Row-permuted copy: rows of A, noise means and covariances are
    /// permuted jointly, row i of the result is row perm[i] of this.
    MeasurementSystem permuted(const std::vector<Eigen::Index>& perm) const;

    /// F with F F^H = C_{e^z}; empty for a zero covariance.
    const std::optional<CMatrix>& ez_factor() const { return ez_factor_; }
    /// F with F F^T = C_{e^y}; empty for a zero covariance.
    const std::optional<RMatrix>& ey_factor() const { return ey_factor_; }

private:
    Mat a_;
    SignalPrior prior_;
    NoiseModel noise_;
    CMatrix c_z_;
    CMatrix gram_;
    // Square-root factors used to draw correlated noise; empty when zero.
    std::optional<CMatrix> ez_factor_;
    std::optional<RMatrix> ey_factor_;
};

struct Measurement {
    RVector y;
    CVector z;
};

MeasurementSystem build_system(const Ensemble& ens, const SignalPrior& prior,
                               const NoiseModel& noise, Rng& rng);

Measurement forward_measure(const MeasurementSystem& sys, const Vec& x, Rng& rng);

Vec sample_signal(const SignalPrior& prior, Rng& rng);

/// Text matrix format: header "M N R|C", then M rows of N entries;
/// complex entries are written re:im.
Mat read_matrix(std::istream& in);
Mat read_matrix_file(const std::string& path);
void write_matrix(std::ostream& out, const Mat& a);
void write_matrix_file(const std::string& path, const Mat& a);

/// One decimal per line.
RVector read_measurements_file(const std::string& path);

/// Shortest decimal that round-trips the double exactly.
std::string format_double(double v);

}  // namespace lspe

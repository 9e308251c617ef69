#pragma once

#include "lspe/analysis.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lspe {

enum class Mode { Sweep, Validate, Estimate, Moments };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

/// Invalid configuration; message carries the offending line when known.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    Mode mode = Mode::Sweep;

    EnsembleKind ensemble = EnsembleKind::IidGaussian;
    double rho = 0.0;
    std::string matrix_path;
    Field field = Field::Complex;

    double sigma_x_sq = 1.0;
    double noise_ez = 0.0;
    double noise_ey_mean = 0.0;
    double noise_ey = 0.0;

    std::vector<EstimatorSpec> estimators;
    std::vector<double> delta_grid;
    Eigen::Index n = 16;
    std::vector<Eigen::Index> n_grid;
    std::size_t trials = 500;
    std::uint64_t seed = 1;
    std::string output_path;
    std::string measurements_path;
    std::size_t average_matrices = 1;
    std::size_t moment_samples = 1'000'000;
    unsigned threads = 1;
    double tol = kDefaultEigTol;
    int max_iter = kDefaultEigMaxIter;
    double ridge = kDefaultRidge;

    void validate() const;
};

/// Flat key=value text. Keys before the first [section] apply to every
/// mode; keys inside [sweep], [validate], [estimate] or [moments] apply
/// only when that mode runs. '#' starts a comment. Relative paths resolve
/// against base_dir.
ExperimentConfig parse_config(const std::string& text, Mode mode,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path, Mode mode);

struct ResultRow {
    std::string estimator;
    Eigen::Index n = 0;
    Eigen::Index m = 0;
    double delta = 0.0;
    double nmse_mean = 0.0;
    double smse_analytic = 0.0;
    double smse_empirical = 0.0;
    double eer_empirical = 0.0;
    double eer_bound = 0.0;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    /// Not written to CSV.
    std::size_t bound_violations = 0;
};

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg);
std::vector<ResultRow> run_validate(const ExperimentConfig& cfg);

struct EstimateResult {
    Vec x_hat;
    double lambda1 = 0.0;
    bool converged = false;
    int iters = 0;
    double smse_analytic = 0.0;
};

/// Loads A and y, writes x_hat (N x 1 matrix file) to cfg.output_path and
/// key=value metadata to cfg.output_path + ".meta" when a path is set.
EstimateResult run_estimate(const ExperimentConfig& cfg);

/// Runs the Gaussian moment oracles and writes a pass/fail table.
MomentReport run_moments(const ExperimentConfig& cfg);

inline constexpr const char* kCsvHeader =
    "estimator,n,m,delta,nmse_mean,smse_analytic,smse_empirical,eer_empirical,eer_bound,trials,seed";

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::string to_csv(const std::vector<ResultRow>& rows);
void write_moment_table(std::ostream& out, const MomentReport& report);

/// 10 log10(eer_empirical / eer_bound)
double eer_gap_db(const ResultRow& row);

}  // namespace lspe

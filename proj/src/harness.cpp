#include "lspe/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace lspe {

namespace {

const std::set<std::string> kKnownKeys = {
    "seed",      "threads",      "field",          "ensemble",     "sigma_x_sq",
    "noise_ez",  "noise_ey_mean", "noise_ey",      "estimators",   "estimator",
    "delta_grid", "n",           "n_grid",         "trials",       "output",
    "matrix",    "measurements", "average_matrices", "moment_samples", "tol",
    "max_iter",  "ridge"};

struct Entry {
    std::string value;
    std::size_t line = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

[[noreturn]] void fail(const Entry& e, const std::string& key, const std::string& msg) {
    throw ConfigError("line " + std::to_string(e.line) + ": " + key + ": " + msg);
}

double to_double(const Entry& e, const std::string& key, const std::string& tok) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || tok.empty() || !std::isfinite(v)) {
        fail(e, key, "expected a number, got '" + tok + "'");
    }
    return v;
}

std::uint64_t to_u64(const Entry& e, const std::string& key, const std::string& tok) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
        fail(e, key, "expected a nonnegative integer, got '" + tok + "'");
    }
    return v;
}

std::string resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    if (path.is_absolute() || base.empty()) return path.string();
    return (base / path).string();
}

std::string format17(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

NoiseModel noise_for(const ExperimentConfig& cfg, Eigen::Index m) {
    return NoiseModel::white(m, cfg.noise_ez, cfg.noise_ey_mean, cfg.noise_ey);
}

// Stream layout: systems live in the top half of the stream space, trials
// for point p and matrix k start at ((p * K + k) + 1) << 32.
std::uint64_t system_stream(std::size_t point, std::size_t k, std::size_t kmax) {
    return (1ULL << 63) | static_cast<std::uint64_t>(point * kmax + k);
}

std::uint64_t trial_stream_base(std::size_t point, std::size_t k, std::size_t kmax) {
    return static_cast<std::uint64_t>(point * kmax + k + 1) << 32;
}

// One (n, m) point: K matrices, every estimator on the same instances.
std::vector<ResultRow> run_point(const ExperimentConfig& cfg, std::size_t point, Eigen::Index n,
                                 Eigen::Index m, double delta) {
    const std::size_t kmax = cfg.average_matrices;
    std::vector<ResultRow> rows;
    for (const auto& spec : cfg.estimators) {
        ResultRow row;
        row.estimator = spec.name();
        row.seed = cfg.seed;
        rows.push_back(row);
    }
    for (std::size_t k = 0; k < kmax; ++k) {
        SignalPrior prior{n, cfg.sigma_x_sq, cfg.field};
        Ensemble ens;
        ens.kind = cfg.ensemble;
        ens.rho = cfg.rho;
        ens.path = cfg.matrix_path;
        ens.m = cfg.ensemble == EnsembleKind::FromFile ? 0 : m;
        ens.n = cfg.ensemble == EnsembleKind::FromFile ? 0 : n;
        ens.field = cfg.field;
        if (cfg.ensemble == EnsembleKind::FromFile) {
            const Mat a = read_matrix_file(cfg.matrix_path);
            prior.n = a.cols();
            m = a.rows();
            n = a.cols();
            delta = static_cast<double>(m) / static_cast<double>(n);
        }
        Rng sys_rng(cfg.seed, system_stream(point, k, kmax));
        const MeasurementSystem sys = build_system(ens, prior, noise_for(cfg, m), sys_rng);

        TrialOptions opts;
        opts.trials = cfg.trials;
        opts.seed = cfg.seed;
        opts.stream_base = trial_stream_base(point, k, kmax);
        opts.threads = cfg.threads;
        opts.tol = cfg.tol;
        opts.max_iter = cfg.max_iter;
        opts.ridge = cfg.ridge;
        for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
            const ErrorReport r = empirical_errors(sys, cfg.estimators[e], opts);
            ResultRow& row = rows[e];
            row.nmse_mean += *r.nmse_mean;
            row.smse_analytic += r.smse_analytic;
            row.smse_empirical += *r.smse_empirical;
            row.eer_empirical += *r.eer_empirical;
            row.bound_violations += r.bound_violations;
        }
    }
    const double kd = static_cast<double>(kmax);
    for (auto& row : rows) {
        row.n = n;
        row.m = m;
        row.delta = delta;
        row.nmse_mean /= kd;
        row.smse_analytic /= kd;
        row.smse_empirical /= kd;
        row.eer_empirical /= kd;
        row.eer_bound = 4.0 * row.smse_analytic;
        row.trials = cfg.trials * kmax;
    }
    return rows;
}

void sort_rows(std::vector<ResultRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        if (a.estimator != b.estimator) return a.estimator < b.estimator;
        if (a.delta != b.delta) return a.delta < b.delta;
        return a.n < b.n;
    });
}

}  // namespace

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Sweep: return "sweep";
        case Mode::Validate: return "validate";
        case Mode::Estimate: return "estimate";
        case Mode::Moments: return "moments";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "sweep") return Mode::Sweep;
    if (s == "validate") return Mode::Validate;
    if (s == "estimate") return Mode::Estimate;
    if (s == "moments") return Mode::Moments;
    throw ConfigError("unknown mode '" + s + "'");
}

void ExperimentConfig::validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (average_matrices < 1) throw ConfigError("average_matrices must be >= 1");
    if (!(sigma_x_sq > 0.0)) throw ConfigError("sigma_x_sq must be positive");
    if (noise_ez < 0.0 || noise_ey < 0.0) throw ConfigError("noise variances must be >= 0");
    if (ensemble == EnsembleKind::RowCorrelated && !(rho >= 0.0 && rho < 1.0)) {
        throw ConfigError("row_correlated rho must lie in [0, 1)");
    }
    for (double d : delta_grid)
        if (!(d >= 1.0)) throw ConfigError("delta_grid entries must be >= 1");
    if (mode != Mode::Moments && estimators.empty()) throw ConfigError("no estimator configured");
    for (const auto& e : estimators) {
        if (e.kind == EstimatorSpec::Kind::LspeReal && field != Field::Real) {
            throw ConfigError("estimator lspe-r needs field = real");
        }
        if ((e.kind == EstimatorSpec::Kind::LspeComplex || e.kind == EstimatorSpec::Kind::LspeExp) &&
            field != Field::Complex) {
            throw ConfigError("estimator " + e.name() + " needs field = complex");
        }
    }
}

ExperimentConfig parse_config(const std::string& text, Mode mode,
                              const std::filesystem::path& base_dir) {
    std::map<std::string, Entry> global, section;
    std::string current;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
            current = trim(line.substr(1, line.size() - 2));
            try {
                parse_mode(current);
            } catch (const ConfigError&) {
                throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + current + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!kKnownKeys.count(key)) {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        if (current.empty()) {
            global[key] = {value, lineno};
        } else if (current == to_string(mode)) {
            section[key] = {value, lineno};
        }
    }
    for (auto& [k, v] : section) global[k] = v;
    const auto& kv = global;
    auto get = [&](const std::string& key) -> const Entry* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };

    ExperimentConfig cfg;
    cfg.mode = mode;
    if (mode == Mode::Validate) cfg.trials = 10000;

    if (auto e = get("seed")) cfg.seed = to_u64(*e, "seed", e->value);
    if (auto e = get("threads")) cfg.threads = static_cast<unsigned>(std::max<std::uint64_t>(1, to_u64(*e, "threads", e->value)));
    if (auto e = get("field")) {
        try {
            cfg.field = parse_field(e->value);
        } catch (const std::invalid_argument& ex) {
            fail(*e, "field", ex.what());
        }
    }
    if (auto e = get("ensemble")) {
        const std::string& v = e->value;
        if (v == "iid_gaussian") {
            cfg.ensemble = EnsembleKind::IidGaussian;
        } else if (v.rfind("row_correlated:", 0) == 0) {
            cfg.ensemble = EnsembleKind::RowCorrelated;
            cfg.rho = to_double(*e, "ensemble", v.substr(15));
        } else if (v.rfind("file:", 0) == 0) {
            cfg.ensemble = EnsembleKind::FromFile;
            cfg.matrix_path = resolve(base_dir, v.substr(5));
        } else {
            fail(*e, "ensemble", "expected iid_gaussian, row_correlated:RHO or file:PATH");
        }
    }
    if (auto e = get("matrix")) cfg.matrix_path = resolve(base_dir, e->value);
    if (auto e = get("measurements")) cfg.measurements_path = resolve(base_dir, e->value);
    if (auto e = get("output")) cfg.output_path = resolve(base_dir, e->value);
    if (auto e = get("sigma_x_sq")) cfg.sigma_x_sq = to_double(*e, "sigma_x_sq", e->value);
    if (auto e = get("noise_ez")) cfg.noise_ez = to_double(*e, "noise_ez", e->value);
    if (auto e = get("noise_ey_mean")) cfg.noise_ey_mean = to_double(*e, "noise_ey_mean", e->value);
    if (auto e = get("noise_ey")) cfg.noise_ey = to_double(*e, "noise_ey", e->value);
    if (auto e = get("trials")) cfg.trials = to_u64(*e, "trials", e->value);
    if (auto e = get("average_matrices")) cfg.average_matrices = to_u64(*e, "average_matrices", e->value);
    if (auto e = get("moment_samples")) cfg.moment_samples = to_u64(*e, "moment_samples", e->value);
    if (auto e = get("n")) cfg.n = static_cast<Eigen::Index>(to_u64(*e, "n", e->value));
    if (auto e = get("tol")) cfg.tol = to_double(*e, "tol", e->value);
    if (auto e = get("max_iter")) cfg.max_iter = static_cast<int>(to_u64(*e, "max_iter", e->value));
    if (auto e = get("ridge")) cfg.ridge = to_double(*e, "ridge", e->value);

    const Entry* est = get("estimators");
    if (!est) est = get("estimator");
    if (est) {
        for (const auto& tok : split_list(est->value)) {
            try {
                cfg.estimators.push_back(EstimatorSpec::parse(tok));
            } catch (const ParseError& ex) {
                fail(*est, "estimators", ex.what());
            }
        }
    } else if (mode == Mode::Sweep || mode == Mode::Validate) {
        cfg.estimators = {EstimatorSpec::parse(cfg.field == Field::Real ? "lspe-r" : "lspe-c"),
                          EstimatorSpec::parse("si:identity")};
    }

    if (auto e = get("delta_grid")) {
        for (const auto& tok : split_list(e->value)) cfg.delta_grid.push_back(to_double(*e, "delta_grid", tok));
        if (cfg.delta_grid.empty()) fail(*e, "delta_grid", "empty list");
    } else if (mode == Mode::Sweep) {
        cfg.delta_grid = {2, 3, 4, 5, 6, 7, 8, 9, 10};
    } else if (mode == Mode::Validate) {
        cfg.delta_grid = {8};
    }
    if (auto e = get("n_grid")) {
        for (const auto& tok : split_list(e->value))
            cfg.n_grid.push_back(static_cast<Eigen::Index>(to_u64(*e, "n_grid", tok)));
        if (cfg.n_grid.empty()) fail(*e, "n_grid", "empty list");
    } else if (mode == Mode::Validate) {
        cfg.n_grid = {8, 16, 32, 64};
    }
    if (cfg.n < 1) throw ConfigError("n must be >= 1");
    for (auto n : cfg.n_grid)
        if (n < 1) throw ConfigError("n_grid entries must be >= 1");
    if (mode == Mode::Estimate) {
        if (cfg.matrix_path.empty()) throw ConfigError("estimate mode needs 'matrix'");
        if (cfg.measurements_path.empty()) throw ConfigError("estimate mode needs 'measurements'");
        if (cfg.estimators.size() != 1) throw ConfigError("estimate mode needs exactly one estimator");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, Mode mode) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), mode, path.parent_path());
}

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg) {
    std::vector<ResultRow> rows;
    for (std::size_t i = 0; i < cfg.delta_grid.size(); ++i) {
        const double delta = cfg.delta_grid[i];
        const auto m = static_cast<Eigen::Index>(std::llround(delta * static_cast<double>(cfg.n)));
        auto point = run_point(cfg, i, cfg.n, m, delta);
        rows.insert(rows.end(), point.begin(), point.end());
    }
    sort_rows(rows);
    return rows;
}

std::vector<ResultRow> run_validate(const ExperimentConfig& cfg) {
    std::vector<ResultRow> rows;
    std::size_t point = 0;
    for (const double delta : cfg.delta_grid) {
        for (const Eigen::Index n : cfg.n_grid) {
            const auto m = static_cast<Eigen::Index>(std::llround(delta * static_cast<double>(n)));
            auto p = run_point(cfg, point++, n, m, delta);
            rows.insert(rows.end(), p.begin(), p.end());
        }
    }
    sort_rows(rows);
    return rows;
}

EstimateResult run_estimate(const ExperimentConfig& cfg) {
    const Mat a = read_matrix_file(cfg.matrix_path);
    const RVector y = read_measurements_file(cfg.measurements_path);
    if (y.size() != a.rows()) {
        throw std::invalid_argument("measurement file has " + std::to_string(y.size()) +
                                    " values but the matrix has M=" + std::to_string(a.rows()) + " rows");
    }
    if (a.field() != cfg.field) {
        throw ConfigError("matrix file field is " + to_string(a.field()) + " but config field is " +
                          to_string(cfg.field));
    }
    const SignalPrior prior{a.cols(), cfg.sigma_x_sq, a.field()};
    const MeasurementSystem sys(a, prior, noise_for(cfg, a.rows()));
    const PreparedEstimator est(cfg.estimators.front(), sys, cfg.ridge);
    const SpectralMatrix d = est.spectral_matrix(sys, y);
    Rng rng(cfg.seed, 0);
    const Estimate e = extract(d, cfg.tol, cfg.max_iter, rng);

    EstimateResult out{e.x_hat, e.lambda1, e.converged, e.iters, analytic_smse(est, sys, cfg.ridge)};
    if (!cfg.output_path.empty()) {
        write_matrix_file(cfg.output_path, Mat(e.x_hat.field(), e.x_hat.values()));
        std::ofstream meta(cfg.output_path + ".meta");
        if (!meta) throw std::runtime_error("cannot write '" + cfg.output_path + ".meta'");
        meta << "estimator=" << est.spec().name() << '\n'
             << "lambda1=" << format17(out.lambda1) << '\n'
             << "converged=" << (out.converged ? "true" : "false") << '\n'
             << "iters=" << out.iters << '\n'
             << "smse_analytic=" << format17(out.smse_analytic) << '\n';
    }
    return out;
}

MomentReport run_moments(const ExperimentConfig& cfg) {
    Rng rng(cfg.seed, 0);
    MomentReport report = moment_oracles(rng, cfg.moment_samples);
    if (!cfg.output_path.empty()) {
        std::ofstream out(cfg.output_path);
        if (!out) throw std::runtime_error("cannot write '" + cfg.output_path + "'");
        write_moment_table(out, report);
    }
    return report;
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.estimator << ',' << r.n << ',' << r.m << ',' << format17(r.delta) << ','
            << format17(r.nmse_mean) << ',' << format17(r.smse_analytic) << ','
            << format17(r.smse_empirical) << ',' << format17(r.eer_empirical) << ','
            << format17(r.eer_bound) << ',' << r.trials << ',' << r.seed << '\n';
    }
}

std::string to_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream s;
    write_csv(s, rows);
    return s.str();
}

void write_moment_table(std::ostream& out, const MomentReport& report) {
    out << "lemma,params,analytic,estimate,std_error,z,status\n";
    for (const auto& c : report.checks) {
        const double z = c.std_error > 0.0 ? (c.estimate - c.analytic) / c.std_error : 0.0;
        out << c.lemma << ",\"" << c.params << "\"," << format17(c.analytic) << ','
            << format17(c.estimate) << ',' << format17(c.std_error) << ',' << format17(z) << ','
            << (c.pass ? "PASS" : "FAIL") << '\n';
    }
}

double eer_gap_db(const ResultRow& row) { return 10.0 * std::log10(row.eer_empirical / row.eer_bound); }

}  // namespace lspe

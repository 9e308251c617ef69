#include "lspe/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

int run(lspe::Mode mode, const std::string& config_path, const CLI::App& app, const std::string& output,
        std::uint64_t seed, unsigned threads, std::size_t average) {
    lspe::ExperimentConfig cfg = lspe::load_config(config_path, mode);
    if (app.count("--output")) cfg.output_path = output;
    if (app.count("--seed")) cfg.seed = seed;
    if (app.count("--threads")) cfg.threads = std::max(1u, threads);
    if (app.count("--average-matrices")) cfg.average_matrices = average;
    cfg.validate();

    switch (mode) {
        case lspe::Mode::Sweep:
        case lspe::Mode::Validate: {
            const auto rows = mode == lspe::Mode::Sweep ? lspe::run_sweep(cfg) : lspe::run_validate(cfg);
            if (cfg.output_path.empty()) {
                lspe::write_csv(std::cout, rows);
            } else {
                std::ofstream out(cfg.output_path, std::ios::binary);
                if (!out) throw std::runtime_error("cannot write '" + cfg.output_path + "'");
                lspe::write_csv(out, rows);
            }
            return 0;
        }
        case lspe::Mode::Estimate: {
            const auto r = lspe::run_estimate(cfg);
            if (cfg.output_path.empty()) lspe::write_matrix(std::cout, lspe::Mat(r.x_hat.field(), r.x_hat.values()));
            std::cerr << "lambda1=" << lspe::format_double(r.lambda1) << " converged=" << r.converged
                      << " iters=" << r.iters << '\n';
            return 0;
        }
        case lspe::Mode::Moments: {
            const auto report = lspe::run_moments(cfg);
            if (cfg.output_path.empty()) lspe::write_moment_table(std::cout, report);
            return report.all_passed() ? 0 : 2;
        }
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear spectral estimators for phase retrieval"};
    app.name("lspe-kit");
    std::string mode_name, config_path, output;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::size_t average = 1;
    app.add_option("mode", mode_name, "sweep | validate | estimate | moments")
        ->required()
        ->check(CLI::IsMember({"sweep", "validate", "estimate", "moments"}));
    app.add_option("--config", config_path, "Config file")->required();
    app.add_option("--output", output, "Output path (overrides config)");
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--average-matrices", average, "Matrix instances per point")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        return run(lspe::parse_mode(mode_name), config_path, app, output, seed, threads, average);
    } catch (const lspe::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

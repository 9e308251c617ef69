#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lspe/harness.hpp"

namespace py = pybind11;
using namespace lspe;

namespace {

Mat to_mat(const CMatrix& a, const std::string& field) {
    const Field f = parse_field(field);
    if (f == Field::Real) {
        if (a.size() > 0 && a.imag().cwiseAbs().maxCoeff() != 0.0) {
            throw std::invalid_argument("real field requires a real-valued matrix");
        }
        return Mat(RMatrix(a.real()));
    }
    return Mat(Field::Complex, a);
}

MeasurementSystem make_system(const CMatrix& a, const std::string& field, double sigma_x_sq, double noise_ez,
                              double noise_ey_mean, double noise_ey) {
    const Mat m = to_mat(a, field);
    return MeasurementSystem(m, SignalPrior{m.cols(), sigma_x_sq, m.field()},
                             NoiseModel::white(m.rows(), noise_ez, noise_ey_mean, noise_ey));
}

MeasurementSystem random_system(Eigen::Index m, Eigen::Index n, const std::string& field, double rho,
                                double sigma_x_sq, double noise_ez, double noise_ey_mean, double noise_ey,
                                std::uint64_t seed, std::uint64_t stream) {
    Ensemble e;
    e.m = m;
    e.n = n;
    e.field = parse_field(field);
    if (rho != 0.0) {
        e.kind = EnsembleKind::RowCorrelated;
        e.rho = rho;
    }
    Rng rng(seed, stream);
    return build_system(e, SignalPrior{n, sigma_x_sq, e.field}, NoiseModel::white(m, noise_ez, noise_ey_mean, noise_ey),
                        rng);
}

py::dict report_dict(const ErrorReport& r) {
    py::dict d;
    d["smse_analytic"] = r.smse_analytic;
    d["eer_bound"] = r.eer_bound;
    d["smse_empirical"] = r.smse_empirical;
    d["eer_empirical"] = r.eer_empirical;
    d["nmse_mean"] = r.nmse_mean;
    d["trials"] = r.trials;
    d["bound_violations"] = r.bound_violations;
    d["max_bound_ratio"] = r.max_bound_ratio;
    d["unconverged"] = r.unconverged;
    return d;
}

std::vector<ResultRow> run_rows(const std::string& text, const std::string& mode) {
    const ExperimentConfig cfg = parse_config(text, parse_mode(mode));
    if (cfg.mode == Mode::Sweep) return run_sweep(cfg);
    if (cfg.mode == Mode::Validate) return run_validate(cfg);
    throw ConfigError("mode must be sweep or validate");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Linear spectral estimators for phase retrieval";

    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

    py::class_<MeasurementSystem>(m, "MeasurementSystem")
        .def(py::init(&make_system), py::arg("a"), py::arg("field") = "complex", py::arg("sigma_x_sq") = 1.0,
             py::arg("noise_ez") = 0.0, py::arg("noise_ey_mean") = 0.0, py::arg("noise_ey") = 0.0)
        .def_property_readonly("a", [](const MeasurementSystem& s) { return s.a().values(); })
        .def_property_readonly("c_z", &MeasurementSystem::c_z)
        .def_property_readonly("gram", &MeasurementSystem::gram)
        .def_property_readonly("field", [](const MeasurementSystem& s) { return to_string(s.field()); })
        .def_property_readonly("m", &MeasurementSystem::m)
        .def_property_readonly("n", &MeasurementSystem::n)
        .def_property_readonly("sigma_x_sq", [](const MeasurementSystem& s) { return s.prior().sigma_x_sq; });

    m.def("random_system", &random_system, py::arg("m"), py::arg("n"), py::arg("field") = "complex",
          py::arg("rho") = 0.0, py::arg("sigma_x_sq") = 1.0, py::arg("noise_ez") = 0.0,
          py::arg("noise_ey_mean") = 0.0, py::arg("noise_ey") = 0.0, py::arg("seed") = 1, py::arg("stream") = 0,
          "Gaussian (rho = 0) or row-correlated measurement system.");

    m.def(
        "sample_signal",
        [](const MeasurementSystem& sys, std::uint64_t seed, std::uint64_t stream) {
            Rng rng(seed, stream);
            return CVector(sample_signal(sys.prior(), rng).values());
        },
        py::arg("system"), py::arg("seed") = 1, py::arg("stream") = 0);

    m.def(
        "forward_measure",
        [](const MeasurementSystem& sys, const CVector& x, std::uint64_t seed, std::uint64_t stream) {
            Rng rng(seed, stream);
            const Vec xv = sys.field() == Field::Real ? Vec(RVector(x.real())) : Vec(Field::Complex, x);
            const Measurement meas = forward_measure(sys, xv, rng);
            return py::make_tuple(meas.y, meas.z);
        },
        py::arg("system"), py::arg("x"), py::arg("seed") = 1, py::arg("stream") = 0,
        "Returns (y, z) for y = |A x + e^z|^2 + e^y.");

    m.def(
        "preprocess", [](const std::string& name, const RVector& y) { return apply(Preprocessor::parse(name), y); },
        py::arg("preprocessor"), py::arg("y"));

    m.def(
        "spectral_matrix",
        [](const MeasurementSystem& sys, const RVector& y, const std::string& estimator) {
            const PreparedEstimator est(EstimatorSpec::parse(estimator), sys);
            return CMatrix(est.spectral_matrix(sys, y).d.values());
        },
        py::arg("system"), py::arg("y"), py::arg("estimator") = "lspe-c");

    m.def(
        "estimate",
        [](const MeasurementSystem& sys, const RVector& y, const std::string& estimator, std::uint64_t seed,
           double tol, int max_iter) {
            const PreparedEstimator est(EstimatorSpec::parse(estimator), sys);
            Rng rng(seed, 0);
            const Estimate e = extract(est.spectral_matrix(sys, y), tol, max_iter, rng);
            py::dict d;
            d["x_hat"] = CVector(e.x_hat.values());
            d["lambda1"] = e.lambda1;
            d["converged"] = e.converged;
            d["iters"] = e.iters;
            return d;
        },
        py::arg("system"), py::arg("y"), py::arg("estimator") = "lspe-c", py::arg("seed") = 1,
        py::arg("tol") = kDefaultEigTol, py::arg("max_iter") = kDefaultEigMaxIter,
        "Scaled leading eigenvector of the estimator's spectral matrix.");

    m.def(
        "analytic_smse",
        [](const MeasurementSystem& sys, const std::string& estimator) {
            return analytic_smse(PreparedEstimator(EstimatorSpec::parse(estimator), sys), sys);
        },
        py::arg("system"), py::arg("estimator") = "lspe-c");

    m.def(
        "empirical_errors",
        [](const MeasurementSystem& sys, const std::string& estimator, std::size_t trials, std::uint64_t seed,
           unsigned threads) {
            TrialOptions opts;
            opts.trials = trials;
            opts.seed = seed;
            opts.threads = threads;
            ErrorReport r;
            {
                py::gil_scoped_release release;
                r = empirical_errors(sys, EstimatorSpec::parse(estimator), opts);
            }
            return report_dict(r);
        },
        py::arg("system"), py::arg("estimator") = "lspe-c", py::arg("trials") = 500, py::arg("seed") = 1,
        py::arg("threads") = 1);

    m.def(
        "prior_constants",
        [](Eigen::Index n, double sigma_x_sq, const std::string& field) {
            const PriorConstants c = prior_constants(SignalPrior{n, sigma_x_sq, parse_field(field)});
            return py::make_tuple(c.c_xx, c.r_xx);
        },
        py::arg("n"), py::arg("sigma_x_sq") = 1.0, py::arg("field") = "complex", "Returns (c_xx, r_xx).");

    m.def(
        "run",
        [](const std::string& config_text, const std::string& mode) {
            std::vector<ResultRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_rows(config_text, mode);
            }
            return to_csv(rows);
        },
        py::arg("config_text"), py::arg("mode") = "sweep", "Runs a sweep or validate config and returns the CSV text.");

    m.def(
        "moment_oracles",
        [](std::uint64_t seed, std::size_t samples) {
            Rng rng(seed, 0);
            py::list out;
            for (const auto& c : moment_oracles(rng, samples).checks) {
                py::dict d;
                d["lemma"] = c.lemma;
                d["params"] = c.params;
                d["analytic"] = c.analytic;
                d["estimate"] = c.estimate;
                d["std_error"] = c.std_error;
                d["pass"] = c.pass;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 1, py::arg("samples") = 1'000'000);

    m.attr("CSV_HEADER") = kCsvHeader;
}

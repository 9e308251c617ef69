#include "lspe/model.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace lspe;

namespace {

Ensemble iid(Eigen::Index m, Eigen::Index n, Field f) {
    Ensemble e;
    e.m = m;
    e.n = n;
    e.field = f;
    return e;
}

MeasurementSystem make_system(const Mat& a) {
    return MeasurementSystem(a, SignalPrior{a.cols(), 1.0, a.field()}, NoiseModel::noiseless(a.rows()));
}

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "lspe_model_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("iid Gaussian ensemble has unit entry variance") {
    const Eigen::Index n = 354, m = 8 * n;  // about 10^6 entries
    Rng rng(5, 0);
    const auto sys = build_system(iid(m, n, Field::Complex), SignalPrior{n, 1.0, Field::Complex},
                                  NoiseModel::noiseless(m), rng);
    const double mean_sq = sys.a().values().cwiseAbs2().mean();
    CHECK(mean_sq == doctest::Approx(1.0).epsilon(0.01));

    Rng rr(6, 0);
    const auto real = build_system(iid(m, n, Field::Real), SignalPrior{n, 1.0, Field::Real},
                                   NoiseModel::noiseless(m), rr);
    CHECK(real.a().values().cwiseAbs2().mean() == doctest::Approx(1.0).epsilon(0.01));
    CHECK(real.a().values().imag().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("row_correlated with rho = 0 reduces to the iid ensemble") {
    Ensemble e = iid(12, 4, Field::Complex);
    Rng r1(9, 3), r2(9, 3);
    const auto plain = build_system(e, SignalPrior{4, 1.0, Field::Complex}, NoiseModel::noiseless(12), r1);
    e.kind = EnsembleKind::RowCorrelated;
    e.rho = 0.0;
    const auto corr = build_system(e, SignalPrior{4, 1.0, Field::Complex}, NoiseModel::noiseless(12), r2);
    CHECK(plain.a().values() == corr.a().values());
}

TEST_CASE("row_correlated rows follow the rho^|i-j| correlation") {
    const Eigen::Index m = 16, n = 512;
    const double rho = 0.9;
    Ensemble e = iid(m, n, Field::Complex);
    e.kind = EnsembleKind::RowCorrelated;
    e.rho = rho;
    RMatrix r(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) r(i, j) = std::pow(rho, std::abs(static_cast<double>(i - j)));
    Rng rng(77, 0);
    const int draws = 20;
    CMatrix acc = CMatrix::Zero(m, m);
    for (int k = 0; k < draws; ++k) {
        const auto sys = build_system(e, SignalPrior{n, 1.0, Field::Complex}, NoiseModel::noiseless(m), rng);
        acc += sys.gram();
    }
    const CMatrix est = acc / static_cast<double>(draws * n);
    CHECK((est - r.cast<cplx>()).norm() / r.norm() < 0.05);
}

TEST_CASE("matrix file round trip") {
    std::istringstream in("2 2 C\n1.5:-0.25 0:1\n-3:0 2.5:0.125\n");
    const Mat a = read_matrix(in);
    CHECK(a.field() == Field::Complex);
    CHECK(a(0, 0) == cplx(1.5, -0.25));
    CHECK(a(0, 1) == cplx(0, 1));
    CHECK(a(1, 0) == cplx(-3, 0));
    CHECK(a(1, 1) == cplx(2.5, 0.125));

    Rng rng(1, 0);
    CMatrix v(3, 2);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.complex_normal(1.0) * 1e-7;
    v(0, 0) = cplx(1.0 / 3.0, -std::numbers::pi);
    std::stringstream buf;
    write_matrix(buf, Mat(Field::Complex, v));
    CHECK(read_matrix(buf).values() == v);

    RMatrix rv(2, 3);
    rv << 0.1, -2e-300, 1e300, 7, 1.0 / 7.0, -0.0;
    const auto path = temp_file("real.txt");
    write_matrix_file(path.string(), Mat(rv));
    const Mat back = read_matrix_file(path.string());
    CHECK(back.field() == Field::Real);
    CHECK(back.real() == rv);
}

TEST_CASE("matrix file parse errors name the line") {
    auto fails_with = [](const std::string& text, const std::string& fragment) {
        std::istringstream in(text);
        try {
            read_matrix(in);
        } catch (const ParseError& e) {
            return std::string(e.what()).find(fragment) != std::string::npos;
        }
        return false;
    };
    CHECK(fails_with("", "empty"));
    CHECK(fails_with("2 2 X\n1 2\n3 4\n", "line 1"));
    CHECK(fails_with("2 2 R\n1 2\n3 x\n", "line 3"));
    CHECK(fails_with("2 2 R\n1 2\n3\n", "line 3"));
    CHECK(fails_with("2 2 R\n1 2\n", "expected 2 rows"));
    CHECK(fails_with("1 1 R\n1\n2\n", "trailing"));
    CHECK(fails_with("1 1 R\n1:2\n", "line 2"));
    CHECK_THROWS_AS(read_matrix_file("/nonexistent/file.txt"), ParseError);
}

TEST_CASE("measurement file reading") {
    const auto path = temp_file("y.txt");
    {
        std::ofstream out(path);
        out << "1.5\n\n-2\n3e-3\n";
    }
    const RVector y = read_measurements_file(path.string());
    REQUIRE(y.size() == 3);
    CHECK(y(0) == 1.5);
    CHECK(y(1) == -2.0);
    CHECK(y(2) == 3e-3);
    {
        std::ofstream out(path);
        out << "1\nabc\n";
    }
    CHECK_THROWS_AS(read_measurements_file(path.string()), ParseError);
}

TEST_CASE("format_double round trips") {
    Rng rng(4, 4);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.normal() * 50);
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("forward_measure examples") {
    Rng rng(1, 0);
    const auto sys = make_system(Mat::identity(Field::Complex, 2));
    CVector x(2);
    x << cplx(1, 0), cplx(0, 2);
    const Measurement meas = forward_measure(sys, Vec(Field::Complex, x), rng);
    CHECK(meas.y(0) == 1.0);
    CHECK(meas.y(1) == 4.0);

    RMatrix a(2, 1);
    a << 1, -1;
    const auto real = make_system(Mat(a));
    const Measurement mr = forward_measure(real, Vec((RVector(1) << 3).finished()), rng);
    CHECK(mr.y(0) == 9.0);
    CHECK(mr.y(1) == 9.0);

    CHECK_THROWS_AS(forward_measure(real, Vec(Field::Complex, CVector::Ones(1)), rng), std::invalid_argument);
    CHECK_THROWS_AS(forward_measure(real, Vec(RVector::Ones(2)), rng), std::invalid_argument);
}

TEST_CASE("mean measurement matches diag(C_z) + mean noise") {
    Rng rng(12, 0);
    const Eigen::Index m = 4, n = 3;
    NoiseModel noise = NoiseModel::white(m, 0.3, 0.5, 0.2);
    noise.c_ez(0, 1) = noise.c_ez(1, 0) = 0.1;
    const auto sys = build_system(iid(m, n, Field::Complex), SignalPrior{n, 1.5, Field::Complex}, noise, rng);
    const RVector analytic = sys.c_z().diagonal().real() + noise.mean_ey;
    RVector acc = RVector::Zero(m);
    const int draws = 100'000;
    for (int k = 0; k < draws; ++k) {
        const Vec x = sample_signal(sys.prior(), rng);
        acc += forward_measure(sys, x, rng).y;
    }
    acc /= draws;
    for (Eigen::Index i = 0; i < m; ++i) CHECK(acc(i) == doctest::Approx(analytic(i)).epsilon(0.01));
}

TEST_CASE("signal prior moments") {
    const int draws = 100'000;
    const Eigen::Index n = 10;
    const double s2 = 2.0;
    Rng rng(31, 0);
    double energy = 0.0, fourth_c = 0.0;
    for (int k = 0; k < draws; ++k) {
        const CVector x = sample_signal(SignalPrior{n, s2, Field::Complex}, rng).values();
        energy += x.squaredNorm();
        fourth_c += x.cwiseAbs2().cwiseAbs2().sum();
    }
    CHECK(energy / (draws * n) == doctest::Approx(s2).epsilon(0.01));
    CHECK(fourth_c / (draws * n) == doctest::Approx(2 * s2 * s2).epsilon(0.02));

    double fourth_r = 0.0;
    for (int k = 0; k < draws; ++k) {
        const RVector x = sample_signal(SignalPrior{n, s2, Field::Real}, rng).values().real();
        fourth_r += x.array().pow(4).sum();
    }
    CHECK(fourth_r / (draws * n) == doctest::Approx(3 * s2 * s2).epsilon(0.02));
}

TEST_CASE("phaseless invariance under a global phase") {
    Rng rng(2, 0);
    const auto sys = build_system(iid(20, 5, Field::Complex), SignalPrior{5, 1.0, Field::Complex},
                                  NoiseModel::noiseless(20), rng);
    for (const double phi : {0.3, 1.7, -2.9, std::numbers::pi}) {
        const Vec x = sample_signal(sys.prior(), rng);
        const Vec xr(Field::Complex, x.values() * std::polar(1.0, phi));
        const RVector y1 = forward_measure(sys, x, rng).y;
        const RVector y2 = forward_measure(sys, xr, rng).y;
        CHECK((y1 - y2).cwiseAbs().maxCoeff() <= 1e-13 * y1.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("C_z cache is consistent, Hermitian and PSD for every ensemble") {
    Rng rng(3, 0);
    const Eigen::Index m = 12, n = 4;
    NoiseModel noise = NoiseModel::white(m, 0.2, 0.0, 0.1);
    for (const auto kind : {EnsembleKind::IidGaussian, EnsembleKind::RowCorrelated}) {
        for (const Field f : {Field::Real, Field::Complex}) {
            Ensemble e = iid(m, n, f);
            e.kind = kind;
            e.rho = 0.7;
            const auto sys = build_system(e, SignalPrior{n, 2.0, f}, noise, rng);
            const CMatrix& a = sys.a().values();
            const CMatrix expected = 2.0 * a * a.adjoint() + noise.c_ez;
            CHECK((sys.c_z() - expected).norm() <= 1e-12 * expected.norm());
            CHECK((sys.c_z() - sys.c_z().adjoint()).norm() == 0.0);
            Eigen::SelfAdjointEigenSolver<CMatrix> es(sys.c_z());
            CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
        }
    }
}

TEST_CASE("system from file") {
    const auto path = temp_file("a.txt");
    {
        std::ofstream out(path);
        out << "3 2 R\n1 0\n0 1\n1 1\n";
    }
    Ensemble e;
    e.kind = EnsembleKind::FromFile;
    e.path = path.string();
    e.m = 3;
    e.n = 2;
    e.field = Field::Real;
    Rng rng(1, 0);
    const auto sys = build_system(e, SignalPrior{2, 1.0, Field::Real}, NoiseModel::noiseless(3), rng);
    CHECK(sys.a()(2, 1) == cplx(1, 0));
    e.m = 4;
    CHECK_THROWS_AS(build_system(e, SignalPrior{2, 1.0, Field::Real}, NoiseModel::noiseless(4), rng),
                    std::invalid_argument);
}

TEST_CASE("model validation") {
    CHECK_THROWS_AS((SignalPrior{0, 1.0, Field::Real}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SignalPrior{2, 0.0, Field::Real}.validate()), std::invalid_argument);

    NoiseModel bad = NoiseModel::noiseless(2);
    bad.c_ey(0, 0) = -1.0;
    CHECK_THROWS_AS(bad.validate(Field::Real), std::invalid_argument);
    NoiseModel mism = NoiseModel::noiseless(2);
    mism.mean_ey = RVector::Zero(3);
    CHECK_THROWS_AS(mism.validate(Field::Complex), std::invalid_argument);
    NoiseModel cplx_noise = NoiseModel::noiseless(2);
    cplx_noise.c_ez(0, 1) = cplx(0, 0.1);
    cplx_noise.c_ez(1, 0) = cplx(0, -0.1);
    cplx_noise.c_ez.diagonal().setConstant(1.0);
    CHECK_THROWS_AS(cplx_noise.validate(Field::Real), std::invalid_argument);
    CHECK_NOTHROW(cplx_noise.validate(Field::Complex));

    Ensemble e = iid(3, 2, Field::Real);
    e.kind = EnsembleKind::RowCorrelated;
    e.rho = 1.0;
    CHECK_THROWS_AS(e.validate(), std::invalid_argument);

    Rng rng(1, 0);
    CHECK_THROWS_AS(build_system(iid(3, 2, Field::Real), SignalPrior{2, 1.0, Field::Complex},
                                 NoiseModel::noiseless(3), rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_system(iid(3, 2, Field::Real), SignalPrior{2, 1.0, Field::Real},
                                 NoiseModel::noiseless(4), rng),
                    std::invalid_argument);
}

TEST_CASE("noise is drawn with the configured moments") {
    const Eigen::Index m = 2;
    NoiseModel noise = NoiseModel::noiseless(m);
    noise.mean_ey << 1.0, -1.0;
    noise.c_ey << 2.0, 0.5, 0.5, 1.0;
    const auto sys = MeasurementSystem(Mat(RMatrix::Zero(m, 1)), SignalPrior{1, 1.0, Field::Real}, noise);
    Rng rng(44, 0);
    std::vector<RVector> ys;
    for (int k = 0; k < 200'000; ++k) ys.push_back(forward_measure(sys, Vec(RVector::Ones(1)), rng).y);
    const auto mom = oracle::sample_moments(ys);
    CHECK((mom.mean - noise.mean_ey).norm() < 0.01);
    CHECK(oracle::rel_frob(mom.cov, noise.c_ey) < 0.01);
}

TEST_CASE("permuted system relabels rows jointly") {
    Rng rng(8, 0);
    NoiseModel noise = NoiseModel::white(4, 0.1, 0.2, 0.3);
    noise.mean_ey << 1, 2, 3, 4;
    const auto sys = build_system(iid(4, 2, Field::Complex), SignalPrior{2, 1.0, Field::Complex}, noise, rng);
    const std::vector<Eigen::Index> perm = {2, 0, 3, 1};
    const auto p = sys.permuted(perm);
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(p.a().values().row(i) == sys.a().values().row(perm[i]));
        CHECK(p.noise().mean_ey(i) == sys.noise().mean_ey(perm[i]));
        for (Eigen::Index j = 0; j < 4; ++j) CHECK(p.c_z()(i, j) == sys.c_z()(perm[i], perm[j]));
    }
    CHECK_THROWS_AS(sys.permuted({0, 1}), std::invalid_argument);
}

#include "lspe/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lspe {

namespace {

bool is_psd(const CMatrix& c) {
    if (c.size() == 0) return true;
    const double shift = 1e-10 * std::max(1.0, c.cwiseAbs().maxCoeff());
    CMatrix s = c;
    s.diagonal().array() += shift;
    Eigen::LLT<CMatrix> llt(s);
    return llt.info() == Eigen::Success;
}

bool is_symmetric(const CMatrix& c) {
    if (c.rows() != c.cols()) return false;
    if (c.size() == 0) return true;
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    return (c - c.adjoint()).cwiseAbs().maxCoeff() <= 1e-10 * scale;
}

// F with F F^H = C for a Hermitian PSD C (negative rounding eigenvalues clipped).
template <typename MatrixT>
std::optional<MatrixT> psd_sqrt(const MatrixT& c) {
    if (c.size() == 0 || c.cwiseAbs().maxCoeff() == 0.0) return std::nullopt;
    Eigen::SelfAdjointEigenSolver<MatrixT> eig(c);
    const RVector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return MatrixT(eig.eigenvectors() * root.asDiagonal());
}

double parse_number(std::string_view tok, std::size_t line) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || first == last) {
        throw ParseError("line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
    }
    return v;
}

}  // namespace

void SignalPrior::validate() const {
    if (n < 1) throw std::invalid_argument("SignalPrior: n must be >= 1");
    if (!(sigma_x_sq > 0.0) || !std::isfinite(sigma_x_sq)) {
        throw std::invalid_argument("SignalPrior: sigma_x_sq must be positive");
    }
}

NoiseModel NoiseModel::noiseless(Eigen::Index m) { return white(m, 0.0, 0.0, 0.0); }

NoiseModel NoiseModel::white(Eigen::Index m, double var_ez, double mean_ey, double var_ey) {
    NoiseModel nm;
    nm.c_ez = CMatrix::Identity(m, m) * var_ez;
    nm.mean_ey = RVector::Constant(m, mean_ey);
    nm.c_ey = RMatrix::Identity(m, m) * var_ey;
    return nm;
}

void NoiseModel::validate(Field field) const {
    const Eigen::Index mm = m();
    if (c_ez.rows() != mm || c_ez.cols() != mm || c_ey.rows() != mm || c_ey.cols() != mm) {
        throw std::invalid_argument("NoiseModel: dimension mismatch (M=" + std::to_string(mm) + ")");
    }
    if (!is_symmetric(c_ez)) throw std::invalid_argument("NoiseModel: c_ez not Hermitian");
    if (field == Field::Real && c_ez.size() > 0 && c_ez.imag().cwiseAbs().maxCoeff() != 0.0) {
        throw std::invalid_argument("NoiseModel: c_ez must be real for a real system");
    }
    const CMatrix c_ey_c = c_ey.cast<cplx>();
    if (!is_symmetric(c_ey_c)) throw std::invalid_argument("NoiseModel: c_ey not symmetric");
    if (!is_psd(c_ez)) throw std::invalid_argument("NoiseModel: c_ez not positive semidefinite");
    if (!is_psd(c_ey_c)) throw std::invalid_argument("NoiseModel: c_ey not positive semidefinite");
}

void Ensemble::validate() const {
    if (kind != EnsembleKind::FromFile && (m < 1 || n < 1)) {
        throw std::invalid_argument("Ensemble: m and n must be >= 1");
    }
    if (kind == EnsembleKind::RowCorrelated && !(rho >= 0.0 && rho < 1.0)) {
        throw std::invalid_argument("Ensemble: rho must lie in [0, 1)");
    }
}

MeasurementSystem::MeasurementSystem(Mat a, SignalPrior prior, NoiseModel noise)
    : a_(std::move(a)), prior_(prior), noise_(std::move(noise)) {
    prior_.validate();
    if (a_.cols() != prior_.n) {
        throw std::invalid_argument("MeasurementSystem: A has " + std::to_string(a_.cols()) +
                                    " columns but the prior has n=" + std::to_string(prior_.n));
    }
    if (a_.field() != prior_.field) {
        throw std::invalid_argument("MeasurementSystem: field of A and prior differ");
    }
    if (noise_.m() != a_.rows()) {
        throw std::invalid_argument("MeasurementSystem: noise dimension " +
                                    std::to_string(noise_.m()) + " != M=" +
                                    std::to_string(a_.rows()));
    }
    noise_.validate(a_.field());
    gram_ = a_.values() * a_.values().adjoint();
    c_z_ = prior_.sigma_x_sq * gram_ + noise_.c_ez;
    c_z_ = 0.5 * (c_z_ + c_z_.adjoint()).eval();
    if (a_.field() == Field::Real) {
        auto f = psd_sqrt<RMatrix>(noise_.c_ez.real());
        if (f) ez_factor_ = f->cast<cplx>();
    } else {
        ez_factor_ = psd_sqrt<CMatrix>(noise_.c_ez);
    }
    ey_factor_ = psd_sqrt<RMatrix>(noise_.c_ey);
}

MeasurementSystem MeasurementSystem::permuted(const std::vector<Eigen::Index>& perm) const {
    const Eigen::Index mm = m();
    if (static_cast<Eigen::Index>(perm.size()) != mm) {
        throw std::invalid_argument("permuted: permutation length mismatch");
    }
    CMatrix a(mm, n());
    NoiseModel nm;
    nm.c_ez.resize(mm, mm);
    nm.c_ey.resize(mm, mm);
    nm.mean_ey.resize(mm);
    for (Eigen::Index i = 0; i < mm; ++i) {
        a.row(i) = a_.values().row(perm[i]);
        nm.mean_ey(i) = noise_.mean_ey(perm[i]);
        for (Eigen::Index j = 0; j < mm; ++j) {
            nm.c_ez(i, j) = noise_.c_ez(perm[i], perm[j]);
            nm.c_ey(i, j) = noise_.c_ey(perm[i], perm[j]);
        }
    }
    return MeasurementSystem(Mat(field(), std::move(a)), prior_, std::move(nm));
}

MeasurementSystem build_system(const Ensemble& ens, const SignalPrior& prior,
                               const NoiseModel& noise, Rng& rng) {
    ens.validate();
    if (ens.field != prior.field) throw std::invalid_argument("build_system: ensemble/prior field mismatch");

    if (ens.kind == EnsembleKind::FromFile) {
        Mat a = read_matrix_file(ens.path);
        if (a.field() != ens.field) {
            throw std::invalid_argument("build_system: matrix file field is " + to_string(a.field()) +
                                        ", expected " + to_string(ens.field));
        }
        if ((ens.m > 0 && a.rows() != ens.m) || (ens.n > 0 && a.cols() != ens.n)) {
            throw std::invalid_argument("build_system: matrix file is " + std::to_string(a.rows()) +
                                        "x" + std::to_string(a.cols()) + ", expected " +
                                        std::to_string(ens.m) + "x" + std::to_string(ens.n));
        }
        return MeasurementSystem(std::move(a), prior, noise);
    }

    if (prior.n != ens.n) throw std::invalid_argument("build_system: prior n != ensemble n");
    if (noise.m() != ens.m) throw std::invalid_argument("build_system: noise M != ensemble m");

    CMatrix g(ens.m, ens.n);
    for (Eigen::Index j = 0; j < ens.n; ++j)
        for (Eigen::Index i = 0; i < ens.m; ++i)
            g(i, j) = ens.field == Field::Real ? cplx(rng.normal(), 0.0) : rng.complex_normal(1.0);

    if (ens.kind == EnsembleKind::RowCorrelated && ens.rho != 0.0) {
        RMatrix r(ens.m, ens.m);
        for (Eigen::Index i = 0; i < ens.m; ++i)
            for (Eigen::Index j = 0; j < ens.m; ++j)
                r(i, j) = std::pow(ens.rho, static_cast<double>(std::abs(i - j)));
        Eigen::LLT<RMatrix> llt(r);
        if (llt.info() != Eigen::Success) throw NumericalError("build_system: correlation factor failed");
        const RMatrix l = llt.matrixL();
        g = (l.cast<cplx>() * g).eval();
    }
    return MeasurementSystem(Mat(ens.field, std::move(g)), prior, noise);
}

Measurement forward_measure(const MeasurementSystem& sys, const Vec& x, Rng& rng) {
    if (x.size() != sys.n()) {
        throw std::invalid_argument("forward_measure: x has length " + std::to_string(x.size()) +
                                    ", expected " + std::to_string(sys.n()));
    }
    if (x.field() != sys.field()) throw std::invalid_argument("forward_measure: field mismatch");
    const Eigen::Index m = sys.m();

    Measurement out;
    out.z = sys.a().values() * x.values();
    if (const auto& f = sys.ez_factor()) {
        const CVector w = sample_gaussian(rng, m, sys.field(), 1.0).values();
        out.z += *f * w;
    }
    out.y = out.z.cwiseAbs2() + sys.noise().mean_ey;
    if (const auto& f = sys.ey_factor()) {
        RVector w(m);
        for (Eigen::Index i = 0; i < m; ++i) w(i) = rng.normal();
        out.y += *f * w;
    }
    return out;
}

Vec sample_signal(const SignalPrior& prior, Rng& rng) {
    prior.validate();
    return sample_gaussian(rng, prior.n, prior.field, prior.sigma_x_sq);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

Mat read_matrix(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
        }
        return false;
    };
    if (!next_line()) throw ParseError("matrix file: empty input");
    std::istringstream header(line);
    long long rows = 0, cols = 0;
    std::string field_tok, extra;
    if (!(header >> rows >> cols >> field_tok) || (header >> extra) || rows < 1 || cols < 1 ||
        (field_tok != "R" && field_tok != "C")) {
        throw ParseError("line " + std::to_string(lineno) + ": expected header 'M N R|C'");
    }
    const Field field = field_tok == "R" ? Field::Real : Field::Complex;

    CMatrix a(rows, cols);
    for (long long i = 0; i < rows; ++i) {
        if (!next_line()) {
            throw ParseError("matrix file: expected " + std::to_string(rows) + " rows, got " +
                             std::to_string(i));
        }
        std::istringstream row(line);
        std::string tok;
        long long j = 0;
        while (row >> tok) {
            if (j >= cols) {
                throw ParseError("line " + std::to_string(lineno) + ": more than " +
                                 std::to_string(cols) + " entries");
            }
            const auto colon = tok.find(':');
            if (colon == std::string::npos) {
                a(i, j) = cplx(parse_number(tok, lineno), 0.0);
            } else {
                if (field == Field::Real) {
                    throw ParseError("line " + std::to_string(lineno) +
                                     ": complex entry in a real matrix");
                }
                const std::string_view sv(tok);
                a(i, j) = cplx(parse_number(sv.substr(0, colon), lineno),
                               parse_number(sv.substr(colon + 1), lineno));
            }
            ++j;
        }
        if (j != cols) {
            throw ParseError("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(cols) + " entries, got " + std::to_string(j));
        }
    }
    if (next_line()) throw ParseError("line " + std::to_string(lineno) + ": trailing data");
    return Mat(field, std::move(a));
}

Mat read_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open matrix file '" + path + "'");
    return read_matrix(in);
}

void write_matrix(std::ostream& out, const Mat& a) {
    const bool real = a.field() == Field::Real;
    out << a.rows() << ' ' << a.cols() << ' ' << (real ? 'R' : 'C') << '\n';
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (j > 0) out << ' ';
            const cplx v = a(i, j);
            if (real) {
                out << format_double(v.real());
            } else {
                out << format_double(v.real()) << ':' << format_double(v.imag());
            }
        }
        out << '\n';
    }
}

void write_matrix_file(const std::string& path, const Mat& a) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write matrix file '" + path + "'");
    write_matrix(out, a);
}

RVector read_measurements_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open measurement file '" + path + "'");
    std::vector<double> vals;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        vals.push_back(parse_number(std::string_view(line).substr(b, e - b + 1), lineno));
    }
    return Eigen::Map<RVector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace lspe

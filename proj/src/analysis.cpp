#include "lspe/analysis.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace lspe {

namespace {

// Rounding allowance for the per-trial rank-one bound, relative to ||x||^2.
constexpr double kBoundSlack = 1e-12;

std::string fmt(double v) { return format_double(v); }

}  // namespace

PriorConstants prior_constants(const SignalPrior& prior) {
    prior.validate();
    const double n = static_cast<double>(prior.n);
    const double s4 = prior.sigma_x_sq * prior.sigma_x_sq;
    if (prior.field == Field::Real) return {n * (n + 1.0) * s4, n * (n + 2.0) * s4};
    return {n * n * s4, n * (n + 1.0) * s4};
}

double smse_lspe(const LspeQuantities& q, const MeasurementSystem& sys,
                 const PriorConstants& consts, double ridge) {
    const Eigen::Index m = q.m();
    if (sys.m() != m) throw std::invalid_argument("smse_lspe: quantities built for another system");
    // W_{mm'} = tr(V_m^H V_m')
    RMatrix w(m, m);
    if (q.rank_one()) {
        const RVector& c = *q.v_coeffs;
        w = (c * c.transpose()).cwiseProduct(sys.gram().cwiseAbs2());
    } else {
        const Eigen::Index nn = q.k_x.size();
        CMatrix stacked(nn, m);
        for (Eigen::Index i = 0; i < m; ++i)
            stacked.col(i) = q.generic_v[static_cast<std::size_t>(i)].reshaped();
        w = (stacked.adjoint() * stacked).real();
    }
    const RMatrix tinv_w = q.factor(ridge)->solve(w);
    return consts.c_xx - tinv_w.trace();
}

SiError smse_si(const LspeQuantities& q, const MeasurementSystem& sys, const PriorConstants& consts) {
    const SiMoments mo = si_moments(sys, q);
    if (!(mo.denominator > 0.0)) throw NumericalError("smse_si: zero denominator");
    return {consts.r_xx - mo.numerator * mo.numerator / mo.denominator, mo.numerator / mo.denominator};
}

double eer_bound(double smse) {
    if (smse < 0.0) throw std::invalid_argument("eer_bound: negative S-MSE");
    return 4.0 * smse;
}

double nmse(const Vec& x, const Vec& x_hat) {
    if (x.size() != x_hat.size()) throw std::invalid_argument("nmse: length mismatch");
    const double xx = x.values().squaredNorm();
    if (!(xx > 0.0)) throw std::invalid_argument("nmse: zero true signal");
    const double hh = x_hat.values().squaredNorm();
    if (hh == 0.0) return 1.0;
    const cplx alpha = x_hat.values().dot(x.values()) / hh;
    return (x.values() - alpha * x_hat.values()).squaredNorm() / xx;
}

double spectral_error(const Mat& d, const Vec& x) {
    return (d.values() - x.values() * x.values().adjoint()).squaredNorm();
}

double estimation_error(const Vec& x_hat, const Vec& x) {
    return (x_hat.values() * x_hat.values().adjoint() - x.values() * x.values().adjoint()).squaredNorm();
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double analytic_smse(const PreparedEstimator& est, const MeasurementSystem& sys, double ridge) {
    const auto& q = est.quantities();
    if (!q) return std::numeric_limits<double>::quiet_NaN();
    const PriorConstants consts = prior_constants(sys.prior());
    if (est.spec().kind == EstimatorSpec::Kind::SpectralInit) return smse_si(*q, sys, consts).smse;
    return smse_lspe(*q, sys, consts, ridge);
}

ErrorReport empirical_errors(const MeasurementSystem& sys, const EstimatorSpec& spec,
                             const TrialOptions& opts) {
    if (opts.trials < 1) throw std::invalid_argument("empirical_errors: trials must be >= 1");
    const PreparedEstimator est(spec, sys, opts.ridge);

    ErrorReport report;
    report.trials = opts.trials;
    report.smse_analytic = analytic_smse(est, sys, opts.ridge);
    if (std::isfinite(report.smse_analytic)) {
        report.eer_bound = 4.0 * report.smse_analytic;
    }

    const std::size_t n_trials = opts.trials;
    std::vector<double> smse(n_trials), eer(n_trials), nm(n_trials), ratio(n_trials);
    std::vector<char> violated(n_trials, 0), unconverged(n_trials, 0);

    std::mutex err_mu;
    std::exception_ptr first_error;
    std::size_t first_error_trial = n_trials;
    std::string first_error_msg;

    auto run_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            try {
                Rng rng(opts.seed, opts.stream_base + k);
                const Vec x = sample_signal(sys.prior(), rng);
                const Measurement meas = forward_measure(sys, x, rng);
                const SpectralMatrix d = est.spectral_matrix(sys, meas.y);
                const Estimate e = extract(d, opts.tol, opts.max_iter, rng);
                smse[k] = spectral_error(d.d, x);
                eer[k] = estimation_error(e.x_hat, x);
                nm[k] = nmse(x, e.x_hat);
                const double scale = kBoundSlack * x.values().squaredNorm();
                violated[k] = eer[k] > 4.0 * smse[k] + scale * scale;
                ratio[k] = smse[k] > 0.0 ? eer[k] / (4.0 * smse[k]) : (eer[k] > 0.0 ? INFINITY : 0.0);
                unconverged[k] = !e.converged;
            } catch (const std::exception& ex) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (k < first_error_trial) {
                    first_error_trial = k;
                    first_error_msg = ex.what();
                    first_error = std::current_exception();
                }
                return;
            }
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(n_trials)));
    if (threads == 1) {
        run_range(0, n_trials);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t b = n_trials * t / threads;
            const std::size_t e = n_trials * (t + 1) / threads;
            pool.emplace_back(run_range, b, e);
        }
        for (auto& th : pool) th.join();
    }
    if (first_error) {
        throw NumericalError("trial " + std::to_string(first_error_trial) + ": " + first_error_msg);
    }

    const double nt = static_cast<double>(n_trials);
    report.smse_empirical = pairwise_sum(smse) / nt;
    report.eer_empirical = pairwise_sum(eer) / nt;
    report.nmse_mean = pairwise_sum(nm) / nt;
    for (std::size_t k = 0; k < n_trials; ++k) {
        report.bound_violations += violated[k] ? 1 : 0;
        report.unconverged += unconverged[k] ? 1 : 0;
        report.max_bound_ratio = std::max(report.max_bound_ratio, ratio[k]);
    }
    return report;
}

bool MomentReport::all_passed() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return !checks.empty();
}

MomentFormulas MomentFormulas::gaussian() {
    MomentFormulas f;
    f.folded_cov = [](double mu1, double mu2, double cov) {
        return 4.0 * mu1 * mu2 * cov + 2.0 * cov * cov;
    };
    f.folded_var = [](double mu, double var) { return 2.0 * var * var + 4.0 * mu * mu * var; };
    f.exp_quadratic = [](const CMatrix& g, const CMatrix& sigma) {
        const CMatrix s = g * sigma + CMatrix::Identity(g.rows(), g.cols());
        return 1.0 / std::abs(s.determinant());
    };
    f.exp_linear = [](const RVector& gamma, const RVector& mean, const RMatrix& sigma) {
        return std::exp(-gamma.dot(mean) + 0.5 * gamma.dot(sigma * gamma));
    };
    return f;
}

namespace {

struct SampleStats {
    double mean = 0.0;
    double std_error = 0.0;
};

// Mean and standard error of a sample, two-pass.
SampleStats stats_of(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = pairwise_sum(v) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

MomentCheck make_check(std::string lemma, std::string params, double analytic, SampleStats s) {
    MomentCheck c{std::move(lemma), std::move(params), analytic, s.mean, s.std_error, false};
    c.pass = std::abs(s.mean - analytic) <= kMomentSigmas * s.std_error;
    return c;
}

}  // namespace

MomentReport moment_oracles(Rng& rng, std::size_t samples, const MomentFormulas& f) {
    if (samples < 2) throw std::invalid_argument("moment_oracles: need at least 2 samples");
    MomentReport report;
    std::vector<double> a(samples), b(samples), prod(samples);

    // Squares of a jointly Gaussian pair.
    struct Pair { double mu1, mu2, var1, var2, cov; };
    for (const Pair& p : {Pair{0.0, 0.0, 1.0, 1.0, 0.5}, Pair{1.0, -0.5, 1.0, 2.0, 0.7},
                          Pair{0.3, 0.8, 0.5, 1.5, -0.4}, Pair{0.0, 0.0, 1.0, 1.0, 0.0}}) {
        const double l11 = std::sqrt(p.var1);
        const double l21 = p.cov / l11;
        const double l22 = std::sqrt(p.var2 - l21 * l21);
        for (std::size_t s = 0; s < samples; ++s) {
            const double w1 = rng.normal();
            const double w2 = rng.normal();
            const double u1 = p.mu1 + l11 * w1;
            const double u2 = p.mu2 + l21 * w1 + l22 * w2;
            a[s] = u1 * u1;
            b[s] = u2 * u2;
        }
        const double ma = pairwise_sum(a) / static_cast<double>(samples);
        const double mb = pairwise_sum(b) / static_cast<double>(samples);
        for (std::size_t s = 0; s < samples; ++s) prod[s] = (a[s] - ma) * (b[s] - mb);
        std::ostringstream params;
        params << "mu=(" << fmt(p.mu1) << "," << fmt(p.mu2) << ") var=(" << fmt(p.var1) << ","
               << fmt(p.var2) << ") cov=" << fmt(p.cov);
        report.checks.push_back(make_check("folded_cov", params.str(),
                                           f.folded_cov(p.mu1, p.mu2, p.cov), stats_of(prod)));
    }

    struct Single { double mu, var; };
    for (const Single& p : {Single{0.0, 1.0}, Single{1.0, 0.5}, Single{-2.0, 2.0}}) {
        const double sd = std::sqrt(p.var);
        for (std::size_t s = 0; s < samples; ++s) {
            const double u = p.mu + sd * rng.normal();
            a[s] = u * u;
        }
        const double ma = pairwise_sum(a) / static_cast<double>(samples);
        for (std::size_t s = 0; s < samples; ++s) prod[s] = (a[s] - ma) * (a[s] - ma);
        report.checks.push_back(make_check("folded_var",
                                           "mu=" + fmt(p.mu) + " var=" + fmt(p.var),
                                           f.folded_var(p.mu, p.var), stats_of(prod)));
    }

    // exp(-u^H G u), u circularly symmetric complex Gaussian.
    struct Quad { std::string label; CMatrix g, sigma; };
    std::vector<Quad> quads;
    quads.push_back({"1x1 g=1 sigma=1", CMatrix::Constant(1, 1, 1.0), CMatrix::Constant(1, 1, 1.0)});
    quads.push_back({"1x1 g=0.5 sigma=2", CMatrix::Constant(1, 1, 0.5), CMatrix::Constant(1, 1, 2.0)});
    {
        CMatrix s(2, 2);
        s << 1.0, cplx(0.5, 0.3), cplx(0.5, -0.3), 2.0;
        quads.push_back({"2x2 g=0.3I", 0.3 * CMatrix::Identity(2, 2), s});
    }
    {
        CMatrix g(2, 2), s(2, 2);
        g << 1.0, 0.2, 0.2, 0.5;
        s << 1.0, cplx(0.0, 0.4), cplx(0.0, -0.4), 1.0;
        quads.push_back({"2x2 g=[1 .2;.2 .5]", g, s});
    }
    for (const Quad& qd : quads) {
        const Eigen::Index dim = qd.sigma.rows();
        const CMatrix l = Eigen::LLT<CMatrix>(qd.sigma).matrixL();
        for (std::size_t s = 0; s < samples; ++s) {
            CVector w(dim);
            for (Eigen::Index i = 0; i < dim; ++i) w(i) = rng.complex_normal(1.0);
            const CVector u = l * w;
            a[s] = std::exp(-(u.adjoint() * qd.g * u)(0).real());
        }
        report.checks.push_back(make_check("exp_quadratic", qd.label, f.exp_quadratic(qd.g, qd.sigma),
                                           stats_of(a)));
    }

    // exp(-gamma^T u), u real Gaussian.
    struct Lin { std::string label; RVector gamma, mean; RMatrix sigma; };
    std::vector<Lin> lins;
    lins.push_back({"gamma=1 mean=0 sigma=1", RVector::Constant(1, 1.0), RVector::Zero(1),
                    RMatrix::Constant(1, 1, 1.0)});
    {
        RVector g(2), mu(2);
        RMatrix s(2, 2);
        g << 0.5, -0.3;
        mu << 0.2, 1.0;
        s << 1.0, 0.3, 0.3, 0.5;
        lins.push_back({"gamma=(.5,-.3) mean=(.2,1)", g, mu, s});
    }
    for (const Lin& ln : lins) {
        const Eigen::Index dim = ln.sigma.rows();
        const RMatrix l = Eigen::LLT<RMatrix>(ln.sigma).matrixL();
        for (std::size_t s = 0; s < samples; ++s) {
            RVector w(dim);
            for (Eigen::Index i = 0; i < dim; ++i) w(i) = rng.normal();
            const RVector u = ln.mean + l * w;
            a[s] = std::exp(-ln.gamma.dot(u));
        }
        report.checks.push_back(make_check("exp_linear", ln.label,
                                           f.exp_linear(ln.gamma, ln.mean, ln.sigma), stats_of(a)));
    }
    return report;
}

}  // namespace lspe

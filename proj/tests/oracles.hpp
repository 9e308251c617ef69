#pragma once

// Independent reference computations used only by the tests.

#include "lspe/num_kernel.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace oracle {

using lspe::cplx;
using lspe::CMatrix;
using lspe::CVector;
using lspe::RMatrix;
using lspe::RVector;

/// Cyclic Jacobi eigen-decomposition of a real symmetric matrix.
/// Returns eigenvalues and eigenvectors (columns), unsorted.
inline std::pair<RVector, RMatrix> jacobi(RMatrix a, int sweeps = 100) {
    const Eigen::Index n = a.rows();
    RMatrix v = RMatrix::Identity(n, n);
    for (int s = 0; s < sweeps; ++s) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }
    return {a.diagonal(), v};
}

/// Largest eigenpair of a Hermitian matrix via the real embedding
/// [[X, -Y], [Y, X]] and Jacobi.
inline std::pair<double, CVector> hermitian_top(const CMatrix& h) {
    const Eigen::Index n = h.rows();
    RMatrix e(2 * n, 2 * n);
    e << h.real(), -h.imag(), h.imag(), h.real();
    auto [vals, vecs] = jacobi(e);
    Eigen::Index best = 0;
    vals.maxCoeff(&best);
    CVector u(n);
    for (Eigen::Index i = 0; i < n; ++i) u(i) = cplx(vecs(i, best), vecs(n + i, best));
    u.normalize();
    return {vals(best), u};
}

/// Minimum-norm least-squares solution through the Jacobi pseudo-inverse.
inline RVector pseudo_solve(const RMatrix& t, const RVector& rhs, double rel_cut = 1e-10) {
    auto [vals, vecs] = jacobi(t);
    const double cut = rel_cut * vals.cwiseAbs().maxCoeff();
    RVector x = RVector::Zero(t.rows());
    for (Eigen::Index k = 0; k < vals.size(); ++k) {
        if (std::abs(vals(k)) > cut) x += vecs.col(k) * (vecs.col(k).dot(rhs) / vals(k));
    }
    return x;
}

/// Sample mean and covariance of the columns of a sample list.
struct Moments {
    RVector mean;
    RMatrix cov;
};

inline Moments sample_moments(const std::vector<RVector>& samples) {
    const Eigen::Index m = samples.front().size();
    RVector mean = RVector::Zero(m);
    for (const auto& s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    RMatrix cov = RMatrix::Zero(m, m);
    for (const auto& s : samples) {
        const RVector d = s - mean;
        cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(samples.size() - 1);
    return {mean, cov};
}

inline double rel_frob(const RMatrix& a, const RMatrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace oracle

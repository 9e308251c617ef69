#pragma once

#include "lspe/num_kernel.hpp"

#include <string>

namespace lspe {

/// Elementwise transform applied to phaseless measurements before the
/// spectral matrix is formed.
struct Preprocessor {
    enum class Kind { Identity, Exponential, Optimal, Truncate };

    Kind kind = Kind::Identity;
    /// gamma for Exponential, delta for Optimal, tau for Truncate.
    double param = 0.0;

    static Preprocessor identity() { return {Kind::Identity, 0.0}; }
    static Preprocessor exponential(double gamma);
    static Preprocessor optimal(double delta);
    static Preprocessor truncate(double tau);

    /// identity | exp:GAMMA | optimal:DELTA | trunc:TAU
    static Preprocessor parse(const std::string& text);
    std::string name() const;

    double operator()(double y) const;

    friend bool operator==(const Preprocessor&, const Preprocessor&) = default;
};

RVector apply(const Preprocessor& p, const RVector& y);

}  // namespace lspe

#include "lspe/preprocess.hpp"

#include "lspe/model.hpp"

#include <charconv>
#include <cmath>

namespace lspe {

namespace {

double parse_param(const std::string& text, const std::string& tok) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
        throw ParseError("preprocessor '" + text + "': bad parameter '" + tok + "'");
    }
    return v;
}

}  // namespace

Preprocessor Preprocessor::exponential(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("exponential preprocessor needs gamma > 0");
    }
    return {Kind::Exponential, gamma};
}

Preprocessor Preprocessor::optimal(double delta) {
    if (!(delta > 1.0) || !std::isfinite(delta)) {
        throw std::invalid_argument("optimal preprocessor needs delta > 1");
    }
    return {Kind::Optimal, delta};
}

Preprocessor Preprocessor::truncate(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw std::invalid_argument("truncation preprocessor needs tau > 0");
    }
    return {Kind::Truncate, tau};
}

Preprocessor Preprocessor::parse(const std::string& text) {
    if (text == "identity") return identity();
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ParseError("unknown preprocessor '" + text + "'");
    const std::string head = text.substr(0, colon);
    const double v = parse_param(text, text.substr(colon + 1));
    try {
        if (head == "exp") return exponential(v);
        if (head == "optimal") return optimal(v);
        if (head == "trunc") return truncate(v);
    } catch (const std::invalid_argument& e) {
        throw ParseError("preprocessor '" + text + "': " + e.what());
    }
    throw ParseError("unknown preprocessor '" + text + "'");
}

std::string Preprocessor::name() const {
    switch (kind) {
        case Kind::Identity: return "identity";
        case Kind::Exponential: return "exp:" + format_double(param);
        case Kind::Optimal: return "optimal:" + format_double(param);
        case Kind::Truncate: return "trunc:" + format_double(param);
    }
    return "?";
}

double Preprocessor::operator()(double y) const {
    switch (kind) {
        case Kind::Identity:
            return y;
        case Kind::Exponential:
            return std::exp(-param * y);
        case Kind::Optimal: {
            const double den = y + std::sqrt(param) - 1.0;
            if (std::abs(den) <= 1e-12) {
                throw NumericalError("optimal preprocessor: pole hit at y=" + format_double(y));
            }
            return (y - 1.0) / den;
        }
        case Kind::Truncate:
            return y <= param ? y : 0.0;
    }
    return y;
}

RVector apply(const Preprocessor& p, const RVector& y) {
    RVector out(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) out(i) = p(y(i));
    return out;
}

}  // namespace lspe

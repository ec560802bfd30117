// ============================================================================
// lls.hpp - (log)-location-scale distributions and their mixtures:
// densities, log-densities, means, negative log-likelihood, validation.
// ============================================================================
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlbp/common.hpp"

namespace dlbp {

// Log-space kernels: log-normal <- normal, Weibull <- smallest extreme value,
// log-logistic <- logistic.
enum class LLSFamily : std::uint8_t { LogNormal = 0, Weibull = 1, LogLogistic = 2 };

inline const char* family_name(LLSFamily f) {
    switch (f) {
        case LLSFamily::LogNormal: return "lognormal";
        case LLSFamily::Weibull: return "weibull";
        case LLSFamily::LogLogistic: return "loglogistic";
    }
    return "?";
}

inline LLSFamily family_from_name(const std::string& s) {
    if (s == "lognormal" || s == "log-normal") return LLSFamily::LogNormal;
    if (s == "weibull") return LLSFamily::Weibull;
    if (s == "loglogistic" || s == "log-logistic") return LLSFamily::LogLogistic;
    throw config_error("unknown distribution family: " + s);
}

// Parameter roles follow the density definitions used throughout:
//   LogNormal:   mu = log-space location (any real), sigma = log-space scale > 0
//   Weibull:     mu = shape > 0,                     sigma = scale > 0
//   LogLogistic: mu = scale > 0,                     sigma = shape > 0
// Note the log-logistic roles are reversed relative to the other families
// (mu is the scale, sigma the shape); its mean additionally needs sigma > 1.
struct ComponentParams {
    LLSFamily family = LLSFamily::LogNormal;
    double mu = 0.0;
    double sigma = 1.0;
};

// Family layout of a mixture; component order is fixed and significant.
using MixtureSpec = std::vector<LLSFamily>;

struct MixtureParams {
    std::vector<ComponentParams> components;
    std::vector<double> weights;  // lambda_k >= 0, sum = 1

    std::size_t k() const { return components.size(); }
};

struct ValidationResult {
    bool ok = true;
    std::string message;  // first violated invariant, empty when ok
};

inline constexpr double kWeightSumTol = 1e-9;
inline constexpr double kSigmaFloor = 1e-6;  // applied on training-path outputs

// ----------------------------------------------------------------------------
// Validation
// ----------------------------------------------------------------------------
inline ValidationResult validate_component(const ComponentParams& c) {
    if (!std::isfinite(c.mu) || !std::isfinite(c.sigma))
        return {false, "non-finite parameter"};
    switch (c.family) {
        case LLSFamily::LogNormal:
            if (c.sigma <= 0.0) return {false, "lognormal requires sigma > 0"};
            break;
        case LLSFamily::Weibull:
            if (c.mu <= 0.0) return {false, "weibull requires shape mu > 0"};
            if (c.sigma <= 0.0) return {false, "weibull requires scale sigma > 0"};
            break;
        case LLSFamily::LogLogistic:
            if (c.mu <= 0.0) return {false, "loglogistic requires scale mu > 0"};
            if (c.sigma <= 0.0) return {false, "loglogistic requires shape sigma > 0"};
            break;
    }
    return {};
}

inline ValidationResult validate(const MixtureParams& p) {
    if (p.components.empty()) return {false, "mixture must have K >= 1 components"};
    if (p.weights.size() != p.components.size())
        return {false, "weights/components length mismatch"};
    for (std::size_t i = 0; i < p.components.size(); ++i) {
        auto r = validate_component(p.components[i]);
        if (!r.ok) return {false, "component " + std::to_string(i) + ": " + r.message};
    }
    double s = 0.0;
    for (double w : p.weights) {
        if (!(w >= 0.0)) return {false, "weights must be >= 0"};
        s += w;
    }
    if (std::abs(s - 1.0) > kWeightSumTol)
        return {false, "weights must sum to 1 (got " + fmt_double(s) + ")"};
    return {};
}

inline void require_valid(const MixtureParams& p) {
    auto r = validate(p);
    if (!r.ok) throw std::domain_error("invalid mixture parameters: " + r.message);
}

// lambda = lambda_tilde / sum(lambda_tilde)
inline std::vector<double> normalized_weights(const std::vector<double>& raw) {
    double s = 0.0;
    for (double w : raw) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw std::domain_error("unnormalized weights must be finite and >= 0");
        s += w;
    }
    if (s <= 0.0) throw std::domain_error("unnormalized weights sum to zero");
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / s;
    return out;
}

// ----------------------------------------------------------------------------
// Component log-density and density
// ----------------------------------------------------------------------------
inline double log_pdf(double y, const ComponentParams& c) {
    if (!(y > 0.0)) throw std::domain_error("failure time must be > 0");
    auto r = validate_component(c);
    if (!r.ok) throw std::domain_error("invalid component parameters: " + r.message);

    const double ly = std::log(y);
    switch (c.family) {
        case LLSFamily::LogNormal: {
            const double z = (ly - c.mu) / c.sigma;
            return -ly - std::log(c.sigma) - 0.5 * std::log(2.0 * std::numbers::pi) -
                   0.5 * z * z;
        }
        case LLSFamily::Weibull: {
            // (mu/sigma) (y/sigma)^(mu-1) exp(-(y/sigma)^mu)
            const double lr = ly - std::log(c.sigma);
            return std::log(c.mu) - std::log(c.sigma) + (c.mu - 1.0) * lr - std::exp(c.mu * lr);
        }
        case LLSFamily::LogLogistic: {
            // (sigma/mu) (y/mu)^(sigma-1) / (1 + (y/mu)^sigma)^2
            const double lr = ly - std::log(c.mu);
            const double t = c.sigma * lr;
            // log(1 + e^t) computed overflow-safe
            const double log1pet = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
            return std::log(c.sigma) - std::log(c.mu) + (c.sigma - 1.0) * lr - 2.0 * log1pet;
        }
    }
    return -std::numeric_limits<double>::infinity();
}

inline double pdf(double y, const ComponentParams& c) { return std::exp(log_pdf(y, c)); }

// ----------------------------------------------------------------------------
// Mixture density, log-density (max-shifted log-sum-exp), mean, NLL
// ----------------------------------------------------------------------------
inline double mixture_log_pdf(double y, const MixtureParams& p) {
    require_valid(p);
    if (!(y > 0.0)) throw std::domain_error("failure time must be > 0");
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(p.k(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < p.k(); ++i) {
        if (p.weights[i] == 0.0) continue;  // zero-weight components contribute nothing
        terms[i] = std::log(p.weights[i]) + log_pdf(y, p.components[i]);
        m = std::max(m, terms[i]);
    }
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s);
}

inline double mixture_pdf(double y, const MixtureParams& p) {
    return std::exp(mixture_log_pdf(y, p));
}

enum class WeibullMeanVariant : std::uint8_t {
    Standard = 0,  // sigma * Gamma(1 + 1/mu)
    Squared = 1,   // sigma^2 * Gamma(1 + 1/mu), the literal printed form
};

inline double component_mean(const ComponentParams& c,
                             WeibullMeanVariant variant = WeibullMeanVariant::Standard) {
    auto r = validate_component(c);
    if (!r.ok) throw std::domain_error("invalid component parameters: " + r.message);
    switch (c.family) {
        case LLSFamily::LogNormal:
            return std::exp(c.mu + 0.5 * c.sigma * c.sigma);
        case LLSFamily::Weibull: {
            const double scale =
                variant == WeibullMeanVariant::Squared ? c.sigma * c.sigma : c.sigma;
            return scale * std::tgamma(1.0 + 1.0 / c.mu);
        }
        case LLSFamily::LogLogistic: {
            if (!(c.sigma > 1.0))
                throw std::domain_error("loglogistic mean undefined for sigma <= 1 (sigma = " +
                                        fmt_double(c.sigma) + ")");
            const double a = std::numbers::pi / c.sigma;
            return c.mu * a / std::sin(a);
        }
    }
    return 0.0;
}

inline double mixture_mean(const MixtureParams& p,
                           WeibullMeanVariant variant = WeibullMeanVariant::Standard) {
    require_valid(p);
    double m = 0.0;
    for (std::size_t i = 0; i < p.k(); ++i) {
        if (p.weights[i] == 0.0) continue;
        m += p.weights[i] * component_mean(p.components[i], variant);
    }
    return m;
}

// Mean-reduced negative log-likelihood over a batch of (target, params) pairs.
inline double nll(const std::vector<double>& targets, const std::vector<MixtureParams>& params) {
    if (targets.empty()) throw std::invalid_argument("nll: empty input");
    if (targets.size() != params.size())
        throw std::invalid_argument("nll: targets/params length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        s += mixture_log_pdf(targets[i], params[i]);
    }
    return -s / static_cast<double>(targets.size());
}

}  // namespace dlbp

// ============================================================================
// Independent test oracles: adaptive quadrature over the log-time axis,
// likelihood grid search, brute-force window enumeration, direct quantiles.
// These deliberately avoid the library's own evaluation paths.
// ============================================================================
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "dlbp/lls.hpp"

namespace oracles {

// ----------------------------------------------------------------------------
// Adaptive Simpson quadrature
// ----------------------------------------------------------------------------
inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-10, int depth = 40) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth);
}

// log-space location/scale of a component: log Y has location m and scale s
inline void log_space_loc_scale(const dlbp::ComponentParams& c, double& m, double& s) {
    switch (c.family) {
        case dlbp::LLSFamily::LogNormal:
            m = c.mu;
            s = c.sigma;
            break;
        case dlbp::LLSFamily::Weibull:  // log Y = log(scale) + SEV/shape
            m = std::log(c.sigma);
            s = 1.0 / c.mu;
            break;
        case dlbp::LLSFamily::LogLogistic:  // log Y = log(scale) + Logistic/shape
            m = std::log(c.mu);
            s = 1.0 / c.sigma;
            break;
    }
}

// integral of integrand(y) * mixture_pdf(y) over (0, inf), done on u = log y.
// The domain is split at component-informed knots so that narrow kernels
// inside the union interval cannot be skipped by the adaptive refinement.
inline double integrate_against_mixture(const dlbp::MixtureParams& p,
                                        const std::function<double(double)>& integrand,
                                        bool mean_tail, double tol = 1e-10) {
    std::vector<double> knots;
    for (const auto& c : p.components) {
        double m = 0.0, s = 1.0;
        log_space_loc_scale(c, m, s);
        double span_hi = 80.0;
        if (mean_tail) {
            // integrand e^u against the log-space kernel decays like
            // e^-((1/s - 1) z) for log-logistic and shifts the log-normal peak
            if (c.family == dlbp::LLSFamily::LogLogistic && s < 1.0) {
                span_hi = std::max(span_hi, 60.0 / (1.0 - s) + 60.0);
            }
            if (c.family == dlbp::LLSFamily::LogNormal) {
                span_hi += s + 20.0;  // peak of e^u kernel sits at m + s^2
            }
        }
        for (double z : {-80.0, -40.0, -20.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 20.0, 40.0}) {
            knots.push_back(m + z * s);
        }
        knots.push_back(m + span_hi * s);
    }
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    auto f = [&](double u) {
        const double y = std::exp(u);
        const double g = dlbp::mixture_pdf(y, p);
        return g * y * integrand(y);  // substitution dy = y du
    };
    double total = 0.0;
    const double panel_tol = tol / static_cast<double>(knots.size());
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        total += adaptive_simpson(f, knots[i], knots[i + 1], panel_tol);
    }
    return total;
}

inline double pdf_integral(const dlbp::MixtureParams& p, double tol = 1e-10) {
    return integrate_against_mixture(p, [](double) { return 1.0; }, false, tol);
}

inline double mean_integral(const dlbp::MixtureParams& p, double tol = 1e-10) {
    return integrate_against_mixture(p, [](double y) { return y; }, true, tol);
}

// ----------------------------------------------------------------------------
// Direct log-likelihood in sigma for one component given fixed per-sample
// locations (used to grid-search / numerically differentiate MLE solutions)
// ----------------------------------------------------------------------------
inline double component_loglik_sigma(dlbp::LLSFamily family, const std::vector<double>& y,
                                     const std::vector<double>& locs, double sigma) {
    double ll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        dlbp::ComponentParams c;
        c.family = family;
        c.mu = locs[i];
        c.sigma = sigma;
        ll += dlbp::log_pdf(y[i], c);
    }
    return ll;
}

inline double grid_search_sigma(dlbp::LLSFamily family, const std::vector<double>& y,
                                const std::vector<double>& locs, double lo = 1e-3,
                                double hi = 10.0, int coarse = 4000, int refinements = 8) {
    double best = lo, best_ll = -std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < refinements; ++pass) {
        const double step = (hi - lo) / coarse;
        for (int i = 0; i <= coarse; ++i) {
            const double s = lo + i * step;
            if (s <= 0.0) continue;
            const double ll = component_loglik_sigma(family, y, locs, s);
            if (ll > best_ll) {
                best_ll = ll;
                best = s;
            }
        }
        const double width = (hi - lo) / coarse * 4.0;
        lo = std::max(best - width, 1e-9);
        hi = best + width;
    }
    return best;
}

// ----------------------------------------------------------------------------
// Brute-force sliding-window enumeration straight from the definitions
// ----------------------------------------------------------------------------
struct EnumeratedWindow {
    int first_row = 0;  // 1-based
    double target = 0.0;
};

inline std::vector<EnumeratedWindow> enumerate_windows(long n, double y, int t_w) {
    std::vector<EnumeratedWindow> out;
    for (int j = 1;; ++j) {
        const long last = t_w + (j - 1);
        if (last > n) break;
        const double target = y - static_cast<double>(last);
        if (target <= 0.0) break;
        out.push_back({j, target});
    }
    return out;
}

// direct-quantile oracle (sorted, linear interpolation)
inline double direct_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (v[lo + 1] - v[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace oracles

#pragma once

// Forecast scoring: continuous ranked probability score for Gaussians
// (closed form) and Gaussian mixtures (adaptive quadrature), mean absolute
// error, and the Brier score for discrete forecasts.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/infer.hpp"

namespace mebn {

inline double norm_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// CRPS of a Gaussian forecast N(mean, var) against outcome y. A degenerate
// forecast (zero variance) scores as absolute error.
inline double crps_gaussian(double mean, double var, double y) {
    if (var < 0.0) fail(Errc::BadDistributionForm, "negative forecast variance");
    const double sigma = std::sqrt(var);
    if (sigma == 0.0) return std::abs(y - mean);
    const double z = (y - mean) / sigma;
    static const double inv_sqrt_pi = 0.5641895835477562869;
    return sigma * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - inv_sqrt_pi);
}

// CDF of a Gaussian mixture; zero-variance components contribute a step.
inline double mixture_cdf(const ClgPosterior& mix, double x) {
    double f = 0.0;
    for (const auto& c : mix.comps) {
        if (c.var == 0.0)
            f += x >= c.mean ? c.weight : 0.0;
        else
            f += c.weight * norm_cdf((x - c.mean) / std::sqrt(c.var));
    }
    return f;
}

namespace detail {

template <typename F>
inline double simpson(F&& g, double a, double b, double fa, double fm, double fb, double whole,
                      double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = g(lm), frm = g(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <typename F>
inline double integrate(F&& g, double a, double b, double tol) {
    if (b <= a) return 0.0;
    const double fa = g(a), fb = g(b), fm = g(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson(g, a, b, fa, fm, fb, whole, tol, 48);
}

} // namespace detail

// CRPS of a Gaussian mixture, integrating (F(x) - step(x - y))^2 with
// breakpoints at the outcome and at any degenerate component means.
inline double crps_mixture(const ClgPosterior& mix, double y, double tol = 1e-10) {
    if (mix.comps.empty()) fail(Errc::BadDistributionForm, "empty forecast mixture");
    if (mix.comps.size() == 1) return crps_gaussian(mix.comps[0].mean, mix.comps[0].var, y);
    double lo = y, hi = y;
    std::vector<double> cuts = {y};
    for (const auto& c : mix.comps) {
        const double sd = std::sqrt(std::max(0.0, c.var));
        lo = std::min(lo, c.mean - 12.0 * sd - 1e-9);
        hi = std::max(hi, c.mean + 12.0 * sd + 1e-9);
        if (c.var == 0.0) cuts.push_back(c.mean);
    }
    cuts.push_back(lo);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i], b = cuts[i + 1];
        if (b - a <= 0.0) continue;
        auto g = [&](double x) {
            const double d = mixture_cdf(mix, x) - (x >= y ? 1.0 : 0.0);
            return d * d;
        };
        total += detail::integrate(g, a, b, tol);
    }
    return total;
}

inline double mean_absolute_error(const std::vector<double>& predicted, const std::vector<double>& truth) {
    if (predicted.size() != truth.size() || predicted.empty())
        fail(Errc::LengthMismatch, "prediction/outcome length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) s += std::abs(predicted[i] - truth[i]);
    return s / static_cast<double>(predicted.size());
}

// Multiclass Brier score: squared distance between the forecast vector and
// the outcome indicator.
inline double brier(const std::vector<double>& probs, size_t outcome) {
    if (outcome >= probs.size()) fail(Errc::BadEvidence, "outcome index out of range");
    double s = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        const double d = probs[i] - (i == outcome ? 1.0 : 0.0);
        s += d * d;
    }
    return s;
}

} // namespace mebn

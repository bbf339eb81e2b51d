// fit.hpp
// Exponential-rate fitting: weighted least squares of log(value) against t
// over the tail half of a grid.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qtraj {

struct RateFit {
    double prefactor = 0.0;  // C
    double rate = 0.0;       // lambda, values ~ C exp(-lambda t)
    double r2 = 0.0;
    bool decaying = false;   // fitted curve halves (at least) across the window
    std::size_t first = 0;   // first grid index used
    std::size_t count = 0;
};

// Points with index >= n/2 are used. Weights are (value/stderr)^2 when every
// stderr in the window is positive, uniform otherwise.
inline RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& values,
                        const std::vector<double>& stderrs = {}) {
    const std::size_t n = t.size();
    if (values.size() != n) throw std::invalid_argument("fit_rate: size mismatch");
    if (!stderrs.empty() && stderrs.size() != n) throw std::invalid_argument("fit_rate: stderr size mismatch");
    RateFit out;
    out.first = n / 2;
    out.count = n - out.first;
    if (out.count < 2) throw std::invalid_argument("fit_rate: need at least two points in the fit window");

    bool weighted = !stderrs.empty();
    for (std::size_t i = out.first; i < n; ++i) {
        if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
            throw std::invalid_argument("fit_rate: values must be positive on the fit window");
        }
        if (weighted && !(stderrs[i] > 0.0)) weighted = false;
    }

    double sw = 0.0, sx = 0.0, sy = 0.0;
    std::vector<double> w(n, 1.0), y(n, 0.0);
    for (std::size_t i = out.first; i < n; ++i) {
        y[i] = std::log(values[i]);
        if (weighted) {
            const double rel = stderrs[i] / values[i];
            w[i] = 1.0 / (rel * rel);
        }
        sw += w[i];
        sx += w[i] * t[i];
        sy += w[i] * y[i];
    }
    const double mx = sx / sw;
    const double my = sy / sw;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = out.first; i < n; ++i) {
        const double dx = t[i] - mx;
        const double dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_rate: degenerate time grid");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = out.first; i < n; ++i) {
        const double r = y[i] - (intercept + slope * t[i]);
        ss_res += w[i] * r * r;
    }
    out.rate = -slope;
    out.prefactor = std::exp(intercept);
    out.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 0.0;
    const double span = t[n - 1] - t[out.first];
    out.decaying = out.rate > 0.0 && out.rate * span >= std::log(2.0);
    return out;
}

}  // namespace qtraj

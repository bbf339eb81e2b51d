// measure.hpp
// Qubit circle coordinates, angle densities with numerical normalization,
// the circle W1 comparison, and invariant-measure sampling from a single
// long trajectory.

#pragma once

#include "qtraj/lindblad.hpp"
#include "qtraj/linalg.hpp"
#include "qtraj/trajectory.hpp"
#include "qtraj/transport.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qtraj {

inline constexpr double kPi = boost::math::constants::pi<double>();

// ---------------------------------------------------------------------------
// Bloch coordinates on k = 2.

struct Bloch {
    double x = 0.0, y = 0.0, z = 0.0;
};

inline Bloch bloch(const ProjectivePoint& p) {
    if (p.dim() != 2) throw std::invalid_argument("bloch: qubit states only");
    const Matrix pi = make_projector(p).matrix();
    return {(pi * pauli::x()).trace().real(), (pi * pauli::y()).trace().real(), (pi * pauli::z()).trace().real()};
}

// The circle embedding theta -> (Id + sin(theta) sx + cos(theta) sz) / 2.
inline ProjectivePoint circle_point(double theta) {
    Vector v(2);
    v << std::cos(0.5 * theta), std::sin(0.5 * theta);
    return ProjectivePoint(v);
}

class OffCircle : public std::domain_error {
public:
    explicit OffCircle(double y) : std::domain_error("state off the Y = 0 circle, |Y| = " + std::to_string(std::abs(y))), y_leak(y) {}
    double y_leak;
};

inline constexpr double kYTol = 1e-6;

// theta = atan2(X, Z) in (-pi, pi].
inline double qubit_angle(const ProjectivePoint& p, double y_tol = kYTol) {
    const Bloch b = bloch(p);
    if (std::abs(b.y) > y_tol) throw OffCircle(b.y);
    const double th = std::atan2(b.x, b.z);
    return th == -kPi ? kPi : th;
}

// fs_distance between circle_point(a) and circle_point(b).
inline double circle_distance(double a, double b) { return std::abs(std::sin(0.5 * (a - b))); }

// ---------------------------------------------------------------------------
// AngleDensity: a density on (-pi, pi] known up to a constant.

class AngleDensity {
public:
    using Params = std::map<std::string, double>;

    AngleDensity(std::string name, std::function<double(double)> unnormalized, Params params = {},
                 int grid = 8192)
        : name_(std::move(name)), f_(std::move(unnormalized)), params_(std::move(params)) {
        if (grid < 16) throw std::invalid_argument("AngleDensity: grid too coarse");
        norm_ = integrate(-kPi, 0.0) + integrate(0.0, kPi);
        if (!(norm_ > 0.0) || !std::isfinite(norm_)) throw std::runtime_error("AngleDensity: normalization failed");
        build_cdf(grid);
    }

    const std::string& name() const { return name_; }
    const Params& params() const { return params_; }
    double normalization() const { return norm_; }
    double unnormalized(double theta) const { return f_(wrap(theta)); }
    double operator()(double theta) const { return f_(wrap(theta)) / norm_; }

    // Integral of the normalized density over [a, b] within (-pi, pi].
    double mass(double a, double b) const { return (integrate(a, b)) / norm_; }

    // m equal-mass atoms, the j-th at the (j + 1/2)/m quantile of the
    // piecewise-linear CDF on the fine grid.
    std::vector<double> atoms(int m) const {
        if (m < 1) throw std::invalid_argument("AngleDensity::atoms: m must be positive");
        std::vector<double> out(static_cast<std::size_t>(m));
        std::size_t g = 0;
        for (int j = 0; j < m; ++j) {
            const double q = (j + 0.5) / m;
            while (g + 1 < cdf_.size() && cdf_[g + 1] < q) ++g;
            const double c0 = cdf_[g], c1 = cdf_[g + 1];
            const double frac = c1 > c0 ? (q - c0) / (c1 - c0) : 0.5;
            out[static_cast<std::size_t>(j)] = grid_[g] + frac * (grid_[g + 1] - grid_[g]);
        }
        return out;
    }

    static double wrap(double theta) {
        double t = std::remainder(theta, 2.0 * kPi);
        if (t <= -kPi) t += 2.0 * kPi;
        return t;
    }

private:
    double integrate(double a, double b) const {
        boost::math::quadrature::tanh_sinh<double> ts;
        return ts.integrate(f_, a, b, 1e-10);
    }

    void build_cdf(int grid) {
        grid_.resize(static_cast<std::size_t>(grid) + 1);
        cdf_.assign(static_cast<std::size_t>(grid) + 1, 0.0);
        const double h = 2.0 * kPi / grid;
        std::vector<double> fv(static_cast<std::size_t>(2 * grid) + 1);
        for (int i = 0; i <= 2 * grid; ++i) fv[static_cast<std::size_t>(i)] = f_(-kPi + 0.5 * h * i);
        for (int i = 0; i <= grid; ++i) grid_[static_cast<std::size_t>(i)] = -kPi + h * i;
        // Simpson on each cell.
        for (int i = 0; i < grid; ++i) {
            const std::size_t b = 2 * static_cast<std::size_t>(i);
            const double cell = h / 6.0 * (fv[b] + 4.0 * fv[b + 1] + fv[b + 2]);
            cdf_[static_cast<std::size_t>(i) + 1] = cdf_[static_cast<std::size_t>(i)] + cell;
        }
        const double total = cdf_.back();
        for (double& c : cdf_) c /= total;
    }

    std::string name_;
    std::function<double(double)> f_;
    Params params_;
    double norm_ = 0.0;
    std::vector<double> grid_, cdf_;
};

// W1 between two uniform angle samples on the circle.
inline double circle_w1(const std::vector<double>& a, const std::vector<double>& b,
                        std::size_t budget = kTransportBudget) {
    if (a.empty() || b.empty()) throw std::invalid_argument("circle_w1: empty sample");
    const std::size_t cells = a.size() * b.size();
    if (cells > budget) throw SizeBudgetExceeded(cells);
    Eigen::MatrixXd c(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = circle_distance(a[i], b[j]);
        }
    }
    const std::vector<double> wa(a.size(), 1.0 / static_cast<double>(a.size()));
    const std::vector<double> wb(b.size(), 1.0 / static_cast<double>(b.size()));
    return transport_cost(wa, wb, c, budget);
}

// Exact W1 between the empirical angle sample and an m-atom equal-mass
// discretization of ref, ground metric |sin((theta - theta')/2)|.
inline double circle_w1(const std::vector<double>& samples, const AngleDensity& ref, int m_atoms,
                        std::size_t budget = kTransportBudget) {
    if (samples.empty()) throw std::invalid_argument("circle_w1: no samples");
    const std::size_t cells = samples.size() * static_cast<std::size_t>(m_atoms);
    if (cells > budget) throw SizeBudgetExceeded(cells);
    const auto atoms = ref.atoms(m_atoms);
    return circle_w1(samples, atoms, budget);
}

// ---------------------------------------------------------------------------
// Invariant-measure sampling.

struct InvariantSample {
    EmpiricalMeasure measure;
    std::vector<ProjectivePoint> states;  // in time order
    std::vector<long> jump_counts;        // over the whole run, burn-in included
    long jumps_after_burn_in = 0;
    long degenerate_events = 0;
    double burn_in = 0.0;
    double thinning = 0.0;
    std::vector<std::string> warnings;
};

struct SamplingPlan {
    double burn_in = -1.0;  // negative: 10 / spectral gap
    double thinning = 0.5;
    std::size_t n_samples = 1000;
};

inline InvariantSample sample_invariant(const OperatorModel& model, const ProjectivePoint& x0, SimConfig cfg,
                                        const SamplingPlan& plan) {
    cfg.validate();
    if (plan.n_samples == 0) throw std::invalid_argument("sample_invariant: n_samples must be positive");
    if (!(plan.thinning > 0.0)) throw std::invalid_argument("sample_invariant: thinning must be positive");
    InvariantSample out;
    const ErgodicityReport erg = check_l_erg(model);
    if (!erg.holds) out.warnings.push_back("no unique invariant state; the sample depends on the initial state");
    double burn = plan.burn_in;
    if (burn < 0.0) {
        if (erg.spectral_gap > 0.0) {
            burn = 10.0 / erg.spectral_gap;
        } else {
            burn = 0.0;
            out.warnings.push_back("zero spectral gap; burn-in set to 0");
        }
    }
    out.burn_in = burn;
    out.thinning = plan.thinning;
    const long burn_steps = std::lround(burn / cfg.dt);
    const long thin_steps = std::max(1L, std::lround(plan.thinning / cfg.dt));
    const long total = burn_steps + thin_steps * static_cast<long>(plan.n_samples);

    Rng rng(cfg.seed, 0);
    Stepper stepper(model, cfg);
    Vector x = x0.vector();
    out.jump_counts.assign(static_cast<std::size_t>(model.n_jump()), 0);
    out.states.reserve(plan.n_samples);
    for (long s = 1; s <= total; ++s) {
        const StepInfo info = stepper.step(x, rng);
        if (info.jump >= 0) {
            ++out.jump_counts[static_cast<std::size_t>(info.jump)];
            if (s > burn_steps) ++out.jumps_after_burn_in;
        }
        if (s > burn_steps && (s - burn_steps) % thin_steps == 0) out.states.emplace_back(x);
    }
    out.degenerate_events = stepper.degenerate_events();
    out.measure = EmpiricalMeasure::uniform(out.states);
    return out;
}

inline std::vector<double> angles_of(const std::vector<ProjectivePoint>& states, double y_tol = kYTol) {
    std::vector<double> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(qubit_angle(s, y_tol));
    return out;
}

}  // namespace qtraj

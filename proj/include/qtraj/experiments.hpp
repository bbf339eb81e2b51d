// experiments.hpp
// Desk-scale experiments built from the library: checker reports, invariant
// measure comparisons, two-ensemble mixing curves, contraction and coupling
// traces, purification curves. Shared by the command-line tool and the
// acceptance suite.

#pragma once

#include "qtraj/fit.hpp"
#include "qtraj/gallery.hpp"
#include "qtraj/json_io.hpp"
#include "qtraj/lindblad.hpp"
#include "qtraj/measure.hpp"
#include "qtraj/purification.hpp"
#include "qtraj/random.hpp"
#include "qtraj/trajectory.hpp"
#include "qtraj/transport.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace qtraj {

// ---------------------------------------------------------------------------
// Initial laws

struct InitialLaw {
    enum class Kind { point, circle_uniform, haar };
    Kind kind = Kind::point;
    ProjectivePoint point;

    static InitialLaw at(const ProjectivePoint& p) { return {Kind::point, p}; }
    static InitialLaw circle() { return {Kind::circle_uniform, {}}; }
    static InitialLaw haar() { return {Kind::haar, {}}; }

    ProjectivePoint draw(Rng& rng, int k) const {
        switch (kind) {
            case Kind::point: return point;
            case Kind::circle_uniform:
                if (k != 2) throw std::invalid_argument("circle initial law needs k = 2");
                return circle_point(kPi * (2.0 * rng.uniform() - 1.0));
            case Kind::haar: return ProjectivePoint(rng.haar_vector(k));
        }
        return point;
    }

    std::string describe() const {
        switch (kind) {
            case Kind::point: return "point";
            case Kind::circle_uniform: return "circle_uniform";
            case Kind::haar: return "haar";
        }
        return "?";
    }
};

// Initial states use their own stream so that the noise stream of
// trajectory i does not depend on the initial law.
inline constexpr std::uint64_t kInitialStreamSalt = 0x1a17ULL;

inline std::vector<double> linear_grid(double t0, double t1, int points) {
    if (points < 2) throw std::invalid_argument("time grid needs at least two points");
    std::vector<double> g(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = t0 + (t1 - t0) * i / (points - 1);
    return g;
}

// Fit on the leading run of strictly positive values (a curve that reaches
// exactly zero has fully coalesced). Returns nullopt when fewer than four
// positive points remain.
inline std::optional<RateFit> fit_positive_prefix(const Curve& c) {
    std::size_t n = 0;
    while (n < c.value.size() && c.value[n] > 0.0 && std::isfinite(c.value[n])) ++n;
    if (n < 4) return std::nullopt;
    const std::vector<double> t(c.t.begin(), c.t.begin() + static_cast<std::ptrdiff_t>(n));
    const std::vector<double> v(c.value.begin(), c.value.begin() + static_cast<std::ptrdiff_t>(n));
    const std::vector<double> s(c.se.begin(), c.se.begin() + static_cast<std::ptrdiff_t>(std::min(n, c.se.size())));
    return fit_rate(t, v, s.size() == n ? s : std::vector<double>{});
}

// ---------------------------------------------------------------------------
// check

struct CheckResult {
    ErgodicityReport erg;
    PurReport pur;
    StationaryDecomposition stationary;

    json to_json() const {
        return json{{"erg", qtraj::to_json(erg)}, {"pur", qtraj::to_json(pur)}, {"stationary", qtraj::to_json(stationary)}};
    }
};

inline CheckResult run_check(const OperatorModel& model, const PurOptions& opt = {}) {
    return {check_l_erg(model), check_pur(model, opt), stationary_decomposition(model)};
}

// ---------------------------------------------------------------------------
// invariant

struct InvariantComparison {
    std::string kind = "none";  // circle_w1, atoms, chain, none
    double distance = 0.0;      // circle W1, or L1 distance of weights
    std::vector<double> expected;
    std::vector<double> observed;
    std::vector<double> band;  // 3 sigma half-widths for atom weights
    int m_atoms = 0;

    json to_json() const {
        return json{{"kind", kind},         {"distance", distance}, {"expected", expected},
                    {"observed", observed}, {"band", band},         {"m_atoms", m_atoms}};
    }
};

struct InvariantRun {
    InvariantSample sample;
    InvariantComparison comparison;
};

inline InvariantComparison compare_invariant(const InvariantSample& s, const ExpectedBehaviour& e, int m_atoms) {
    InvariantComparison c;
    if (e.density) {
        c.kind = "circle_w1";
        c.m_atoms = m_atoms;
        c.distance = circle_w1(angles_of(s.states), *e.density, m_atoms);
        return c;
    }
    if (!e.atoms.empty()) {
        c.kind = e.chain ? "chain" : "atoms";
        const double n_eff = static_cast<double>(std::max(1L, s.jumps_after_burn_in));
        for (const auto& a : e.atoms) {
            const double w = s.measure.mass_near(a.point, 1e-6);
            c.expected.push_back(a.weight);
            c.observed.push_back(w);
            c.band.push_back(3.0 * std::sqrt(a.weight * (1.0 - a.weight) / n_eff));
            c.distance += std::abs(w - a.weight);
        }
    }
    return c;
}

inline InvariantRun run_invariant(const OperatorModel& model, const ExpectedBehaviour& expected,
                                  const ProjectivePoint& x0, const SimConfig& cfg, const SamplingPlan& plan,
                                  int m_atoms = 500) {
    InvariantRun r;
    r.sample = sample_invariant(model, x0, cfg, plan);
    r.comparison = compare_invariant(r.sample, expected, m_atoms);
    return r;
}

// Runs the SSE and counts no-jump steps on which the state moved by more
// than `tol` in Fubini-Study distance.
struct ConstancyReport {
    long violations = 0;
    long jumps = 0;
    long steps = 0;
};

inline ConstancyReport between_jump_constancy(const OperatorModel& model, const ProjectivePoint& x0,
                                              const SimConfig& cfg, double tol = 1e-10) {
    ConstancyReport rep;
    Vector prev = x0.vector();
    Rng rng(cfg.seed, 0);
    simulate_sse(model, x0, cfg, rng, [&](long s, double, const Vector& x, const StepInfo& info) {
        if (s > 0) {
            ++rep.steps;
            if (info.jump >= 0) {
                ++rep.jumps;
            } else if (fs_distance(prev, x) > tol) {
                ++rep.violations;
            }
        }
        prev = x;
    });
    return rep;
}

// ---------------------------------------------------------------------------
// mixing

struct MixingResult {
    Curve two_ensemble;
    std::optional<RateFit> fit;
    Curve to_reference;
    std::optional<RateFit> reference_fit;
    std::string law_a, law_b;
    bool shared_noise = true;
    std::size_t replicates = 1;

    json to_json() const {
        return json{{"law_a", law_a},
                    {"law_b", law_b},
                    {"shared_noise", shared_noise},
                    {"replicates", replicates},
                    {"two_ensemble_fit", fit ? qtraj::to_json(*fit) : json(nullptr)},
                    {"reference_fit", reference_fit ? qtraj::to_json(*reference_fit) : json(nullptr)},
                    {"decaying", fit ? fit->decaying : false}};
    }
};

// Two ensembles of n trajectories from laws a and b. With shared_noise the
// i-th trajectories of both ensembles are driven by the same random stream,
// which couples them without changing either marginal law. Every grid point
// reports W1(mu_t^a, mu_t^b) and, when a reference is given, W1(mu_t^a, ref).
// With replicates > 1 the pair of ensembles is drawn that many times on
// disjoint streams; curves hold the replicate mean and its standard error.
inline MixingResult run_mixing(const OperatorModel& model, const InitialLaw& a, const InitialLaw& b,
                               const std::vector<double>& t_grid, std::size_t n, const SimConfig& cfg,
                               const std::optional<EmpiricalMeasure>& reference = std::nullopt,
                               bool shared_noise = true, unsigned threads = 1, std::size_t replicates = 1) {
    cfg.validate();
    if (replicates == 0) throw std::invalid_argument("run_mixing: replicates must be positive");
    const int k = model.dim();
    const auto steps = grid_steps(t_grid, cfg.dt);
    const std::size_t ng = steps.size();
    const std::size_t total = n * replicates;
    std::vector<std::vector<ProjectivePoint>> ens[2];
    for (auto& e : ens) e.assign(ng, std::vector<ProjectivePoint>(total));
    const InitialLaw* laws[2] = {&a, &b};
    for (int which = 0; which < 2; ++which) {
        parallel_for(total, threads, [&](std::size_t i) {
            Rng init(cfg.seed ^ kInitialStreamSalt, (static_cast<std::uint64_t>(which) << 40) + i);
            const ProjectivePoint x0 = laws[which]->draw(init, k);
            Rng rng(cfg.seed, shared_noise ? i : (static_cast<std::uint64_t>(which) << 40) + i);
            Stepper stepper(model, cfg);
            Vector x = x0.vector();
            long s = 0;
            for (std::size_t g = 0; g < ng; ++g) {
                while (s < steps[g]) {
                    stepper.step(x, rng);
                    ++s;
                }
                ens[which][g][i] = ProjectivePoint(x);
            }
        });
    }
    MixingResult out;
    out.law_a = a.describe();
    out.law_b = b.describe();
    out.shared_noise = shared_noise;
    out.replicates = replicates;
    out.two_ensemble.t = t_grid;
    if (reference) out.to_reference.t = t_grid;
    const auto push = [&](Curve& c, const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        c.value.push_back(mean);
        c.se.push_back(v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0);
    };
    for (std::size_t g = 0; g < ng; ++g) {
        std::vector<double> w_ab, w_ref;
        for (std::size_t r = 0; r < replicates; ++r) {
            const auto first = ens[0][g].begin() + static_cast<std::ptrdiff_t>(r * n);
            const auto ma = EmpiricalMeasure::uniform(std::vector<ProjectivePoint>(first, first + static_cast<std::ptrdiff_t>(n)));
            const auto fb = ens[1][g].begin() + static_cast<std::ptrdiff_t>(r * n);
            const auto mb = EmpiricalMeasure::uniform(std::vector<ProjectivePoint>(fb, fb + static_cast<std::ptrdiff_t>(n)));
            w_ab.push_back(wasserstein1(ma, mb));
            if (reference) w_ref.push_back(wasserstein1(ma, *reference));
        }
        push(out.two_ensemble, w_ab);
        if (reference) push(out.to_reference, w_ref);
    }
    out.fit = fit_positive_prefix(out.two_ensemble);
    if (reference) out.reference_fit = fit_positive_prefix(out.to_reference);
    return out;
}

// Reference measure for mixing: analytic atoms, or the equal-mass
// discretization of an analytic circle density.
inline std::optional<EmpiricalMeasure> analytic_reference(const ExpectedBehaviour& e, int m_atoms) {
    if (!e.atoms.empty()) {
        std::vector<ProjectivePoint> pts;
        std::vector<double> w;
        for (const auto& a : e.atoms) {
            pts.push_back(a.point);
            w.push_back(a.weight);
        }
        double total = 0.0;
        for (double x : w) total += x;
        for (double& x : w) x /= total;
        return EmpiricalMeasure(pts, w);
    }
    if (e.density) {
        std::vector<ProjectivePoint> pts;
        for (double th : e.density->atoms(m_atoms)) pts.push_back(circle_point(th));
        return EmpiricalMeasure::uniform(std::move(pts));
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// ftrace

struct SubmultiplicativityReport {
    long pairs = 0;
    long violations = 0;
    double worst_ratio = 0.0;  // max f(t+s) / (f(t) f(s) (1 + 3 rel))
};

// Checks f(t+s) <= f(t) f(s) (1 + sigmas * rel) on all grid pairs whose sum
// lies on the grid, rel being the combined relative standard error.
inline SubmultiplicativityReport submultiplicativity(const Curve& f, double sigmas = 3.0) {
    SubmultiplicativityReport rep;
    const std::size_t n = f.t.size();
    const double scale = f.t.empty() ? 1.0 : std::max(1.0, std::abs(f.t.back()));
    auto rel = [&](std::size_t i) { return f.value[i] > 0.0 ? f.se[i] / f.value[i] : 0.0; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double ts = f.t[i] + f.t[j];
            for (std::size_t l = 0; l < n; ++l) {
                if (std::abs(f.t[l] - ts) > 1e-9 * scale) continue;
                ++rep.pairs;
                const double r = std::sqrt(rel(i) * rel(i) + rel(j) * rel(j) + rel(l) * rel(l));
                const double bound = f.value[i] * f.value[j] * (1.0 + sigmas * r);
                const double ratio = bound > 0.0 ? f.value[l] / bound : (f.value[l] > 0.0 ? INFINITY : 0.0);
                rep.worst_ratio = std::max(rep.worst_ratio, ratio);
                if (f.value[l] > bound) ++rep.violations;
            }
        }
    }
    return rep;
}

}  // namespace qtraj

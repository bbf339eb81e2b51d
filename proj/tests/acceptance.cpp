// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance            all criteria
//   acceptance 3 8 11     a subset

#include "qtraj/experiments.hpp"
#include "qtraj/gallery.hpp"
#include "qtraj/lindblad.hpp"
#include "qtraj/measure.hpp"
#include "qtraj/purification.hpp"
#include "qtraj/trajectory.hpp"
#include "qtraj/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace qtraj;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

const unsigned kThreads = default_threads();

// f-rate from criterion 8, reused by 9
double g_lambda_f = 0.0;

OperatorModel random_model(Rng& rng, int k) {
    const Matrix g = rng.ginibre(k);
    std::vector<Matrix> l, c;
    const int nl = 1 + static_cast<int>(rng.uniform() * 2), nc = static_cast<int>(rng.uniform() * 3);
    for (int i = 0; i < nl; ++i) l.push_back(0.5 * rng.ginibre(k));
    for (int i = 0; i < nc; ++i) c.push_back(0.5 * rng.ginibre(k));
    return OperatorModel::from_matrices(0.5 * (g + g.adjoint()), l, c);
}

Outcome semigroup() {
    Rng rng(101, 0);
    double worst_tr = 0.0, worst_comp = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + trial % 3;
        const OperatorModel m = random_model(rng, k);
        const Matrix g = rng.ginibre(k);
        Matrix rho = g * g.adjoint();
        rho /= rho.trace().real();
        for (double t : {0.1, 1.0, 10.0}) {
            const Matrix et = evolve_master_raw(m, rho, t);
            worst_tr = std::max(worst_tr, std::abs(et.trace() - 1.0));
            const Matrix half = evolve_master_raw(m, evolve_master_raw(m, rho, 0.5 * t), 0.5 * t);
            const Matrix split = evolve_master_raw(m, evolve_master_raw(m, rho, 0.3 * t), 0.7 * t);
            worst_comp = std::max({worst_comp, (half - et).norm(), (split - et).norm()});
        }
    }
    return {worst_tr <= 1e-9 && worst_comp <= 1e-8,
            "max |tr - 1| " + fmt(worst_tr) + ", max composition error " + fmt(worst_comp)};
}

Outcome unraveling() {
    const auto ex = qnd_model(1.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    cfg.seed = 202;
    const std::size_t n = 10000;
    std::vector<Matrix> per(n);
    parallel_for(n, kThreads, [&](std::size_t i) {
        Rng rng(cfg.seed, i);
        const auto st = simulate_sse(ex.model, ex.default_start, cfg, rng);
        per[i] = make_projector(st.state).matrix();
    });
    Matrix mean = Matrix::Zero(2, 2);
    for (const auto& p : per) mean += p;
    mean /= static_cast<double>(n);
    const Matrix exact = evolve_master_raw(ex.model, make_projector(ex.default_start).matrix(), 1.0);
    const double td = 0.5 * trace_norm(Matrix(mean - exact));
    return {td <= 0.02, "trace distance " + fmt(td) + " (limit 0.02)"};
}

InvariantRun circle_run(const NamedExample& ex, std::uint64_t seed) {
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.seed = seed;
    SamplingPlan plan;
    plan.burn_in = 50.0;
    plan.thinning = 0.5;
    plan.n_samples = 9900;  // T = 5000 including burn-in
    return run_invariant(ex.model, ex.expected, ex.default_start, cfg, plan, 1000);
}

Outcome qnd_density_check() {
    bool ok = true;
    std::string d;
    std::uint64_t seed = 303;
    for (double g : {1.0, 0.2, 5.0}) {
        const auto r = circle_run(qnd_model(g), seed++);
        ok = ok && r.comparison.distance <= 0.02;
        d += "gamma " + fmt(g) + ": W1 " + fmt(r.comparison.distance) + "; ";
    }
    return {ok, d + "limit 0.02"};
}

Outcome thermal_density_check() {
    bool ok = true;
    std::string d;
    std::uint64_t seed = 404;
    for (auto [a, b] : std::vector<std::pair<double, double>>{{1, 1}, {2, 1}, {5, 1}}) {
        const auto r = circle_run(thermal_diffusive_model(a, b), seed++);
        ok = ok && r.comparison.distance <= 0.02;
        d += "(" + fmt(a) + "," + fmt(b) + "): W1 " + fmt(r.comparison.distance) + "; ";
    }
    return {ok, d + "limit 0.02"};
}

Outcome thermal_atoms() {
    const auto ex = thermal_jump_model(2.0, 1.0);
    SimConfig cfg;
    cfg.seed = 505;
    SamplingPlan plan;
    plan.burn_in = 10.0;
    plan.thinning = 0.5;
    plan.n_samples = 3980;  // T = 2000
    const auto r = run_invariant(ex.model, ex.expected, ex.default_start, cfg, plan);
    const double p = r.comparison.observed[0], band = r.comparison.band[0];
    return {std::abs(p - 2.0 / 3.0) <= band,
            "e1 weight " + fmt(p) + ", 2/3 +- " + fmt(band) + " (n_eff " + std::to_string(r.sample.jumps_after_burn_in) + ")"};
}

Outcome markov_check() {
    const Eigen::MatrixXd q = cyclic_generator({1.0, 2.0, 3.0});
    const auto ex = markov_embedding_model(q);
    // eigenvector oracle: kernel of Q^T from a general eigensolver
    Eigen::EigenSolver<Eigen::MatrixXd> es(q.transpose());
    Eigen::Index z = 0;
    es.eigenvalues().cwiseAbs().minCoeff(&z);
    Eigen::VectorXd pi = es.eigenvectors().col(z).real();
    pi /= pi.sum();
    SimConfig cfg;
    cfg.seed = 606;
    SamplingPlan plan;
    plan.burn_in = 10.0;
    plan.thinning = 0.5;
    plan.n_samples = 20000;
    const auto r = run_invariant(ex.model, ex.expected, ex.default_start, cfg, plan);
    double l1 = 0.0;
    for (int i = 0; i < 3; ++i) l1 += std::abs(r.comparison.observed[static_cast<std::size_t>(i)] - pi(i));
    long violations = 0, jumps = 0;
    cfg.horizon = 200.0;
    for (int s = 0; s < 3; ++s) {
        cfg.seed = 607 + static_cast<std::uint64_t>(s);
        const auto c = between_jump_constancy(ex.model, ProjectivePoint::basis(3, s), cfg);
        violations += c.violations;
        jumps += c.jumps;
    }
    return {l1 <= 0.02 && violations == 0,
            "occupancy L1 " + fmt(l1) + " (limit 0.02), constancy violations " + std::to_string(violations) + " over " +
                std::to_string(jumps) + " jumps"};
}

double scaling_l1(double g) {
    const int n = 4000;
    const double a = 0.05, b = 20.0, h = (b - a) / n;
    auto diff = [g](double th) {
        return std::abs(qnd_tau(g, th / g) / (2 * g * g * g) - std::exp(-1.0 / th) / (th * th * th));
    };
    double s = diff(a) + diff(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * diff(a + i * h);
    return s * h / 3.0;
}

Outcome scaling() {
    const double d10 = scaling_l1(10), d100 = scaling_l1(100), d1000 = scaling_l1(1000);
    return {d10 > d100 && d100 > d1000 && d1000 <= 0.05,
            "L1 at gamma 10/100/1000: " + fmt(d10) + " / " + fmt(d100) + " / " + fmt(d1000) + " (limit 0.05)"};
}

Outcome contraction() {
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.seed = 808;
    const auto f = estimate_f(qnd_model(1.0).model, linear_grid(0.0, 20.0, 21), 2000, cfg, kThreads);
    const auto sub = submultiplicativity(f.curve);
    g_lambda_f = f.fit.rate;
    return {f.fit.r2 >= 0.95 && f.fit.rate > 0.0 && sub.violations == 0,
            "rate " + fmt(f.fit.rate) + ", r2 " + fmt(f.fit.r2) + ", submultiplicativity violations " +
                std::to_string(sub.violations) + "/" + std::to_string(sub.pairs)};
}

Outcome coupling() {
    if (!(g_lambda_f > 0.0)) contraction();
    if (!(g_lambda_f > 0.0)) return {false, "no positive f-rate to set the horizon"};
    const auto ex = qnd_model(1.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.seed = 909;
    const double horizon = 10.0 / g_lambda_f;
    const auto grid = linear_grid(0.0, horizon, 11);
    const auto r = coupling_distance(
        ex.model, [&](Rng&) { return ex.default_start; }, grid, 500, cfg, kThreads);
    const double med = r.median_distance.back();
    return {r.violations == 0 && med < 1e-2,
            "violations " + std::to_string(r.violations) + ", median d at t = " + fmt(horizon) + ": " + fmt(med)};
}

Outcome mixing() {
    const auto ex = qnd_model(1.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.seed = 1010;
    const auto r = run_mixing(ex.model, InitialLaw::at(ex.default_start), InitialLaw::circle(), linear_grid(0.0, 12.0, 25),
                              1000, cfg, std::nullopt, true, kThreads, 8);
    if (!r.fit) return {false, "fewer than four positive points"};
    return {r.fit->rate > 0.0 && r.fit->r2 >= 0.9,
            "rate " + fmt(r.fit->rate) + ", r2 " + fmt(r.fit->r2) + " over " + std::to_string(r.fit->count) + " points"};
}

Outcome purification() {
    bool ok = true;
    std::string d;
    std::uint64_t seed = 1111;
    const std::vector<NamedExample> models{qnd_model(1.0), thermal_diffusive_model(2.0, 1.0), thermal_jump_model(2.0, 1.0),
                                           markov_embedding_model(cyclic_generator({1, 2, 3})), counterexample_model()};
    for (const auto& ex : models) {
        SimConfig cfg;
        cfg.dt = 1e-3;
        cfg.seed = seed++;
        const auto mc = martingale_check(ex.model, 1.0, 2.0, 2000, cfg, 3.0, kThreads);
        cfg.seed = seed++;
        const auto p = purification_diagnostic(ex.model, linear_grid(0.0, 20.0, 5), 500, cfg, kThreads);
        const bool good = mc.passed && p.value.back() <= 1e-3;
        ok = ok && good;
        long within = 0;
        for (const auto& e : mc.entries) within += e.within ? 1 : 0;
        d += ex.name + ": martingale " + std::to_string(within) + "/" + std::to_string(mc.entries.size()) +
             ", 1-lmax(20) " + fmt(p.value.back()) + "; ";
    }
    return {ok, d};
}

Outcome regression() {
    bool ok = true;
    std::string d;
    for (const auto& name : gallery_names()) {
        const auto ex = gallery_example(name);
        const bool erg = check_l_erg(ex.model).holds;
        const auto pur = check_pur(ex.model).verdict;
        const bool match = erg == ex.expected.erg_holds && pur == ex.expected.pur_verdict;
        ok = ok && match;
        d += name + ": erg " + (erg ? "holds" : "fails") + ", pur " + to_string(pur) + (match ? "" : " MISMATCH") + "; ";
    }
    return {ok, d};
}

Outcome w1_exactness() {
    Rng rng(1313, 0);
    auto pts = [&](int n, int k) {
        std::vector<ProjectivePoint> v;
        for (int i = 0; i < n; ++i) v.emplace_back(rng.haar_vector(k));
        return v;
    };
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + trial % 6, k = 2 + trial % 3;
        const auto a = pts(n, k), b = pts(n, k);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        double best = INFINITY;
        do {
            double c = 0.0;
            for (int i = 0; i < n; ++i) c += fs_distance(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
            best = std::min(best, c / n);
        } while (std::next_permutation(perm.begin(), perm.end()));
        worst = std::max(worst, std::abs(wasserstein1(EmpiricalMeasure::uniform(a), EmpiricalMeasure::uniform(b)) - best));
    }
    long axiom_fail = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int k = 2 + trial % 2;
        const auto a = EmpiricalMeasure::uniform(pts(1 + trial % 5, k));
        const auto b = EmpiricalMeasure::uniform(pts(1 + (trial / 5) % 5, k));
        const auto c = EmpiricalMeasure::uniform(pts(1 + (trial / 25) % 5, k));
        const double ab = wasserstein1(a, b), ba = wasserstein1(b, a), bc = wasserstein1(b, c), ac = wasserstein1(a, c);
        const bool good = ab >= 0.0 && std::abs(ab - ba) <= 1e-8 && ac <= ab + bc + 1e-8 && wasserstein1(a, a) <= 1e-8;
        axiom_fail += good ? 0 : 1;
    }
    return {worst <= 1e-9 && axiom_fail == 0,
            "max deviation from assignment optimum " + fmt(worst) + ", metric axiom failures " + std::to_string(axiom_fail)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"semigroup correctness", [] { return semigroup(); }},
        {"unraveling consistency", [] { return unraveling(); }},
        {"QND invariant density", [] { return qnd_density_check(); }},
        {"thermal diffusive density", [] { return thermal_density_check(); }},
        {"thermal jump atoms", [] { return thermal_atoms(); }},
        {"Markov embedding", [] { return markov_check(); }},
        {"strong-noise scaling", [] { return scaling(); }},
        {"contraction statistic f", [] { return contraction(); }},
        {"maximum-likelihood coupling", [] { return coupling(); }},
        {"two-ensemble mixing", [] { return mixing(); }},
        {"martingale and purification", [] { return purification(); }},
        {"checker regression", [] { return regression(); }},
        {"W1 solver exactness", [] { return w1_exactness(); }},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}

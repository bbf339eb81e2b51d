#include "qtraj/gallery.hpp"
#include "qtraj/lindblad.hpp"
#include "qtraj/trajectory.hpp"

#include <gtest/gtest.h>

using namespace qtraj;

namespace {

SimConfig config(double dt, double horizon, std::uint64_t seed) {
    SimConfig c;
    c.dt = dt;
    c.horizon = horizon;
    c.seed = seed;
    return c;
}

OperatorModel mixed_model() {
    Rng rng(77, 0);
    const Matrix g = rng.ginibre(2);
    return OperatorModel::from_matrices(0.5 * (g + g.adjoint()), {0.6 * rng.ginibre(2)}, {0.5 * rng.ginibre(2)});
}

double sz_of(const Vector& x) { return std::norm(x(0)) - std::norm(x(1)); }

}  // namespace

TEST(SimConfig, Validation) {
    SimConfig c;
    c.dt = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.dt = 1e-3;
    c.max_jump_prob = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Sse, UnitaryTracksExactEvolution) {
    const Matrix h = pauli::x() + 0.3 * pauli::z();
    const auto m = OperatorModel::from_matrices(h, {}, {});
    const ProjectivePoint x0 = ProjectivePoint::basis(2, 0);
    const double T = 2.0;
    const Vector exact = (Matrix(-kI * h * T).exp()) * x0.vector();
    double prev = 0.0;
    for (double dt : {1e-2, 5e-3}) {
        Rng rng(1, 0);
        const auto out = simulate_sse(m, x0, config(dt, T, 1), rng);
        EXPECT_NEAR(out.state.vector().norm(), 1.0, 1e-12);
        const double err = fs_distance(out.state.vector(), exact);
        EXPECT_LE(err, 10 * dt);
        // normalized Euler is a rotation with angle error O(dt^3) per step
        if (prev > 0.0) {
            EXPECT_NEAR(prev / err, 4.0, 0.6);
        }
        prev = err;
    }
}

TEST(Sse, ThermalJumpFromE1) {
    const auto ex = thermal_jump_model(2.0, 1.0);
    Rng rng(2, 0);
    Vector prev = ex.default_start.vector();
    bool first_jump = true;
    long violations = 0, jumps = 0;
    simulate_sse(ex.model, ex.default_start, config(1e-3, 50.0, 2), rng,
                 [&](long s, double, const Vector& x, const StepInfo& info) {
                     if (s == 0) return;
                     if (info.jump >= 0) {
                         ++jumps;
                         if (first_jump) {
                             EXPECT_EQ(info.jump, 1);  // C1 = sqrt(b) s-
                             EXPECT_TRUE(ProjectivePoint(x).same_as(ProjectivePoint::basis(2, 1)));
                             first_jump = false;
                         }
                         // always lands exactly on a basis vector
                         EXPECT_TRUE(std::abs(x(0)) == 0.0 || std::abs(x(1)) == 0.0);
                     } else if (fs_distance(prev, x) != 0.0) {
                         ++violations;
                     }
                     prev = x;
                 });
    EXPECT_GT(jumps, 10);
    EXPECT_EQ(violations, 0);
}

TEST(Sse, JumpBudget) {
    const auto m = thermal_jump_model(200.0, 100.0).model;
    SimConfig c = config(1e-2, 1.0, 3);
    Rng rng(3, 0);
    EXPECT_THROW(simulate_sse(m, ProjectivePoint::basis(2, 1), c, rng), JumpBudgetExceeded);
}

TEST(Sse, QndMeanMatchesSemigroup) {
    const auto ex = qnd_model(1.0);
    const double t = 1.0;
    const std::size_t n = 10000;
    std::vector<double> z(n);
    const SimConfig c = config(1e-3, t, 4);
    parallel_for(n, default_threads(), [&](std::size_t i) {
        Rng rng(c.seed, i);
        z[i] = sz_of(simulate_sse(ex.model, ex.default_start, c, rng).state.vector());
    });
    const auto ms = mean_stderr(z);
    const Matrix rho_t = evolve_master(ex.model, make_projector(ex.default_start), t).matrix();
    const double exact = (rho_t * pauli::z()).trace().real();
    EXPECT_LE(std::abs(ms.mean - exact), 3 * ms.se + 1e-12) << ms.mean << " vs " << exact;
}

TEST(Sse, Reproducible) {
    const auto m = mixed_model();
    Rng a(5, 3), b(5, 3);
    const auto ra = simulate_sse(m, ProjectivePoint::basis(2, 0), config(1e-3, 2.0, 5), a);
    const auto rb = simulate_sse(m, ProjectivePoint::basis(2, 0), config(1e-3, 2.0, 5), b);
    EXPECT_EQ((ra.state.vector() - rb.state.vector()).norm(), 0.0);
    EXPECT_EQ(ra.jump_counts, rb.jump_counts);
}

TEST(Sse, DegenerateJumpBecomesNoJump) {
    // C only acts on e2; from e1 the rate is 0 and no jump can fire
    Matrix c = Matrix::Zero(2, 2);
    c(0, 1) = 1.0;
    const auto m = OperatorModel::from_matrices(Matrix::Zero(2, 2), {}, {c});
    Rng rng(6, 0);
    const auto out = simulate_sse(m, ProjectivePoint::basis(2, 0), config(1e-2, 10.0, 6), rng);
    EXPECT_EQ(out.jump_counts[0], 0);
    EXPECT_TRUE(out.state.same_as(ProjectivePoint::basis(2, 0)));
}

TEST(Sme, PureStaysPureAndMatchesSse) {
    const auto m = mixed_model();
    const SimConfig c = config(1e-3, 3.0, 7);
    for (Scheme scheme : {Scheme::linear_normalize}) {
        SimConfig cs = c;
        cs.scheme = scheme;
        Stepper s1(m, cs), s2(m, cs);
        Rng r1(7, 0), r2(7, 0);
        Vector x = ProjectivePoint::basis(2, 0).vector();
        Matrix rho = make_projector(ProjectivePoint::basis(2, 0)).matrix();
        for (long s = 0; s < cs.steps(); ++s) {
            const StepInfo a = s1.step(x, r1);
            const StepInfo b = s2.step(rho, r2);
            ASSERT_EQ(a.jump, b.jump);
            ASSERT_LE((make_projector(ProjectivePoint(x)).matrix() - rho).norm(), 1e-9) << "step " << s;
            ASSERT_NEAR(rho.trace().real(), 1.0, 1e-12);
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
        EXPECT_NEAR(es.eigenvalues()(1), 1.0, 1e-9);
    }
}

TEST(Sme, EnsembleMeanMatchesSemigroup) {
    const auto m = mixed_model();
    const double t = 1.0;
    const std::size_t n = 4000;
    const SimConfig c = config(1e-3, t, 8);
    Matrix rho0 = Matrix::Identity(2, 2) * 0.5;
    rho0(0, 1) = 0.2;
    rho0(1, 0) = 0.2;
    std::vector<Matrix> out(n);
    parallel_for(n, default_threads(), [&](std::size_t i) {
        Rng rng(c.seed, i);
        out[i] = simulate_sme(m, DensityMatrix(rho0), c, rng).state.matrix();
    });
    const Matrix exact = evolve_master(m, DensityMatrix(rho0), t).matrix();
    for (int r = 0; r < 2; ++r) {
        for (int col = 0; col < 2; ++col) {
            for (int part = 0; part < 2; ++part) {
                std::vector<double> v(n);
                for (std::size_t i = 0; i < n; ++i) v[i] = part ? out[i](r, col).imag() : out[i](r, col).real();
                const auto ms = mean_stderr(v);
                const double e = part ? exact(r, col).imag() : exact(r, col).real();
                EXPECT_LE(std::abs(ms.mean - e), 3 * ms.se + 2e-3) << r << col << part;
            }
        }
    }
}

TEST(Sme, DeterministicStepIsLindbladEuler) {
    // Noise-free: the step is a unitary Euler step up to normalization.
    const Matrix h = pauli::y() + 0.5 * pauli::z();
    const auto m = OperatorModel::from_matrices(h, {}, {});
    Matrix rho = Matrix::Identity(2, 2) * 0.5;
    rho(0, 1) = 0.3;
    rho(1, 0) = 0.3;
    for (double dt : {1e-2, 1e-3}) {
        Rng rng(9, 0);
        const DensityMatrix next = sme_step(m, DensityMatrix(rho), config(dt, dt, 9), rng);
        const Matrix exact = evolve_master(m, DensityMatrix(rho), dt).matrix();
        EXPECT_LE((next.matrix() - exact).norm(), 5 * dt * dt * std::pow(operator_norm(h), 2));
    }
}

TEST(Sme, EulerDirectAgreesInMean) {
    const auto m = mixed_model();
    const std::size_t n = 3000;
    SimConfig c = config(1e-3, 1.0, 10);
    c.scheme = Scheme::euler_direct;
    std::vector<double> z(n);
    parallel_for(n, default_threads(), [&](std::size_t i) {
        Rng rng(c.seed, i);
        z[i] = (simulate_sme(m, DensityMatrix::maximally_mixed(2), c, rng).state.matrix() * pauli::z()).trace().real();
    });
    const auto ms = mean_stderr(z);
    const double exact = (evolve_master(m, DensityMatrix::maximally_mixed(2), 1.0).matrix() * pauli::z()).trace().real();
    EXPECT_LE(std::abs(ms.mean - exact), 3 * ms.se + 2e-3);
}

TEST(Sse, WeakOrderOne) {
    // Weak error of E tr(rho_t sz) at t = 1 against the semigroup. The
    // coarse steps make the bias dominate the Monte Carlo error.
    const auto m = qnd_model(1.0).model;
    const ProjectivePoint x0 = circle_point(0.3);
    const double exact = (evolve_master(m, make_projector(x0), 1.0).matrix() * pauli::z()).trace().real();
    std::vector<double> err;
    for (double dt : {0.1, 0.05}) {
        const std::size_t n = 400000;
        const SimConfig c = config(dt, 1.0, 11);
        std::vector<double> z(n);
        parallel_for(n, default_threads(), [&](std::size_t i) {
            Rng rng(c.seed, i);
            z[i] = sz_of(simulate_sse(m, x0, c, rng).state.vector());
        });
        const auto ms = mean_stderr(z);
        err.push_back(std::abs(ms.mean - exact));
        EXPECT_LT(3 * ms.se, 0.25 * err.back()) << "bias not resolved at dt " << dt;
    }
    const double ratio = err[0] / err[1];
    EXPECT_GE(ratio, 1.0 / (0.5 * 1.3));
    EXPECT_LE(ratio, 1.0 / (0.5 * 0.7));
}

TEST(Propagator, InitialAndRescale) {
    const auto p = PropagatorState::identity(3, 1);
    EXPECT_EQ((p.s - Matrix::Identity(3, 3)).norm(), 0.0);
    EXPECT_EQ(p.z_log, 0.0);
    const auto m = mixed_model();
    PropagatorState q = PropagatorState::identity(2, DensityMatrix::maximally_mixed(2), 1);
    Stepper st(m, config(1e-3, 1.0, 12));
    Rng rng(12, 0);
    for (int i = 0; i < 2000; ++i) {
        const Matrix before = likelihood_matrix(q).matrix();
        st.step(q, rng, Measure::reference);
        const double on = operator_norm(q.s);
        ASSERT_GE(on, 0.5);
        ASSERT_LE(on, 2.0 + 1e-12);
        (void)before;
    }
    // M_t is scale-invariant
    PropagatorState r = q;
    r.s *= 3.7;
    r.log_scale -= std::log(3.7);
    EXPECT_LE((likelihood_matrix(r).matrix() - likelihood_matrix(q).matrix()).norm(), 1e-12);
}

TEST(Propagator, ReferenceMartingaleAndMean) {
    const auto m = mixed_model();
    const double t = 1.0;
    const std::size_t n = 20000;
    Matrix rho = Matrix::Identity(2, 2) * 0.5;
    rho(0, 0) = 0.7;
    rho(1, 1) = 0.3;
    rho(0, 1) = cplx(0.1, 0.2);
    rho(1, 0) = cplx(0.1, -0.2);
    const SimConfig c = config(1e-3, t, 13);
    std::vector<double> z(n);
    std::vector<Matrix> srs(n);
    parallel_for(n, default_threads(), [&](std::size_t i) {
        Rng rng(c.seed, i);
        Stepper st(m, c);
        PropagatorState p = PropagatorState::identity(2, DensityMatrix(rho), m.n_jump());
        for (long s = 0; s < c.steps(); ++s) st.step(p, rng, Measure::reference);
        z[i] = std::exp(p.z_log);
        const Matrix ts = p.true_s();
        srs[i] = ts * rho * ts.adjoint();
    });
    const auto mz = mean_stderr(z);
    EXPECT_LE(std::abs(mz.mean - 1.0), 3 * mz.se + 1e-3) << mz.mean << " se " << mz.se;
    const Matrix exact = evolve_master_raw(m, rho, t);
    for (int r = 0; r < 2; ++r) {
        for (int col = 0; col < 2; ++col) {
            for (int part = 0; part < 2; ++part) {
                std::vector<double> v(n);
                for (std::size_t i = 0; i < n; ++i) v[i] = part ? srs[i](r, col).imag() : srs[i](r, col).real();
                const auto ms = mean_stderr(v);
                const double e = part ? exact(r, col).imag() : exact(r, col).real();
                EXPECT_LE(std::abs(ms.mean - e), 3 * ms.se + 1e-3) << r << col << part;
            }
        }
    }
}

TEST(Propagator, GirsanovReweighting) {
    // E_P[Z_t g(rho_t)] = E^rho[g(rho_t)] with g = tr(rho_t sz)^2
    const auto m = mixed_model();
    const std::size_t n = 20000;
    const SimConfig c = config(1e-3, 1.0, 14);
    const DensityMatrix rho = DensityMatrix::maximally_mixed(2);
    auto g = [](const PropagatorState& p) {
        const Matrix r = p.s * p.rho * p.s.adjoint();
        const double v = (r * pauli::z()).trace().real() / r.trace().real();
        return v * v;
    };
    std::vector<double> ref(n), phys(n);
    parallel_for(n, default_threads(), [&](std::size_t i) {
        Stepper st(m, c);
        Rng r1(c.seed, i), r2(c.seed + 1, i);
        PropagatorState a = PropagatorState::identity(2, rho, m.n_jump());
        PropagatorState b = a;
        for (long s = 0; s < c.steps(); ++s) {
            st.step(a, r1, Measure::reference);
            st.step(b, r2, Measure::physical);
        }
        ref[i] = std::exp(a.z_log) * g(a);
        phys[i] = g(b);
    });
    const auto ma = mean_stderr(ref), mb = mean_stderr(phys);
    EXPECT_LE(std::abs(ma.mean - mb.mean), 3 * std::hypot(ma.se, mb.se) + 1e-3);
}

TEST(Likelihood, Examples) {
    PropagatorState p = PropagatorState::identity(3);
    EXPECT_LE((likelihood_matrix(p).matrix() - Matrix::Identity(3, 3) / 3.0).norm(), 1e-15);
    Rng rng(15, 0);
    const Vector u = rng.haar_vector(3), v = rng.haar_vector(3);
    p.s = 2.0 * u * v.adjoint();
    const Matrix mm = likelihood_matrix(p).matrix();
    EXPECT_LE((mm * mm - mm).norm(), 1e-12);
    EXPECT_NEAR(mm.trace().real(), 1.0, 1e-12);
    p.s.setZero();
    EXPECT_THROW(likelihood_matrix(p), std::domain_error);
}

TEST(MlEstimate, Examples) {
    PropagatorState p = PropagatorState::identity(2);
    const MlEstimate a = ml_estimate(p);
    EXPECT_TRUE(a.y.same_as(a.z));
    const MlEstimate a2 = ml_estimate(p);
    EXPECT_EQ((a.z.vector() - a2.z.vector()).norm(), 0.0);
    p.s = Matrix::Zero(2, 2);
    p.s(0, 0) = 2.0;
    p.s(1, 1) = 1.0;
    const MlEstimate b = ml_estimate(p);
    EXPECT_TRUE(b.z.same_as(ProjectivePoint::basis(2, 0)));
    EXPECT_TRUE(b.y.same_as(ProjectivePoint::basis(2, 0)));
    Rng rng(16, 0);
    for (int i = 0; i < 50; ++i) {
        p.s = rng.ginibre(3);
        const MlEstimate e = ml_estimate(p);
        EXPECT_NEAR((p.s * e.z.vector()).norm(), operator_norm(p.s), 1e-10 * operator_norm(p.s));
        EXPECT_TRUE(e.y.same_as(ProjectivePoint(Vector(p.s * e.z.vector()))));
    }
}

TEST(EstimateF, UnitaryAndStart) {
    const auto m = OperatorModel::from_matrices(pauli::x(), {}, {});
    const std::vector<double> grid{0.0, 0.5, 1.0, 1.5, 2.0};
    const auto f = estimate_f(m, grid, 20, config(1e-3, 2.0, 17));
    // S = (Id - i dt sx)^n has both singular values (1 + dt^2)^(n/2)
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double n = std::round(grid[g] / 1e-3);
        EXPECT_NEAR(f.curve.value[g], std::pow(1.0 + 1e-6, n), 1e-12);
        EXPECT_EQ(f.curve.se[g], 0.0);
    }
    EXPECT_FALSE(f.fit.decaying);
    const auto q = estimate_f(qnd_model(1.0).model, grid, 20, config(1e-3, 2.0, 17));
    EXPECT_EQ(q.curve.value[0], 1.0);
}

TEST(EstimateF, QndDecaysAndSubmultiplicative) {
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(0.5 * i);
    const auto f = estimate_f(qnd_model(1.0).model, grid, 1000, config(1e-3, 5.0, 18), default_threads());
    EXPECT_GT(f.fit.rate, 0.0);
    EXPECT_GE(f.fit.r2, 0.95);
    const double scale = 1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t j = 0; i + j < grid.size(); ++j) {
            const std::size_t l = i + j;
            auto rel = [&](std::size_t q) { return f.curve.se[q] / f.curve.value[q]; };
            const double r = std::sqrt(rel(i) * rel(i) + rel(j) * rel(j) + rel(l) * rel(l));
            EXPECT_LE(f.curve.value[l], f.curve.value[i] * f.curve.value[j] * (1 + 3 * r) * scale) << i << " " << j;
        }
    }
}

TEST(Coupling, PathwiseBoundAndUnitary) {
    const std::vector<double> grid{0.0, 1.0, 2.0, 4.0, 8.0};
    const auto ex = qnd_model(1.0);
    const auto res = coupling_distance(
        ex.model, [](Rng& r) { return ProjectivePoint(r.haar_vector(2)); }, grid, 200, config(1e-3, 8.0, 19),
        default_threads());
    EXPECT_EQ(res.violations, 0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::size_t i = 0; i < 200; ++i) EXPECT_LE(res.distance[g][i], res.bound[g][i] * (1 + 1e-9) + 1e-14);
    }
    EXPECT_LT(res.median_distance.back(), res.median_distance[1]);

    // unitary: S_t is unitary so d(x_t, y_t) is frozen at its initial value
    const auto u = OperatorModel::from_matrices(pauli::x(), {}, {});
    const auto ru = coupling_distance(
        u, [](Rng& r) { return ProjectivePoint(r.haar_vector(2)); }, grid, 400, config(1e-3, 8.0, 20),
        default_threads());
    // constant in distribution: mean at the end within 3 stderr of the start
    const auto& md = ru.mean_distance;
    EXPECT_LE(std::abs(md.value.back() - md.value.front()), 3 * std::hypot(md.se.back(), md.se.front()) + 1e-12);
}

TEST(GridSteps, RejectsOffGrid) {
    EXPECT_EQ(grid_steps({0.0, 0.5, 1.0}, 1e-3), (std::vector<long>{0, 500, 1000}));
    EXPECT_THROW(grid_steps({-1.0}, 1e-3), std::invalid_argument);
    EXPECT_THROW(grid_steps({1.0, 0.5}, 1e-3), std::invalid_argument);
}

TEST(Propagator, ReferenceStatisticsAreShiftInvariant) {
    // S over [s, s + t] has the law of S over [0, t] under the reference measure
    const auto m = qnd_model(1.0).model;
    const SimConfig cfg = config(1e-3, 1.0, 18);
    const std::size_t n = 2000;
    const long shift = 500, len = 1000;
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(99, i);
        Stepper st(m, cfg);
        auto p = PropagatorState::identity(2, 0);
        for (long s = 0; s < shift; ++s) st.step(p, rng, Measure::reference);
        p = PropagatorState::identity(2, 0);
        for (long s = 0; s < len; ++s) st.step(p, rng, Measure::reference);
        shifted[i] = std::exp(2.0 * p.log_scale) * wedge_norm(p.s);
    }
    const auto a = mean_stderr(shifted);
    const auto f = estimate_f(m, {0.0, 0.5, 1.0}, n, cfg);
    const double se = std::hypot(a.se, f.curve.se[2]);
    EXPECT_NEAR(a.mean, f.curve.value[2], 3.0 * se);
}

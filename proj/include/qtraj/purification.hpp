// purification.hpp
// The purification hypothesis: no subspace of dimension >= 2 on which every
// measured observable compresses to a multiple of the projector. Decided
// exactly for k <= 2 and for commuting observables, searched numerically
// otherwise. Also the likelihood-matrix purification diagnostic.

#pragma once

#include "qtraj/lindblad.hpp"
#include "qtraj/linalg.hpp"
#include "qtraj/random.hpp"
#include "qtraj/trajectory.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace qtraj {

enum class PurVerdict { holds_certified, holds_numerical, fails };

inline const char* to_string(PurVerdict v) {
    switch (v) {
        case PurVerdict::holds_certified: return "holds_certified";
        case PurVerdict::holds_numerical: return "holds_numerical";
        case PurVerdict::fails: return "fails";
    }
    return "?";
}

inline bool holds(PurVerdict v) { return v != PurVerdict::fails; }

struct PurReport {
    PurVerdict verdict = PurVerdict::holds_certified;
    std::optional<Matrix> witness;  // orthogonal projector, rank >= 2
    double residual = 0.0;
    std::string method;  // trivial_dim, dim2, commuting, search
    std::string note;
};

struct PurOptions {
    int restarts = 200;
    std::uint64_t seed = 0x5eed;
    double fail_threshold = 1e-12;
    double residual_floor = 1e-6;
    double witness_tol = 1e-8;
    unsigned threads = 1;
};

// {L_i + L_i*} followed by {C_j* C_j}.
inline std::vector<HermitianOperator> observable_set(const OperatorModel& model) {
    std::vector<HermitianOperator> out;
    for (const auto& l : model.diffusive()) out.emplace_back(Matrix(l.matrix() + l.matrix().adjoint()));
    for (const auto& c : model.jump()) out.emplace_back(Matrix(c.matrix().adjoint() * c.matrix()));
    return out;
}

// max_A ||pi A pi - lambda_A pi||_F with lambda_A = tr(pi A pi) / rank(pi).
inline double witness_error(const std::vector<HermitianOperator>& obs, const Matrix& pi) {
    const double rank = pi.trace().real();
    double worst = 0.0;
    for (const auto& a : obs) {
        const Matrix c = pi * a.matrix() * pi;
        const double lambda = c.trace().real() / rank;
        worst = std::max(worst, (c - lambda * pi).norm());
    }
    return worst;
}

// sum_A |<x, A y>|^2 + |<x, A x> - <y, A y>|^2 for orthonormal x, y.
inline double pair_residual(const std::vector<HermitianOperator>& obs, const Vector& x, const Vector& y) {
    double r = 0.0;
    for (const auto& a : obs) {
        const Vector ay = a.matrix() * y;
        const double off = std::norm(x.dot(ay));
        const double diag = x.dot(a.matrix() * x).real() - y.dot(ay).real();
        r += off + diag * diag;
    }
    return r;
}

namespace detail {

inline bool is_scalar(const Matrix& a) {
    const int k = static_cast<int>(a.rows());
    const cplx mean = a.trace() / static_cast<double>(k);
    return (a - mean * Matrix::Identity(k, k)).norm() <= 1e-12 * std::max(1.0, a.norm());
}

inline bool all_commute(const std::vector<HermitianOperator>& obs) {
    for (std::size_t i = 0; i < obs.size(); ++i) {
        for (std::size_t j = i + 1; j < obs.size(); ++j) {
            const Matrix& a = obs[i].matrix();
            const Matrix& b = obs[j].matrix();
            if (commutator(a, b).norm() > 1e-10 * std::max(1.0, a.norm() * b.norm())) return false;
        }
    }
    return true;
}

inline Matrix span_projector(const Vector& x, const Vector& y) {
    Matrix p(x.size(), 2);
    p.col(0) = x;
    p.col(1) = y;
    Eigen::HouseholderQR<Matrix> qr(p);
    const Matrix q = qr.householderQ() * Matrix::Identity(x.size(), 2);
    return q * q.adjoint();
}

// g(P) = sum_A ||P* A P - tr(P* A P)/2 Id||_F^2 on orthonormal k x 2 frames.
struct FrameObjective {
    const std::vector<Matrix>* obs;

    double value(const Matrix& p) const {
        double g = 0.0;
        for (const auto& a : *obs) g += traceless(p.adjoint() * a * p).squaredNorm();
        return g;
    }

    // Riemannian gradient on the Stiefel manifold (embedded metric).
    Matrix gradient(const Matrix& p) const {
        Matrix g = Matrix::Zero(p.rows(), p.cols());
        for (const auto& a : *obs) {
            const Matrix ap = a * p;
            g += 4.0 * ap * traceless(p.adjoint() * ap);
        }
        const Matrix pg = p.adjoint() * g;
        return g - p * (0.5 * (pg + pg.adjoint()));
    }

    static Matrix traceless(const Matrix& b) {
        Matrix d = 0.5 * (b + b.adjoint());
        const cplx h = 0.5 * d.trace();
        d(0, 0) -= h;
        d(1, 1) -= h;
        return d;
    }
};

inline Matrix retract(const Matrix& p) {
    Eigen::HouseholderQR<Matrix> qr(p);
    Matrix q = qr.householderQ() * Matrix::Identity(p.rows(), p.cols());
    const Matrix r = qr.matrixQR().topLeftCorner(p.cols(), p.cols());
    for (int i = 0; i < p.cols(); ++i) {
        const double a = std::abs(r(i, i));
        if (a > 0.0) q.col(i) *= r(i, i) / a;
    }
    return q;
}

// Gradient descent with Barzilai-Borwein steps and Armijo backtracking.
inline Matrix minimize_frame(const FrameObjective& f, Matrix p, int max_iter, double target) {
    double val = f.value(p);
    Matrix grad = f.gradient(p);
    double step = 0.1;
    Matrix prev_p, prev_grad;
    for (int it = 0; it < max_iter && val > target; ++it) {
        const double gn2 = grad.squaredNorm();
        if (!(gn2 > 0.0)) break;
        if (it > 0) {
            const Matrix s = p - prev_p;
            const Matrix y = grad - prev_grad;
            const double sy = (s.adjoint() * y).trace().real();
            if (sy > 0.0) step = s.squaredNorm() / sy;
        }
        step = std::clamp(step, 1e-8, 1e4);
        Matrix cand;
        double cand_val = 0.0;
        int tries = 0;
        for (; tries < 60; ++tries) {
            cand = retract(p - step * grad);
            cand_val = f.value(cand);
            if (cand_val <= val - 1e-4 * step * gn2) break;
            step *= 0.5;
        }
        if (tries == 60) break;
        prev_p = p;
        prev_grad = grad;
        p = cand;
        val = cand_val;
        grad = f.gradient(p);
    }
    return p;
}

}  // namespace detail

inline PurReport check_pur(const OperatorModel& model, const PurOptions& opt = {}) {
    const int k = model.dim();
    const auto obs = observable_set(model);
    PurReport rep;

    if (k < 2) {
        rep.verdict = PurVerdict::holds_certified;
        rep.method = "trivial_dim";
        rep.note = "no two-dimensional subspace";
        return rep;
    }

    bool all_scalar = true;
    for (const auto& a : obs) all_scalar = all_scalar && detail::is_scalar(a.matrix());
    if (all_scalar) {
        rep.verdict = PurVerdict::fails;
        rep.method = k == 2 ? "dim2" : "commuting";
        Matrix pi = Matrix::Zero(k, k);
        pi(0, 0) = 1.0;
        pi(1, 1) = 1.0;
        rep.witness = pi;
        rep.residual = pair_residual(obs, Vector::Unit(k, 0), Vector::Unit(k, 1));
        rep.note = "every observable is a multiple of the identity";
        return rep;
    }
    if (k == 2) {
        rep.verdict = PurVerdict::holds_certified;
        rep.method = "dim2";
        rep.note = "some observable is not a multiple of the identity";
        return rep;
    }

    if (detail::all_commute(obs)) {
        rep.method = "commuting";
        // Joint eigenbasis from a random combination.
        Rng rng(opt.seed, 0);
        Matrix x = Matrix::Zero(k, k);
        for (const auto& a : obs) x += rng.normal() * a.matrix();
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (x + x.adjoint()));
        const Matrix v = es.eigenvectors();
        const int n = static_cast<int>(obs.size());
        Eigen::MatrixXd pts(k, n + 1);
        for (int p = 0; p < k; ++p) {
            pts(p, 0) = 1.0;
            for (int a = 0; a < n; ++a) {
                pts(p, a + 1) = v.col(p).dot(obs[static_cast<std::size_t>(a)].matrix() * v.col(p)).real();
            }
        }
        // (Pur) holds iff the points (1, lambda(p)) are linearly independent.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(pts.transpose(), Eigen::ComputeFullV);
        const Eigen::VectorXd sv = svd.singularValues();
        const double tol = 1e-9 * std::max(1.0, pts.cwiseAbs().maxCoeff());
        int rank = 0;
        for (int i = 0; i < sv.size(); ++i) rank += sv(i) > tol ? 1 : 0;
        if (rank == k) {
            rep.verdict = PurVerdict::holds_certified;
            rep.residual = sv(sv.size() - 1);
            rep.note = "joint eigenvalues are affinely independent";
            return rep;
        }
        // Null vector c: sum c_p = 0 and sum c_p lambda_A(p) = 0.
        const Eigen::VectorXd c = svd.matrixV().col(k - 1);
        Vector xv = Vector::Zero(k), yv = Vector::Zero(k);
        for (int p = 0; p < k; ++p) {
            if (c(p) > 0.0) xv += std::sqrt(c(p)) * v.col(p);
            if (c(p) < 0.0) yv += std::sqrt(-c(p)) * v.col(p);
        }
        xv.normalize();
        yv.normalize();
        rep.verdict = PurVerdict::fails;
        rep.witness = detail::span_projector(xv, yv);
        rep.residual = pair_residual(obs, xv, yv);
        rep.note = "joint eigenvalues are affinely dependent";
        return rep;
    }

    // Numerical search over orthonormal 2-frames.
    rep.method = "search";
    std::vector<Matrix> mats;
    for (const auto& a : obs) mats.push_back(a.matrix());
    const detail::FrameObjective f{&mats};
    const int restarts = std::max(1, opt.restarts);
    std::vector<Matrix> frames(static_cast<std::size_t>(restarts));
    std::vector<double> residuals(static_cast<std::size_t>(restarts));
    parallel_for(static_cast<std::size_t>(restarts), opt.threads, [&](std::size_t r) {
        Rng rng(opt.seed, r);
        const Matrix p0 = rng.haar_unitary(k).leftCols(2);
        Matrix p = detail::minimize_frame(f, p0, 400, 1e-26);
        if (f.value(p) < 1e-8) p = detail::minimize_frame(f, p, 20000, 1e-28);
        frames[r] = p;
        residuals[r] = pair_residual(obs, p.col(0), p.col(1));
    });
    const auto best = static_cast<std::size_t>(
        std::min_element(residuals.begin(), residuals.end()) - residuals.begin());
    rep.residual = residuals[best];
    if (rep.residual < opt.fail_threshold) {
        const Matrix& p = frames[best];
        const Matrix pi = p * p.adjoint();
        if (witness_error(obs, pi) <= opt.witness_tol) {
            rep.verdict = PurVerdict::fails;
            rep.witness = 0.5 * (pi + pi.adjoint());
            rep.note = "search found a witness subspace";
            return rep;
        }
        rep.note = "warning: search residual below threshold but witness did not verify; ";
    }
    rep.verdict = PurVerdict::holds_numerical;
    if (rep.residual < opt.residual_floor) {
        rep.note += "warning: residual " + std::to_string(rep.residual) + " below floor " +
                    std::to_string(opt.residual_floor);
    } else {
        rep.note += "no witness found in " + std::to_string(restarts) + " restarts";
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Dynamical diagnostic: M_t = S_t* S_t / tr(S_t* S_t) sampled under the law
// with rho = Id/k.

// [grid][sample] likelihood matrices.
inline std::vector<std::vector<Matrix>> sample_likelihood_matrices(const OperatorModel& model,
                                                                   const std::vector<double>& t_grid,
                                                                   std::size_t n_samples, const SimConfig& cfg,
                                                                   unsigned threads = 1) {
    cfg.validate();
    const int k = model.dim();
    const auto steps = grid_steps(t_grid, cfg.dt);
    const std::size_t ng = steps.size();
    std::vector<std::vector<Matrix>> out(ng, std::vector<Matrix>(n_samples));
    const Matrix id_over_k = Matrix::Identity(k, k) / static_cast<double>(k);
    if (model.diffusive().empty() && model.jump().empty()) {
        // S_t is unitary: M_t = Id/k for all t.
        for (auto& row : out) std::fill(row.begin(), row.end(), id_over_k);
        return out;
    }
    parallel_for(n_samples, threads, [&](std::size_t i) {
        Rng rng(cfg.seed, i);
        Stepper stepper(model, cfg);
        PropagatorState p = PropagatorState::identity(k, model.n_jump());
        long s = 0;
        for (std::size_t g = 0; g < ng; ++g) {
            while (s < steps[g]) {
                stepper.step(p, rng, Measure::physical);
                ++s;
            }
            out[g][i] = likelihood_matrix(p).matrix();
        }
    });
    return out;
}

inline double max_eigenvalue(const Matrix& h) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(h.rows() - 1);
}

// E[1 - lambda_max(M_t)] on the grid.
inline Curve purification_diagnostic(const OperatorModel& model, const std::vector<double>& t_grid,
                                     std::size_t n_samples, const SimConfig& cfg, unsigned threads = 1) {
    if (t_grid.empty() || !(t_grid.back() > 0.0)) throw std::invalid_argument("purification_diagnostic: horizon must be positive");
    const auto ms = sample_likelihood_matrices(model, t_grid, n_samples, cfg, threads);
    Curve c;
    c.t = t_grid;
    for (const auto& row : ms) {
        std::vector<double> v(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) v[i] = 1.0 - max_eigenvalue(row[i]);
        const auto s = mean_stderr(v);
        c.value.push_back(s.mean);
        c.se.push_back(s.se);
    }
    return c;
}

inline Curve purification_diagnostic(const OperatorModel& model, double horizon, std::size_t n_traj,
                                     std::uint64_t seed, double dt = 1e-3, int points = 21, unsigned threads = 1) {
    if (!(horizon > 0.0)) throw std::invalid_argument("purification_diagnostic: horizon must be positive");
    SimConfig cfg;
    cfg.dt = dt;
    cfg.horizon = horizon;
    cfg.seed = seed;
    std::vector<double> grid;
    for (int i = 0; i < points; ++i) grid.push_back(horizon * i / (points - 1));
    return purification_diagnostic(model, grid, n_traj, cfg, threads);
}

struct MartingaleEntry {
    int row = 0, col = 0;
    bool imaginary = false;
    double mean_diff = 0.0;
    double se = 0.0;
    bool within = false;
};

struct MartingaleCheck {
    std::vector<MartingaleEntry> entries;
    bool passed = false;
};

// Entrywise comparison of E[M_t2] and E[M_t1] on the same paths: the mean of
// the per-path difference must lie within `sigmas` standard errors of 0.
inline MartingaleCheck martingale_check(const OperatorModel& model, double t1, double t2, std::size_t n_samples,
                                        const SimConfig& cfg, double sigmas = 3.0, unsigned threads = 1) {
    const auto ms = sample_likelihood_matrices(model, {t1, t2}, n_samples, cfg, threads);
    const int k = model.dim();
    MartingaleCheck out;
    out.passed = true;
    for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) {
            for (int part = 0; part < 2; ++part) {
                std::vector<double> d(n_samples);
                for (std::size_t i = 0; i < n_samples; ++i) {
                    const cplx z = ms[1][i](r, c) - ms[0][i](r, c);
                    d[i] = part == 0 ? z.real() : z.imag();
                }
                const auto s = mean_stderr(d);
                MartingaleEntry e{r, c, part == 1, s.mean, s.se, false};
                e.within = std::abs(s.mean) <= sigmas * s.se + 1e-12;
                out.passed = out.passed && e.within;
                out.entries.push_back(e);
            }
        }
    }
    return out;
}

}  // namespace qtraj

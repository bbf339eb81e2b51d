// trajectory.hpp
// Quantum trajectories: the stochastic Schrodinger equation on pure states,
// the stochastic master equation on density matrices, and the linear
// propagator S_t with its likelihood weight, likelihood matrix and
// maximum-likelihood estimates.

#pragma once

#include "qtraj/fit.hpp"
#include "qtraj/lindblad.hpp"
#include "qtraj/linalg.hpp"
#include "qtraj/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qtraj {

enum class Scheme {
    linear_normalize,  // propagate linearly with the measurement increment, then normalize
    euler_direct,      // Euler-Maruyama of the nonlinear equation, then normalize
};

inline const char* to_string(Scheme s) {
    return s == Scheme::linear_normalize ? "linear_normalize" : "euler_direct";
}

struct SimConfig {
    double dt = 1e-3;
    double horizon = 1.0;
    std::uint64_t seed = 0;
    double max_jump_prob = 0.1;
    Scheme scheme = Scheme::linear_normalize;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("SimConfig: dt must be positive");
        if (!(horizon >= 0.0)) throw std::invalid_argument("SimConfig: horizon must be nonnegative");
        if (!(max_jump_prob > 0.0 && max_jump_prob < 1.0)) {
            throw std::invalid_argument("SimConfig: max_jump_prob must lie in (0, 1)");
        }
    }

    long steps() const { return std::lround(horizon / dt); }
};

// Raised when sum_j n_j dt exceeds the per-step jump budget.
class JumpBudgetExceeded : public std::runtime_error {
public:
    explicit JumpBudgetExceeded(double p)
        : std::runtime_error("jump probability per step " + std::to_string(p) +
                             " exceeds the budget; decrease dt"),
          probability(p) {}
    double probability;
};

template <class State>
struct TrajectoryState {
    double t = 0.0;
    State state;
    std::vector<long> jump_counts;
};

// Outcome of a single step. jump = -1 when no jump occurred; increments holds
// the measurement increments dW_i (physical drift included) of a no-jump step.
struct StepInfo {
    int jump = -1;
    bool degenerate = false;
};

// Linear propagator, stored as S_t = exp(log_scale) * S.
struct PropagatorState {
    Matrix s;
    double log_scale = 0.0;
    double z_log = 0.0;  // log tr(S_t* S_t rho)
    Matrix rho;          // the state whose weight Z is tracked
    double t = 0.0;
    std::vector<long> jump_counts;

    static PropagatorState identity(int k, const DensityMatrix& rho, int n_jump = 0) {
        PropagatorState p;
        p.s = Matrix::Identity(k, k);
        p.rho = rho.matrix();
        p.jump_counts.assign(static_cast<std::size_t>(n_jump), 0);
        return p;
    }

    static PropagatorState identity(int k, int n_jump = 0) {
        return identity(k, DensityMatrix::maximally_mixed(k), n_jump);
    }

    int dim() const { return static_cast<int>(s.rows()); }
    bool vanished() const { return !std::isfinite(log_scale); }

    // exp(log_scale) * S; may under- or overflow for long horizons.
    Matrix true_s() const { return vanished() ? Matrix::Zero(s.rows(), s.cols()) : Matrix(std::exp(log_scale) * s); }

    // Moves the Frobenius norm into log_scale so that ||S||_F = 2, which keeps
    // the operator norm inside [0.5, 2] for k <= 16.
    void rescale() {
        const double f = s.norm();
        if (!(f > 0.0)) {
            log_scale = -std::numeric_limits<double>::infinity();
            z_log = -std::numeric_limits<double>::infinity();
            s.setZero();
            return;
        }
        s *= 2.0 / f;
        log_scale += std::log(f / 2.0);
        update_weight();
    }

    void update_weight() {
        if (vanished()) {
            z_log = -std::numeric_limits<double>::infinity();
            return;
        }
        const double w = (s.adjoint() * s * rho).trace().real();
        z_log = w > 0.0 ? std::log(w) + 2.0 * log_scale : -std::numeric_limits<double>::infinity();
    }
};

enum class Measure {
    reference,  // unit-intensity jumps, centered Gaussian increments
    physical,   // law P^rho of the tracked state rho
};

// ---------------------------------------------------------------------------
// Stepper: precomputed operators and workspace for a model.

class Stepper {
public:
    Stepper(const OperatorModel& model, const SimConfig& cfg) : cfg_(cfg), k_(model.dim()) {
        cfg_.validate();
        drift_ = model.drift();
        for (const auto& l : model.diffusive()) {
            l_.push_back(l.matrix());
            lsum_.push_back(l.matrix() + l.matrix().adjoint());
        }
        for (const auto& c : model.jump()) {
            c_.push_back(c.matrix());
            cc_.push_back(c.matrix().adjoint() * c.matrix());
        }
        const double dt = cfg_.dt;
        id_drift_ = Matrix::Identity(k_, k_) + dt * drift_;
        increments_.assign(l_.size(), 0.0);
        rates_.assign(c_.size(), 0.0);
        work_ = Vector::Zero(k_);
        work2_ = Vector::Zero(k_);
        gmat_ = Matrix::Zero(k_, k_);
        mwork_ = Matrix::Zero(k_, k_);
    }

    const SimConfig& config() const { return cfg_; }
    int dim() const { return k_; }
    int n_diffusive() const { return static_cast<int>(l_.size()); }
    int n_jump() const { return static_cast<int>(c_.size()); }
    const std::vector<double>& increments() const { return increments_; }
    long degenerate_events() const { return degenerate_; }

    // SSE step on a unit vector, in place.
    StepInfo step(Vector& x, Rng& rng) {
        StepInfo info;
        const double dt = cfg_.dt;
        for (std::size_t j = 0; j < c_.size(); ++j) rates_[j] = (c_[j] * x).squaredNorm();
        info = draw_jump(rng);
        if (info.jump >= 0) {
            work_.noalias() = c_[static_cast<std::size_t>(info.jump)] * x;
            x = work_ / work_.norm();
            return info;
        }
        if (cfg_.scheme == Scheme::linear_normalize) {
            work_.noalias() = id_drift_ * x;
            for (std::size_t i = 0; i < l_.size(); ++i) {
                const double v = x.dot(lsum_[i] * x).real();
                increments_[i] = std::sqrt(dt) * rng.normal() + v * dt;
                work_.noalias() += increments_[i] * (l_[i] * x);
            }
        } else {
            // dx = D(x) x dt + sum (L_i - v_i/2) x dB_i
            double nsum = 0.0;
            for (double r : rates_) nsum += r;
            work_.noalias() = x + dt * (drift_ * x) + (0.5 * nsum * dt) * x;
            for (std::size_t i = 0; i < l_.size(); ++i) {
                const double v = x.dot(lsum_[i] * x).real();
                const double db = std::sqrt(dt) * rng.normal();
                increments_[i] = db + v * dt;
                work2_.noalias() = l_[i] * x;
                work_ += (0.5 * v * dt) * (work2_ - 0.25 * v * x);
                work_ += db * (work2_ - 0.5 * v * x);
            }
        }
        x = work_ / work_.norm();
        return info;
    }

    // SME step on a density matrix, in place.
    StepInfo step(Matrix& rho, Rng& rng) {
        StepInfo info;
        const double dt = cfg_.dt;
        for (std::size_t j = 0; j < c_.size(); ++j) rates_[j] = (cc_[j] * rho).trace().real();
        info = draw_jump(rng);
        if (info.jump >= 0) {
            const Matrix& c = c_[static_cast<std::size_t>(info.jump)];
            mwork_.noalias() = c * rho * c.adjoint();
            rho = mwork_ / mwork_.trace().real();
            hermitize(rho);
            return info;
        }
        if (cfg_.scheme == Scheme::linear_normalize) {
            gmat_ = id_drift_;
            for (std::size_t i = 0; i < l_.size(); ++i) {
                const double v = (lsum_[i] * rho).trace().real();
                increments_[i] = std::sqrt(dt) * rng.normal() + v * dt;
                gmat_ += increments_[i] * l_[i];
            }
            mwork_.noalias() = gmat_ * rho * gmat_.adjoint();
            rho = mwork_ / mwork_.trace().real();
        } else {
            Matrix next = rho + dt * lindblad_part(rho);
            for (std::size_t j = 0; j < c_.size(); ++j) {
                const Matrix& c = c_[j];
                next -= dt * (c * rho * c.adjoint() - rates_[j] * rho);
            }
            for (std::size_t i = 0; i < l_.size(); ++i) {
                const double v = (lsum_[i] * rho).trace().real();
                const double db = std::sqrt(dt) * rng.normal();
                increments_[i] = db + v * dt;
                next += db * (l_[i] * rho + rho * l_[i].adjoint() - v * rho);
            }
            rho = DensityMatrix::repaired(next).matrix();
        }
        hermitize(rho);
        return info;
    }

    // Propagator step. Under the reference measure every jump channel fires
    // with probability dt; under the physical measure the drift and the
    // intensities follow rho_t = S rho S* / tr(S rho S*).
    StepInfo step(PropagatorState& p, Rng& rng, Measure measure) {
        StepInfo info;
        const double dt = cfg_.dt;
        if (p.vanished()) {
            consume_reference_noise(rng);
            p.t += dt;
            return info;
        }
        const std::size_t nj = c_.size();
        if (measure == Measure::reference) {
            const double total = static_cast<double>(nj) * dt;
            if (total > cfg_.max_jump_prob) throw JumpBudgetExceeded(total);
            if (nj > 0) {
                const double u = rng.uniform();
                if (u < total) info.jump = std::min<int>(static_cast<int>(u / dt), static_cast<int>(nj) - 1);
            }
        } else {
            mwork_.noalias() = p.s * p.rho * p.s.adjoint();
            rho_t_ = mwork_ / mwork_.trace().real();
            for (std::size_t j = 0; j < nj; ++j) rates_[j] = (cc_[j] * rho_t_).trace().real();
            info = draw_jump(rng);
        }
        if (info.jump >= 0) {
            p.s = c_[static_cast<std::size_t>(info.jump)] * p.s;
            if (!p.jump_counts.empty()) ++p.jump_counts[static_cast<std::size_t>(info.jump)];
        } else {
            gmat_ = id_drift_;
            gmat_.diagonal().array() += 0.5 * static_cast<double>(nj) * dt;
            for (std::size_t i = 0; i < l_.size(); ++i) {
                double drift = 0.0;
                if (measure == Measure::physical) drift = (lsum_[i] * rho_t_).trace().real();
                increments_[i] = std::sqrt(dt) * rng.normal() + drift * dt;
                gmat_ += increments_[i] * l_[i];
            }
            mwork_.noalias() = gmat_ * p.s;
            p.s = mwork_;
        }
        p.t += dt;
        p.rescale();
        return info;
    }

    Matrix lindblad_part(const Matrix& rho) const {
        Matrix out = drift_ * rho + rho * drift_.adjoint();
        for (const auto& l : l_) out += l * rho * l.adjoint();
        for (const auto& c : c_) out += c * rho * c.adjoint();
        return out;
    }

private:
    static void hermitize(Matrix& m) { m = 0.5 * (m + m.adjoint()).eval(); }

    // Shared by SSE, SME and the physical propagator so all consume the
    // stream identically: one uniform when jump channels exist, then normals
    // for a no-jump step.
    StepInfo draw_jump(Rng& rng) {
        StepInfo info;
        if (c_.empty()) return info;
        double total = 0.0;
        for (double r : rates_) total += r;
        if (total * cfg_.dt > cfg_.max_jump_prob) throw JumpBudgetExceeded(total * cfg_.dt);
        const double u = rng.uniform();
        if (u < total * cfg_.dt) {
            double acc = 0.0;
            std::size_t j = 0;
            for (; j + 1 < rates_.size(); ++j) {
                acc += rates_[j] * cfg_.dt;
                if (u < acc) break;
            }
            if (rates_[j] < 1e-14) {
                ++degenerate_;
                info.degenerate = true;
                return info;
            }
            info.jump = static_cast<int>(j);
        }
        return info;
    }

    void consume_reference_noise(Rng& rng) {
        if (!c_.empty()) (void)rng.uniform();
        for (std::size_t i = 0; i < l_.size(); ++i) (void)rng.normal();
    }

    SimConfig cfg_;
    int k_;
    Matrix drift_;
    Matrix id_drift_;
    std::vector<Matrix> l_, lsum_, c_, cc_;
    std::vector<double> increments_;
    std::vector<double> rates_;
    Vector work_, work2_;
    Matrix gmat_, mwork_, rho_t_;
    long degenerate_ = 0;
};

// ---------------------------------------------------------------------------
// Single-step API

struct SseStep {
    ProjectivePoint x;
    int jump = -1;
    std::vector<double> increments;
    bool degenerate = false;
};

inline SseStep sse_step(const OperatorModel& model, const ProjectivePoint& x, const SimConfig& cfg, Rng& rng) {
    Stepper stepper(model, cfg);
    Vector v = x.vector();
    const StepInfo info = stepper.step(v, rng);
    SseStep out{ProjectivePoint(v), info.jump, {}, info.degenerate};
    if (info.jump < 0) out.increments = stepper.increments();
    return out;
}

inline DensityMatrix sme_step(const OperatorModel& model, const DensityMatrix& rho, const SimConfig& cfg, Rng& rng) {
    Stepper stepper(model, cfg);
    Matrix m = rho.matrix();
    stepper.step(m, rng);
    return DensityMatrix::repaired(m);
}

inline PropagatorState propagate_S(const OperatorModel& model, const PropagatorState& p, const SimConfig& cfg,
                                   Rng& rng, Measure measure) {
    Stepper stepper(model, cfg);
    PropagatorState out = p;
    stepper.step(out, rng, measure);
    return out;
}

// M = S* S / tr(S* S)
inline DensityMatrix likelihood_matrix(const PropagatorState& p) {
    const Matrix m = p.s.adjoint() * p.s;
    const double tr = m.trace().real();
    if (!(tr > 0.0) || p.vanished()) throw std::domain_error("likelihood_matrix: tr(S*S) = 0");
    Matrix out = m / tr;
    out = 0.5 * (out + out.adjoint());
    return DensityMatrix::unchecked(std::move(out));
}

struct MlEstimate {
    ProjectivePoint z;  // argmax ||S x||
    ProjectivePoint y;  // S . z
};

inline MlEstimate ml_estimate(const PropagatorState& p) {
    if (p.vanished() || p.s.norm() == 0.0) throw std::domain_error("ml_estimate: S = 0");
    ProjectivePoint z = top_right_singular_vector(p.s);
    ProjectivePoint y(p.s * z.vector());
    return {std::move(z), std::move(y)};
}

// Grid times as step indices.
inline std::vector<long> grid_steps(const std::vector<double>& t_grid, double dt) {
    std::vector<long> out;
    out.reserve(t_grid.size());
    long prev = -1;
    for (double t : t_grid) {
        if (t < 0.0) throw std::invalid_argument("time grid must be nonnegative");
        const long s = std::lround(t / dt);
        if (s < prev) throw std::invalid_argument("time grid must be nondecreasing");
        out.push_back(s);
        prev = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Path simulation

// Runs the SSE from x0 up to cfg.horizon, calling observer(step_index, t, x,
// info) after every step (and once at step 0 with a default StepInfo).
template <class Observer>
TrajectoryState<ProjectivePoint> simulate_sse(const OperatorModel& model, const ProjectivePoint& x0,
                                              const SimConfig& cfg, Rng& rng, Observer&& observer) {
    Stepper stepper(model, cfg);
    Vector x = x0.vector();
    std::vector<long> counts(static_cast<std::size_t>(model.n_jump()), 0);
    const long n = cfg.steps();
    observer(0L, 0.0, static_cast<const Vector&>(x), StepInfo{});
    for (long s = 1; s <= n; ++s) {
        const StepInfo info = stepper.step(x, rng);
        if (info.jump >= 0) ++counts[static_cast<std::size_t>(info.jump)];
        observer(s, static_cast<double>(s) * cfg.dt, static_cast<const Vector&>(x), info);
    }
    return {static_cast<double>(n) * cfg.dt, ProjectivePoint(x), std::move(counts)};
}

inline TrajectoryState<ProjectivePoint> simulate_sse(const OperatorModel& model, const ProjectivePoint& x0,
                                                     const SimConfig& cfg, Rng& rng) {
    return simulate_sse(model, x0, cfg, rng, [](long, double, const Vector&, const StepInfo&) {});
}

template <class Observer>
TrajectoryState<DensityMatrix> simulate_sme(const OperatorModel& model, const DensityMatrix& rho0,
                                            const SimConfig& cfg, Rng& rng, Observer&& observer) {
    Stepper stepper(model, cfg);
    Matrix rho = rho0.matrix();
    std::vector<long> counts(static_cast<std::size_t>(model.n_jump()), 0);
    const long n = cfg.steps();
    observer(0L, 0.0, static_cast<const Matrix&>(rho), StepInfo{});
    for (long s = 1; s <= n; ++s) {
        const StepInfo info = stepper.step(rho, rng);
        if (info.jump >= 0) ++counts[static_cast<std::size_t>(info.jump)];
        observer(s, static_cast<double>(s) * cfg.dt, static_cast<const Matrix&>(rho), info);
    }
    return {static_cast<double>(n) * cfg.dt, DensityMatrix::repaired(rho), std::move(counts)};
}

inline TrajectoryState<DensityMatrix> simulate_sme(const OperatorModel& model, const DensityMatrix& rho0,
                                                   const SimConfig& cfg, Rng& rng) {
    return simulate_sme(model, rho0, cfg, rng, [](long, double, const Matrix&, const StepInfo&) {});
}

// ---------------------------------------------------------------------------
// Contraction statistic f(t) = E ||wedge^2 S_t|| under the reference measure.

struct Curve {
    std::vector<double> t;
    std::vector<double> value;
    std::vector<double> se;
};

struct FEstimate {
    Curve curve;
    RateFit fit;
};

inline FEstimate estimate_f(const OperatorModel& model, const std::vector<double>& t_grid, std::size_t n_samples,
                            const SimConfig& cfg, unsigned threads = 1) {
    cfg.validate();
    if (model.dim() < 2) throw std::invalid_argument("estimate_f: dimension must be at least 2");
    const auto steps = grid_steps(t_grid, cfg.dt);
    const std::size_t ng = steps.size();
    std::vector<std::vector<double>> samples(ng, std::vector<double>(n_samples, 0.0));

    parallel_for(n_samples, threads, [&](std::size_t i) {
        Rng rng(cfg.seed, i);
        Stepper stepper(model, cfg);
        PropagatorState p = PropagatorState::identity(model.dim(), model.n_jump());
        long s = 0;
        for (std::size_t g = 0; g < ng; ++g) {
            while (s < steps[g]) {
                stepper.step(p, rng, Measure::reference);
                ++s;
            }
            if (p.vanished()) {
                samples[g][i] = 0.0;
            } else {
                samples[g][i] = std::exp(2.0 * p.log_scale) * wedge_norm(p.s);
            }
        }
    });

    FEstimate out;
    out.curve.t = t_grid;
    for (std::size_t g = 0; g < ng; ++g) {
        const auto ms = mean_stderr(samples[g]);
        out.curve.value.push_back(ms.mean);
        out.curve.se.push_back(ms.se);
    }
    out.fit = fit_rate(out.curve.t, out.curve.value, out.curve.se);
    return out;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood coupling: distance between the physical trajectory
// x_t = S_t . x_0 and y_t = S_t . z_t, together with the pathwise bound
// ||wedge^2 S_t|| / ||S_t x_0||^2.

struct CouplingResult {
    Curve mean_distance;
    std::vector<double> median_distance;
    std::vector<std::vector<double>> distance;  // [grid][sample]
    std::vector<std::vector<double>> bound;     // [grid][sample]
    long violations = 0;
};

using InitialSampler = std::function<ProjectivePoint(Rng&)>;

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
    return 0.5 * (lo + hi);
}

inline CouplingResult coupling_distance(const OperatorModel& model, const InitialSampler& mu0,
                                        const std::vector<double>& t_grid, std::size_t n_samples,
                                        const SimConfig& cfg, unsigned threads = 1) {
    cfg.validate();
    const auto steps = grid_steps(t_grid, cfg.dt);
    const std::size_t ng = steps.size();
    CouplingResult out;
    out.distance.assign(ng, std::vector<double>(n_samples, 0.0));
    out.bound.assign(ng, std::vector<double>(n_samples, 0.0));
    std::vector<long> violations(n_samples, 0);

    parallel_for(n_samples, threads, [&](std::size_t i) {
        Rng rng(cfg.seed, i);
        const ProjectivePoint x0 = mu0(rng);
        Stepper stepper(model, cfg);
        PropagatorState p = PropagatorState::identity(model.dim(), make_projector(x0), model.n_jump());
        long s = 0;
        for (std::size_t g = 0; g < ng; ++g) {
            while (s < steps[g]) {
                stepper.step(p, rng, Measure::physical);
                ++s;
            }
            const Vector sx = p.s * x0.vector();
            const MlEstimate ml = ml_estimate(p);
            const double d = fs_distance(sx, ml.y.vector());
            const double b = wedge_norm(p.s) / sx.squaredNorm();
            out.distance[g][i] = d;
            out.bound[g][i] = b;
            if (d > b * (1.0 + 1e-9) + 1e-14) ++violations[i];
        }
    });

    out.mean_distance.t = t_grid;
    for (std::size_t g = 0; g < ng; ++g) {
        const auto ms = mean_stderr(out.distance[g]);
        out.mean_distance.value.push_back(ms.mean);
        out.mean_distance.se.push_back(ms.se);
        out.median_distance.push_back(median_of(out.distance[g]));
    }
    for (long v : violations) out.violations += v;
    return out;
}

}  // namespace qtraj

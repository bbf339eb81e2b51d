// lindblad.hpp
// Mean (unconditioned) evolution: the Lindblad generator, its semigroup,
// stationary states and the ergodicity check.

#pragma once

#include "qtraj/linalg.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace qtraj {

// The tuple (H, {L_i} diffusive, {C_j} jump) on C^k.
class OperatorModel {
public:
    OperatorModel() = default;

    OperatorModel(HermitianOperator h, std::vector<ComplexOperator> diffusive,
                  std::vector<ComplexOperator> jump)
        : h_(std::move(h)), diffusive_(std::move(diffusive)), jump_(std::move(jump)) {
        const int k = h_.dim();
        for (const auto& l : diffusive_) {
            if (l.dim() != k) throw std::invalid_argument("OperatorModel: diffusive operator dimension mismatch");
        }
        for (const auto& c : jump_) {
            if (c.dim() != k) throw std::invalid_argument("OperatorModel: jump operator dimension mismatch");
        }
        k_drift_ = -kI * h_.matrix();
        for (const auto& l : diffusive_) k_drift_ -= 0.5 * l.matrix().adjoint() * l.matrix();
        for (const auto& c : jump_) k_drift_ -= 0.5 * c.matrix().adjoint() * c.matrix();
    }

    // Convenience constructor from raw matrices.
    static OperatorModel from_matrices(const Matrix& h, const std::vector<Matrix>& diffusive,
                                       const std::vector<Matrix>& jump) {
        std::vector<ComplexOperator> d, j;
        for (const auto& m : diffusive) d.emplace_back(m);
        for (const auto& m : jump) j.emplace_back(m);
        return OperatorModel(HermitianOperator(h), std::move(d), std::move(j));
    }

    int dim() const { return h_.dim(); }
    const HermitianOperator& hamiltonian() const { return h_; }
    const std::vector<ComplexOperator>& diffusive() const { return diffusive_; }
    const std::vector<ComplexOperator>& jump() const { return jump_; }
    int n_diffusive() const { return static_cast<int>(diffusive_.size()); }
    int n_jump() const { return static_cast<int>(jump_.size()); }

    // K = -iH - 1/2 (sum L_i* L_i + sum C_j* C_j)
    const Matrix& drift() const { return k_drift_; }

    // All noise operators V_i, diffusive first.
    std::vector<Matrix> noise_operators() const {
        std::vector<Matrix> out;
        for (const auto& l : diffusive_) out.push_back(l.matrix());
        for (const auto& c : jump_) out.push_back(c.matrix());
        return out;
    }

    // X -> U X U* applied to every operator.
    OperatorModel conjugated(const Matrix& u) const {
        std::vector<Matrix> d, j;
        for (const auto& l : diffusive_) d.push_back(u * l.matrix() * u.adjoint());
        for (const auto& c : jump_) j.push_back(u * c.matrix() * u.adjoint());
        return from_matrices(u * h_.matrix() * u.adjoint(), d, j);
    }

private:
    HermitianOperator h_;
    std::vector<ComplexOperator> diffusive_;
    std::vector<ComplexOperator> jump_;
    Matrix k_drift_;
};

// ---------------------------------------------------------------------------

inline Matrix lindblad_apply(const OperatorModel& model, const Matrix& rho) {
    const int k = model.dim();
    if (rho.rows() != k || rho.cols() != k) throw std::invalid_argument("lindblad_apply: dimension mismatch");
    const Matrix& h = model.hamiltonian().matrix();
    Matrix out = -kI * (h * rho - rho * h);
    for (const auto& v : model.noise_operators()) {
        const Matrix vv = v.adjoint() * v;
        out += v * rho * v.adjoint() - 0.5 * (vv * rho + rho * vv);
    }
    return out;
}

inline HermitianOperator lindblad_apply(const OperatorModel& model, const HermitianOperator& rho) {
    return HermitianOperator(lindblad_apply(model, rho.matrix()));
}

// Column-stacking superoperator: vec(L(rho)) = G vec(rho), using
// vec(A X B) = (B^T kron A) vec(X).
inline Matrix vectorized_generator(const OperatorModel& model) {
    const int k = model.dim();
    const Matrix id = Matrix::Identity(k, k);
    const Matrix& h = model.hamiltonian().matrix();
    Matrix g = -kI * kron(id, h) + kI * kron(h.transpose(), id);
    for (const auto& v : model.noise_operators()) {
        const Matrix vv = v.adjoint() * v;
        g += kron(v.conjugate(), v) - 0.5 * kron(id, vv) - 0.5 * kron(vv.transpose(), id);
    }
    return g;
}

inline Matrix apply_superoperator(const Matrix& super, const Matrix& rho) {
    const int k = static_cast<int>(rho.rows());
    return unstack(super * stack(rho), k);
}

// e^{tL}, computed by Pade scaling-and-squaring on the k^2 x k^2 generator.
inline Matrix semigroup(const OperatorModel& model, double t) {
    if (t < 0.0) throw std::invalid_argument("semigroup: negative time");
    const Matrix g = vectorized_generator(model);
    if (t == 0.0) return Matrix::Identity(g.rows(), g.cols());
    return (g * t).exp();
}

// Hermitian output of e^{tL} before positivity repair.
inline Matrix evolve_master_raw(const OperatorModel& model, const Matrix& rho0, double t) {
    if (t < 0.0) throw std::invalid_argument("evolve_master: negative time");
    if (t == 0.0) return rho0;
    Matrix r = apply_superoperator(semigroup(model, t), rho0);
    return 0.5 * (r + r.adjoint());
}

inline DensityMatrix evolve_master(const OperatorModel& model, const DensityMatrix& rho0, double t) {
    if (t < 0.0) throw std::invalid_argument("evolve_master: negative time");
    if (t == 0.0) return rho0;
    return DensityMatrix::repaired(evolve_master_raw(model, rho0.matrix(), t));
}

// ---------------------------------------------------------------------------
// Kernel utilities

namespace detail {

// Orthonormal basis (columns) of the numerical null space of g, relative
// tolerance on singular values.
inline Matrix null_space(const Matrix& g, double rel_tol) {
    Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullV);
    const RealVector& s = svd.singularValues();
    const double scale = std::max(s.size() > 0 ? s(0) : 0.0, 1e-300);
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > rel_tol * scale) ++rank;
    if (s.size() > 0 && s(0) == 0.0) rank = 0;
    return svd.matrixV().rightCols(g.cols() - rank);
}

// Hermitian orthonormal (Hilbert-Schmidt, real span) basis of a complex
// subspace of k x k matrices that is closed under adjoint.
inline std::vector<Matrix> hermitian_basis(const Matrix& kernel_cols, int k) {
    std::vector<Vector> cands;
    for (Eigen::Index c = 0; c < kernel_cols.cols(); ++c) {
        const Matrix x = unstack(kernel_cols.col(c), k);
        cands.push_back(stack(0.5 * (x + x.adjoint())));
        cands.push_back(stack((x - x.adjoint()) / (2.0 * kI)));
    }
    // Real Gram-Schmidt with re-orthogonalization.
    std::vector<Vector> basis;
    for (auto v : cands) {
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) v -= b.dot(v).real() * b;
        }
        const double n = v.norm();
        if (n > 1e-8) basis.push_back(v / n);
        if (static_cast<Eigen::Index>(basis.size()) == kernel_cols.cols()) break;
    }
    std::vector<Matrix> out;
    for (const auto& b : basis) out.push_back(unstack(b, k));
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ergodicity

struct ErgodicityReport {
    bool holds = false;
    std::optional<DensityMatrix> stationary_state;
    double spectral_gap = 0.0;
    int zero_multiplicity = 0;
};

inline constexpr double kGapTol = 1e-8;

inline ErgodicityReport check_l_erg(const OperatorModel& model, double gap_tol = kGapTol) {
    const int k = model.dim();
    const Matrix g = vectorized_generator(model);
    const double gnorm = operator_norm(g);
    ErgodicityReport rep;
    if (gnorm == 0.0) {
        rep.zero_multiplicity = k * k;
        rep.holds = (k == 1);
        if (rep.holds) rep.stationary_state = DensityMatrix::maximally_mixed(1);
        return rep;
    }
    Eigen::ComplexEigenSolver<Matrix> es(g, false);
    const Vector& mu = es.eigenvalues();
    double max_re = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        if (std::abs(mu(i)) < gap_tol * gnorm) {
            ++rep.zero_multiplicity;
        } else {
            max_re = std::max(max_re, mu(i).real());
        }
    }
    rep.spectral_gap = std::isfinite(max_re) ? std::max(0.0, -max_re) : 0.0;
    rep.holds = rep.zero_multiplicity == 1;
    if (rep.holds) {
        Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullV);
        Matrix x = unstack(svd.matrixV().col(g.cols() - 1), k);
        const cplx tr = x.trace();
        x /= tr;
        rep.stationary_state = DensityMatrix::repaired(0.5 * (x + x.adjoint()));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Stationary states

struct StationaryDecomposition {
    std::vector<DensityMatrix> states;  // extremal, pairwise orthogonal supports
    int kernel_dimension = 0;
    int transient_dimension = 0;        // D = k - rank of summed supports
    bool multiplicity_flag = false;     // kernel larger than the block count
};

inline StationaryDecomposition stationary_decomposition(const OperatorModel& model,
                                                        double rel_tol = kGapTol,
                                                        std::uint64_t seed = 0x5eedULL) {
    const int k = model.dim();
    const Matrix g = vectorized_generator(model);
    StationaryDecomposition out;

    const Matrix right = detail::null_space(g, rel_tol);
    out.kernel_dimension = static_cast<int>(right.cols());
    if (right.cols() == 0) return out;

    // Spectral projection of Id/k onto the kernel: the 0-eigenvalue of a
    // Lindbladian is semisimple, so P = R (W* R)^{-1} W* with W the left kernel.
    const Matrix left = detail::null_space(g.adjoint(), rel_tol);
    Matrix rho_max;
    if (left.cols() == right.cols()) {
        const Matrix wr = left.adjoint() * right;
        const Vector coeff = wr.fullPivLu().solve(left.adjoint() * stack(Matrix::Identity(k, k) / double(k)));
        rho_max = unstack(right * coeff, k);
    } else {
        rho_max = evolve_master_raw(model, Matrix::Identity(k, k) / double(k), 1e3);
    }
    rho_max = 0.5 * (rho_max + rho_max.adjoint());
    rho_max /= rho_max.trace().real();

    Eigen::SelfAdjointEigenSolver<Matrix> es_max(rho_max);
    const RealVector& pev = es_max.eigenvalues();
    const double top = pev.maxCoeff();
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < pev.size(); ++i) {
        if (pev(i) > 1e-9 * top) support.push_back(i);
    }
    const auto r = static_cast<Eigen::Index>(support.size());
    out.transient_dimension = k - static_cast<int>(r);
    Matrix u(k, r);
    RealVector inv_sqrt(r);
    for (Eigen::Index c = 0; c < r; ++c) {
        u.col(c) = es_max.eigenvectors().col(support[static_cast<std::size_t>(c)]);
        inv_sqrt(c) = 1.0 / std::sqrt(pev(support[static_cast<std::size_t>(c)]));
    }

    // Random Hermitian combination of the kernel, relative to rho_max.
    const auto hb = detail::hermitian_basis(right, k);
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal;
    Matrix x = Matrix::Zero(k, k);
    for (const auto& b : hb) x += normal(eng) * b;
    const Matrix ratio = inv_sqrt.cast<cplx>().asDiagonal() * (u.adjoint() * x * u) *
                         inv_sqrt.cast<cplx>().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> es_ratio(0.5 * (ratio + ratio.adjoint()));
    const RealVector& rv = es_ratio.eigenvalues();
    const double spread = std::max(1.0, rv.cwiseAbs().maxCoeff());

    // Cluster equal eigenvalues; each cluster is one block support.
    Eigen::Index start = 0;
    while (start < r) {
        Eigen::Index end = start + 1;
        while (end < r && rv(end) - rv(end - 1) <= 1e-6 * spread) ++end;
        const Matrix block = u * es_ratio.eigenvectors().middleCols(start, end - start);
        const Matrix proj = block * block.adjoint();
        Matrix rho = proj * rho_max * proj;
        rho = 0.5 * (rho + rho.adjoint());
        rho /= rho.trace().real();
        out.states.push_back(DensityMatrix::repaired(rho));
        start = end;
    }
    out.multiplicity_flag = out.kernel_dimension > static_cast<int>(out.states.size());
    return out;
}

inline std::vector<DensityMatrix> stationary_states(const OperatorModel& model) {
    return stationary_decomposition(model).states;
}

// ---------------------------------------------------------------------------

// True iff (Id - pi) X pi = 0 for every noise operator X.
inline bool invariant_projector_test(const OperatorModel& model, const Matrix& pi, double tolerance = 1e-10) {
    const int k = model.dim();
    if (pi.rows() != k || pi.cols() != k) throw std::invalid_argument("invariant_projector_test: dimension mismatch");
    const double scale = std::max(1.0, pi.norm());
    if ((pi * pi - pi).norm() > 1e-8 * scale || (pi - pi.adjoint()).norm() > 1e-8 * scale) {
        throw std::invalid_argument("invariant_projector_test: input is not an orthogonal projector");
    }
    const Matrix comp = Matrix::Identity(k, k) - pi;
    for (const auto& v : model.noise_operators()) {
        if ((comp * v * pi).norm() > tolerance * std::max(1.0, v.norm())) return false;
    }
    return true;
}

}  // namespace qtraj

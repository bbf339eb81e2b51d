// linalg.hpp
// Dense complex linear algebra at small dimension: operators, density
// matrices, pure states on projective space, the Fubini-Study distance and
// the second exterior power.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtraj {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr cplx kI{0.0, 1.0};

namespace tol {
inline constexpr double hermitian = 1e-12;
inline constexpr double hermitian_reject = 1e-8;
inline constexpr double psd_clip = 1e-10;
inline constexpr double trace = 1e-10;
inline constexpr double unit_norm = 1e-12;
inline constexpr double same_point = 1e-10;
}  // namespace tol

// ---------------------------------------------------------------------------
// Norms

inline double operator_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

inline double trace_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues().sum();
}

inline RealVector singular_values(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues();
}

inline bool all_finite(const Matrix& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const cplx z = a.data()[i];
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// ComplexOperator: a finite square k x k complex matrix.

class ComplexOperator {
public:
    ComplexOperator() = default;

    explicit ComplexOperator(Matrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols() || m_.rows() == 0) {
            throw std::invalid_argument("ComplexOperator: matrix must be square and non-empty");
        }
        if (!all_finite(m_)) {
            throw std::invalid_argument("ComplexOperator: non-finite entry");
        }
    }

    static ComplexOperator zero(int k) { return ComplexOperator(Matrix::Zero(k, k)); }
    static ComplexOperator identity(int k) { return ComplexOperator(Matrix::Identity(k, k)); }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Matrix& matrix() const { return m_; }
    cplx operator()(int r, int c) const { return m_(r, c); }

    ComplexOperator adjoint() const { return ComplexOperator(m_.adjoint()); }

private:
    Matrix m_;
};

// ---------------------------------------------------------------------------
// HermitianOperator: symmetrized on construction.

class HermitianOperator {
public:
    HermitianOperator() = default;

    explicit HermitianOperator(const Matrix& m) {
        if (m.rows() != m.cols() || m.rows() == 0) {
            throw std::invalid_argument("HermitianOperator: matrix must be square and non-empty");
        }
        if (!all_finite(m)) throw std::invalid_argument("HermitianOperator: non-finite entry");
        const double scale = std::max(1.0, m.norm());
        if ((m - m.adjoint()).norm() > tol::hermitian_reject * scale) {
            throw std::invalid_argument("HermitianOperator: input is not Hermitian");
        }
        m_ = 0.5 * (m + m.adjoint());
    }

    explicit HermitianOperator(const ComplexOperator& op) : HermitianOperator(op.matrix()) {}

    static HermitianOperator zero(int k) { return HermitianOperator(Matrix::Zero(k, k)); }
    static HermitianOperator identity(int k) { return HermitianOperator(Matrix::Identity(k, k)); }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Matrix& matrix() const { return m_; }
    cplx operator()(int r, int c) const { return m_(r, c); }
    double trace() const { return m_.trace().real(); }

    RealVector eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }

private:
    Matrix m_;
};

// ---------------------------------------------------------------------------
// DensityMatrix: positive semidefinite, trace one.
//
// Eigenvalues in [-psd_clip, 0) are clipped to zero. Inputs that are already
// PSD with unit trace are stored entry-for-entry.

class DensityMatrix {
public:
    DensityMatrix() = default;

    explicit DensityMatrix(const Matrix& m) : DensityMatrix(HermitianOperator(m)) {}

    explicit DensityMatrix(const HermitianOperator& h) {
        if (std::abs(h.trace() - 1.0) > tol::trace) {
            throw std::invalid_argument("DensityMatrix: trace differs from one by " +
                                        std::to_string(h.trace() - 1.0));
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
        const RealVector& ev = es.eigenvalues();
        if (ev(0) < -tol::psd_clip) {
            throw std::invalid_argument("DensityMatrix: eigenvalue " + std::to_string(ev(0)) +
                                        " below clipping threshold");
        }
        // Rounding-level negatives leave the entries untouched.
        if (ev(0) >= -64.0 * std::numeric_limits<double>::epsilon()) {
            m_ = h.matrix();
            return;
        }
        RealVector clipped = ev.cwiseMax(0.0);
        clipped /= clipped.sum();
        m_ = es.eigenvectors() * clipped.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
        m_ = 0.5 * (m_ + m_.adjoint());
    }

    // Clips every negative eigenvalue and renormalizes the trace. Used after
    // numerical evolution, where drift is bounded but not guaranteed below the
    // construction threshold.
    static DensityMatrix repaired(const Matrix& m) {
        if (m.rows() != m.cols() || m.rows() == 0) {
            throw std::invalid_argument("DensityMatrix::repaired: matrix must be square");
        }
        if (!all_finite(m)) throw std::invalid_argument("DensityMatrix::repaired: non-finite entry");
        const Matrix h = 0.5 * (m + m.adjoint());
        Eigen::SelfAdjointEigenSolver<Matrix> es(h);
        RealVector ev = es.eigenvalues().cwiseMax(0.0);
        const double s = ev.sum();
        if (!(s > 0.0)) throw std::invalid_argument("DensityMatrix::repaired: no positive part");
        DensityMatrix out;
        if (es.eigenvalues()(0) >= 0.0) {
            out.m_ = h / h.trace().real();
        } else {
            ev /= s;
            out.m_ = es.eigenvectors() * ev.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
            out.m_ = 0.5 * (out.m_ + out.m_.adjoint());
        }
        return out;
    }

    // No validation; the caller guarantees a Hermitian PSD trace-one matrix.
    static DensityMatrix unchecked(Matrix m) {
        DensityMatrix out;
        out.m_ = std::move(m);
        return out;
    }

    static DensityMatrix maximally_mixed(int k) {
        DensityMatrix out;
        out.m_ = Matrix::Identity(k, k) / static_cast<double>(k);
        return out;
    }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Matrix& matrix() const { return m_; }
    cplx operator()(int r, int c) const { return m_(r, c); }
    HermitianOperator as_hermitian() const { return HermitianOperator(m_); }

    RealVector eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }

    double purity() const { return (m_ * m_).trace().real(); }

private:
    Matrix m_;
};

// ---------------------------------------------------------------------------
// ProjectivePoint: a unit vector modulo global phase. The stored
// representative has its first non-negligible component real and positive.

class ProjectivePoint {
public:
    ProjectivePoint() = default;

    explicit ProjectivePoint(const Vector& v) {
        if (v.size() == 0) throw std::invalid_argument("ProjectivePoint: empty vector");
        const double n = v.norm();
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw std::invalid_argument("ProjectivePoint: zero or non-finite vector");
        }
        v_ = v / n;
        canonicalize();
    }

    static ProjectivePoint basis(int k, int index) {
        Vector e = Vector::Zero(k);
        e(index) = 1.0;
        return ProjectivePoint(e);
    }

    int dim() const { return static_cast<int>(v_.size()); }
    const Vector& vector() const { return v_; }
    cplx operator[](int i) const { return v_(i); }

    // x^ = y^ iff |<x, y>| = 1 within tolerance.
    bool same_as(const ProjectivePoint& other, double tolerance = tol::same_point) const {
        if (other.dim() != dim()) return false;
        return std::abs(v_.dot(other.v_)) >= 1.0 - tolerance;
    }

    friend bool operator==(const ProjectivePoint& a, const ProjectivePoint& b) { return a.same_as(b); }

private:
    void canonicalize() {
        const double threshold = 1e-12;
        for (Eigen::Index i = 0; i < v_.size(); ++i) {
            const double a = std::abs(v_(i));
            if (a > threshold) {
                const cplx phase = std::conj(v_(i)) / a;
                v_ *= phase;
                v_(i) = cplx(a, 0.0);
                break;
            }
        }
    }

    Vector v_;
};

// ---------------------------------------------------------------------------
// WedgeOperator: matrix of an operator acting on the alternating space of
// two-forms, basis {e_p ^ e_q : p < q} in lexicographic order.

class WedgeOperator {
public:
    WedgeOperator(int base_dim, Matrix m) : base_dim_(base_dim), m_(std::move(m)) {}

    int base_dim() const { return base_dim_; }
    int dim() const { return static_cast<int>(m_.rows()); }
    const Matrix& matrix() const { return m_; }

    friend WedgeOperator operator*(const WedgeOperator& a, const WedgeOperator& b) {
        return WedgeOperator(a.base_dim_, a.m_ * b.m_);
    }

private:
    int base_dim_ = 0;
    Matrix m_;
};

// Index pairs (p, q), p < q, in the lexicographic order used by wedge_square.
inline std::vector<std::pair<int, int>> wedge_basis(int k) {
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<std::size_t>(k * (k - 1) / 2));
    for (int p = 0; p < k; ++p) {
        for (int q = p + 1; q < k; ++q) out.emplace_back(p, q);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Operations

inline DensityMatrix make_projector(const ProjectivePoint& x) {
    const Vector& v = x.vector();
    Matrix p = v * v.adjoint();
    for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, i) = cplx(p(i, i).real(), 0.0);
    p /= p.trace().real();
    return DensityMatrix::unchecked(std::move(p));
}

// Fubini-Study distance sqrt(1 - |<x,y>|^2), evaluated through the 2x2 minors
// of [x y] so that nearby points do not lose precision to cancellation.
inline double fs_distance(const Vector& x, const Vector& y) {
    if (x.size() != y.size()) throw std::invalid_argument("fs_distance: dimension mismatch");
    const double nx = x.norm();
    const double ny = y.norm();
    if (!(nx > 0.0) || !(ny > 0.0)) throw std::invalid_argument("fs_distance: zero vector");
    double s = 0.0;
    const Eigen::Index k = x.size();
    for (Eigen::Index p = 0; p < k; ++p) {
        for (Eigen::Index q = p + 1; q < k; ++q) {
            s += std::norm(x(p) * y(q) - x(q) * y(p));
        }
    }
    return std::clamp(std::sqrt(s) / (nx * ny), 0.0, 1.0);
}

inline double fs_distance(const ProjectivePoint& x, const ProjectivePoint& y) {
    return fs_distance(x.vector(), y.vector());
}

inline WedgeOperator wedge_square(const Matrix& a) {
    const int k = static_cast<int>(a.rows());
    if (a.rows() != a.cols()) throw std::invalid_argument("wedge_square: matrix must be square");
    if (k < 2) throw std::invalid_argument("wedge_square: dimension must be at least 2");
    const auto basis = wedge_basis(k);
    const auto n = static_cast<Eigen::Index>(basis.size());
    Matrix w(n, n);
    for (Eigen::Index row = 0; row < n; ++row) {
        const auto [p, q] = basis[static_cast<std::size_t>(row)];
        for (Eigen::Index col = 0; col < n; ++col) {
            const auto [r, s] = basis[static_cast<std::size_t>(col)];
            w(row, col) = a(p, r) * a(q, s) - a(p, s) * a(q, r);
        }
    }
    return WedgeOperator(k, std::move(w));
}

inline WedgeOperator wedge_square(const ComplexOperator& a) { return wedge_square(a.matrix()); }

// Operator norm of the second exterior power: product of the two largest
// singular values.
inline double wedge_norm(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("wedge_norm: matrix must be square");
    if (a.rows() < 2) throw std::invalid_argument("wedge_norm: dimension must be at least 2");
    const RealVector s = singular_values(a);
    return s(0) * s(1);
}

inline double wedge_norm(const ComplexOperator& a) { return wedge_norm(a.matrix()); }

// Unit vector x maximizing ||A x||. When the top singular value is
// degenerate, the maximizer is the normalized projection of the basis vector
// e_p onto the top singular subspace, with p the smallest index among those
// whose projection is largest.
inline ProjectivePoint top_right_singular_vector(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) throw std::invalid_argument("top_right_singular_vector: empty");
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
    const RealVector& s = svd.singularValues();
    if (!(s(0) > 0.0)) throw std::domain_error("top_right_singular_vector: zero operator");
    const double tie = 64.0 * std::numeric_limits<double>::epsilon() * s(0);
    Eigen::Index r = 1;
    while (r < s.size() && s(0) - s(r) <= tie) ++r;
    if (r == 1) return ProjectivePoint(svd.matrixV().col(0));

    const Matrix vr = svd.matrixV().leftCols(r);
    const Eigen::Index k = a.cols();
    Eigen::Index best = 0;
    double best_norm = -1.0;
    for (Eigen::Index p = 0; p < k; ++p) {
        const double nrm = vr.row(p).norm();
        if (nrm > best_norm + 1e-12) {
            best_norm = nrm;
            best = p;
        }
    }
    const Vector proj = vr * vr.row(best).adjoint();
    return ProjectivePoint(proj);
}

inline ProjectivePoint top_right_singular_vector(const ComplexOperator& a) {
    return top_right_singular_vector(a.matrix());
}

// ---------------------------------------------------------------------------
// Pauli matrices and small helpers shared by the model constructors.

namespace pauli {
inline Matrix x() {
    Matrix m(2, 2);
    m << 0.0, 1.0, 1.0, 0.0;
    return m;
}
inline Matrix y() {
    Matrix m(2, 2);
    m << 0.0, -kI, kI, 0.0;
    return m;
}
inline Matrix z() {
    Matrix m(2, 2);
    m << 1.0, 0.0, 0.0, -1.0;
    return m;
}
// sigma_+ = |e1><e2|, sigma_- = |e2><e1|
inline Matrix plus() {
    Matrix m(2, 2);
    m << 0.0, 1.0, 0.0, 0.0;
    return m;
}
inline Matrix minus() {
    Matrix m(2, 2);
    m << 0.0, 0.0, 1.0, 0.0;
    return m;
}
}  // namespace pauli

inline Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }

// Column-stacking vectorization.
inline Vector stack(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

inline Matrix unstack(const Vector& v, int k) {
    if (v.size() != static_cast<Eigen::Index>(k) * k) throw std::invalid_argument("unstack: size mismatch");
    return Eigen::Map<const Matrix>(v.data(), k, k);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

}  // namespace qtraj

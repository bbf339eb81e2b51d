// gallery.hpp
// Named example models with the invariant measures known in closed form:
// perturbed non-demolition measurement, thermal qubit (diffusive and jump
// unravelings), embedded classical Markov chains, and a three-level model
// where purification fails but trajectories still purify.

#pragma once

#include "qtraj/lindblad.hpp"
#include "qtraj/linalg.hpp"
#include "qtraj/measure.hpp"
#include "qtraj/purification.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qtraj {

struct WeightedAtom {
    ProjectivePoint point;
    double weight = 0.0;
};

struct ExpectedBehaviour {
    bool erg_holds = true;
    PurVerdict pur_verdict = PurVerdict::holds_certified;
    std::optional<Matrix> stationary_state;
    std::optional<AngleDensity> density;       // on the Y = 0 circle
    std::vector<WeightedAtom> atoms;           // discrete invariant measure
    std::optional<Eigen::VectorXd> chain;      // stationary law of an embedded chain
};

struct NamedExample {
    std::string name;
    OperatorModel model;
    ExpectedBehaviour expected;
    ProjectivePoint default_start;
    std::map<std::string, double> params;
};

// ---------------------------------------------------------------------------
// Non-demolition measurement of sz perturbed by H = sy.

// Unnormalized invariant angle density,
//   tau(theta) = int_theta^pi exp((cot x - cot theta)/gamma) sin x / sin^3 theta dx
// on (0, pi), extended with period pi. With c = cot theta and u = cot x this is
//   int_0^inf exp(-w/gamma) ((1 + c^2) / (1 + (c - w)^2))^{3/2} dw.
// Both endpoint limits equal gamma.
inline double qnd_tau(double gamma, double theta) {
    if (!(gamma > 0.0)) throw std::invalid_argument("qnd_tau: gamma must be positive");
    double t = std::fmod(theta, kPi);
    if (t < 0.0) t += kPi;
    const double s = std::sin(t);
    if (t == 0.0 || s < 1e-100) return gamma;
    const double c = std::cos(t) / s;
    const double c2 = 1.0 + c * c;
    auto f = [gamma, c, c2](double w) {
        const double d = c - w;
        const double r = c2 / (1.0 + d * d);
        return std::exp(-w / gamma) * r * std::sqrt(r);
    };
    // exp(-w/gamma) scale plus the bump of width ~1 at w = c.
    std::vector<double> pts{5.0 * gamma, 20.0 * gamma, 60.0 * gamma};
    for (double off : {-20.0, -2.0, 0.0, 2.0, 20.0}) pts.push_back(c + off);
    std::sort(pts.begin(), pts.end());
    std::vector<double> cuts{0.0};
    for (double p : pts) {
        if (p > cuts.back() + 0.5) cuts.push_back(p);
    }
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += GK::integrate(f, cuts[i], cuts[i + 1], 12, 1e-12);
    total += GK::integrate(f, cuts.back(), std::numeric_limits<double>::infinity(), 12, 1e-12);
    return total;
}

inline AngleDensity qnd_density(double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("qnd_density: gamma must be positive");
    return AngleDensity("qnd", [gamma](double th) { return qnd_tau(gamma, th); }, {{"gamma", gamma}});
}

// Normalized density value.
inline double qnd_density(double gamma, double theta) { return qnd_density(gamma)(theta); }

inline NamedExample qnd_model(double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("qnd_model: gamma must be positive");
    NamedExample ex{"qnd",
                    OperatorModel::from_matrices(pauli::y(), {std::sqrt(gamma) * pauli::z()}, {}),
                    {},
                    circle_point(kPi / 2),
                    {{"gamma", gamma}}};
    ex.expected.erg_holds = true;
    ex.expected.pur_verdict = PurVerdict::holds_certified;
    ex.expected.stationary_state = Matrix(Matrix::Identity(2, 2) / 2.0);
    ex.expected.density = qnd_density(gamma);
    return ex;
}

// ---------------------------------------------------------------------------
// Thermal qubit.

inline double thermal_tau(double a, double b, double theta) {
    const double z = (a - b) / (a + b);
    const double vs = (a + b) / (2.0 * std::sqrt(a * b));
    const double c = std::cos(theta) - z;
    const double den = c * c + 1.0 - z * z;
    return std::exp(vs * z * std::atan(vs * c)) / (den * std::sqrt(den));
}

inline AngleDensity thermal_diffusive_density(double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("thermal density: a, b must be positive");
    return AngleDensity("thermal_diffusive", [a, b](double th) { return thermal_tau(a, b, th); }, {{"a", a}, {"b", b}});
}

inline Matrix thermal_stationary(double a, double b) {
    Matrix rho = Matrix::Zero(2, 2);
    rho(0, 0) = a / (a + b);
    rho(1, 1) = b / (a + b);
    return rho;
}

inline NamedExample thermal_diffusive_model(double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("thermal_diffusive_model: a, b must be positive");
    NamedExample ex{"thermal_diffusive",
                    OperatorModel::from_matrices(Matrix::Zero(2, 2),
                                                 {std::sqrt(a) * pauli::plus(), std::sqrt(b) * pauli::minus()}, {}),
                    {},
                    circle_point(kPi / 2),
                    {{"a", a}, {"b", b}}};
    ex.expected.erg_holds = true;
    ex.expected.pur_verdict = PurVerdict::holds_certified;
    ex.expected.stationary_state = thermal_stationary(a, b);
    ex.expected.density = thermal_diffusive_density(a, b);
    return ex;
}

inline NamedExample thermal_jump_model(double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("thermal_jump_model: a, b must be positive");
    NamedExample ex{"thermal_jump",
                    OperatorModel::from_matrices(Matrix::Zero(2, 2), {},
                                                 {std::sqrt(a) * pauli::plus(), std::sqrt(b) * pauli::minus()}),
                    {},
                    ProjectivePoint::basis(2, 0),
                    {{"a", a}, {"b", b}}};
    ex.expected.erg_holds = true;
    ex.expected.pur_verdict = PurVerdict::holds_certified;
    ex.expected.stationary_state = thermal_stationary(a, b);
    ex.expected.atoms = {{ProjectivePoint::basis(2, 0), a / (a + b)}, {ProjectivePoint::basis(2, 1), b / (a + b)}};
    return ex;
}

// ---------------------------------------------------------------------------
// Classical Markov chains: C_ij = sqrt(Q_ij) e_j e_i^*, a jump i -> j at rate Q_ij.

inline void validate_generator(const Eigen::MatrixXd& q) {
    if (q.rows() != q.cols() || q.rows() < 1) throw std::invalid_argument("generator must be square");
    const Eigen::Index k = q.rows();
    for (Eigen::Index i = 0; i < k; ++i) {
        double row = 0.0;
        bool out = false;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (!std::isfinite(q(i, j))) throw std::invalid_argument("generator has a non-finite entry");
            row += q(i, j);
            if (i != j) {
                if (q(i, j) < 0.0) throw std::invalid_argument("generator has a negative off-diagonal rate");
                out = out || q(i, j) > 0.0;
            }
        }
        if (std::abs(row) > 1e-12 * std::max(1.0, q.row(i).cwiseAbs().sum())) {
            throw std::invalid_argument("generator rows must sum to zero");
        }
        if (!out && k > 1) throw std::invalid_argument("every state needs a positive exit rate");
    }
}

// Channel (i, j) pairs in the jump-operator order of markov_embedding_model.
inline std::vector<std::pair<int, int>> markov_channels(const Eigen::MatrixXd& q) {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < q.rows(); ++i) {
        for (int j = 0; j < q.cols(); ++j) {
            if (i != j && q(i, j) > 0.0) out.emplace_back(i, j);
        }
    }
    return out;
}

// Stationary law from the null space of Q^T; empty when not unique.
inline std::optional<Eigen::VectorXd> markov_stationary(const Eigen::MatrixXd& q) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(q.transpose(), Eigen::ComputeFullV);
    const Eigen::VectorXd sv = svd.singularValues();
    const double tol = 1e-10 * std::max(1.0, sv(0));
    int nullity = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) nullity += sv(i) <= tol ? 1 : 0;
    if (nullity != 1) return std::nullopt;
    Eigen::VectorXd p = svd.matrixV().col(q.cols() - 1);
    p /= p.sum();
    return p.cwiseMax(0.0) / p.cwiseMax(0.0).sum();
}

// Cyclic generator 1 -> 2 -> ... -> k -> 1 with the given rates.
inline Eigen::MatrixXd cyclic_generator(const std::vector<double>& rates) {
    const int k = static_cast<int>(rates.size());
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        q(i, (i + 1) % k) += rates[static_cast<std::size_t>(i)];
        q(i, i) -= rates[static_cast<std::size_t>(i)];
    }
    return q;
}

inline NamedExample markov_embedding_model(const Eigen::MatrixXd& q, const std::vector<double>& h_diag = {}) {
    validate_generator(q);
    const int k = static_cast<int>(q.rows());
    if (!h_diag.empty() && static_cast<int>(h_diag.size()) != k) {
        throw std::invalid_argument("markov_embedding_model: H diagonal has the wrong length");
    }
    Matrix h = Matrix::Zero(k, k);
    for (int i = 0; i < static_cast<int>(h_diag.size()); ++i) h(i, i) = h_diag[static_cast<std::size_t>(i)];
    std::vector<Matrix> jumps;
    for (const auto& [i, j] : markov_channels(q)) {
        Matrix c = Matrix::Zero(k, k);
        c(j, i) = std::sqrt(q(i, j));
        jumps.push_back(c);
    }
    NamedExample ex{"markov", OperatorModel::from_matrices(h, {}, jumps), {}, ProjectivePoint::basis(k, 0), {}};
    const auto pi = markov_stationary(q);
    ex.expected.erg_holds = pi.has_value();
    ex.expected.pur_verdict = PurVerdict::holds_certified;
    if (pi) {
        ex.expected.chain = *pi;
        Matrix rho = Matrix::Zero(k, k);
        for (int i = 0; i < k; ++i) {
            rho(i, i) = (*pi)(i);
            ex.expected.atoms.push_back({ProjectivePoint::basis(k, i), (*pi)(i)});
        }
        ex.expected.stationary_state = rho;
    }
    return ex;
}

// ---------------------------------------------------------------------------
// Three-level model: H = 0, L0 = e1 u*, L1 = 2 v v* + e2 e2*, C2 = u e1*,
// u = (e1 + e2 + e3)/sqrt 3, v = (e1 + e3)/sqrt 2.

inline NamedExample counterexample_model() {
    Vector e1 = Vector::Unit(3, 0), e2 = Vector::Unit(3, 1), e3 = Vector::Unit(3, 2);
    const Vector u = (e1 + e2 + e3) / std::sqrt(3.0);
    const Vector v = (e1 + e3) / std::sqrt(2.0);
    const Matrix l0 = e1 * u.adjoint();
    const Matrix l1 = 2.0 * v * v.adjoint() + e2 * e2.adjoint();
    const Matrix c2 = u * e1.adjoint();
    NamedExample ex{"counterexample", OperatorModel::from_matrices(Matrix::Zero(3, 3), {l0, l1}, {c2}), {},
                    ProjectivePoint(e1), {}};
    ex.expected.erg_holds = true;
    ex.expected.pur_verdict = PurVerdict::fails;
    return ex;
}

// Witness subspace span{e2, e3}.
inline Matrix counterexample_witness() {
    Matrix p = Matrix::Zero(3, 3);
    p(1, 1) = 1.0;
    p(2, 2) = 1.0;
    return p;
}

// ---------------------------------------------------------------------------
// Lookup by name.

inline std::vector<std::string> gallery_names() {
    return {"qnd", "thermal_diffusive", "thermal_jump", "markov", "counterexample"};
}

struct GalleryParams {
    double gamma = 1.0;
    double a = 2.0;
    double b = 1.0;
    std::optional<Eigen::MatrixXd> q;  // default: cyclic rates (1, 2, 3)
    std::vector<double> h_diag;
};

inline NamedExample gallery_example(const std::string& name, const GalleryParams& p = {}) {
    if (name == "qnd") return qnd_model(p.gamma);
    if (name == "thermal_diffusive") return thermal_diffusive_model(p.a, p.b);
    if (name == "thermal_jump") return thermal_jump_model(p.a, p.b);
    if (name == "markov") return markov_embedding_model(p.q ? *p.q : cyclic_generator({1.0, 2.0, 3.0}), p.h_diag);
    if (name == "counterexample") return counterexample_model();
    throw std::invalid_argument("unknown gallery example '" + name + "'");
}

}  // namespace qtraj

// transport.hpp
// Exact optimal transport between discrete measures: a primal network simplex
// on the complete bipartite transportation graph (block-search pivoting,
// strongly feasible spanning-tree bases, thread/successor tree encoding as in
// LEMON's NetworkSimplex), and the Wasserstein-1 distance on projective space.

#pragma once

#include "qtraj/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtraj {

class SizeBudgetExceeded : public std::length_error {
public:
    explicit SizeBudgetExceeded(std::size_t cells)
        : std::length_error("transport problem with " + std::to_string(cells) +
                            " cells exceeds the size budget; subsample the measures") {}
};

inline constexpr std::size_t kTransportBudget = 10'000'000;

struct TransportResult {
    double cost = 0.0;
    long pivots = 0;
};

// Minimizes sum_ij F_ij c_ij subject to row sums a and column sums b.
// The total masses must agree up to rounding.
class NetworkSimplex {
public:
    NetworkSimplex(const std::vector<double>& a, const std::vector<double>& b, const Eigen::MatrixXd& cost)
        : n1_(static_cast<int>(a.size())), n2_(static_cast<int>(b.size())), c_(cost) {
        if (n1_ == 0 || n2_ == 0) throw std::invalid_argument("NetworkSimplex: empty marginal");
        if (c_.rows() != n1_ || c_.cols() != n2_) throw std::invalid_argument("NetworkSimplex: cost shape mismatch");
        node_num_ = n1_ + n2_;
        arc_num_ = static_cast<std::int64_t>(n1_) * n2_;
        supply_.resize(static_cast<std::size_t>(node_num_) + 1);
        for (int i = 0; i < n1_; ++i) supply_[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)];
        for (int j = 0; j < n2_; ++j) supply_[static_cast<std::size_t>(n1_ + j)] = -b[static_cast<std::size_t>(j)];
        for (double s : supply_) {
            if (!std::isfinite(s)) throw std::invalid_argument("NetworkSimplex: non-finite mass");
        }
        if (!c_.allFinite()) throw std::invalid_argument("NetworkSimplex: non-finite cost");
    }

    TransportResult solve() {
        init();
        TransportResult res;
        const long max_pivots = 50L * (arc_num_ + node_num_) + 1000;
        while (find_entering_arc()) {
            find_join_node();
            find_leaving_arc();
            change_flow();
            update_tree_structure();
            update_potential();
            if (++res.pivots > max_pivots) throw std::runtime_error("NetworkSimplex: pivot limit reached");
        }
        double total = 0.0;
        for (std::int64_t e = 0; e < arc_num_; ++e) {
            if (flow_[static_cast<std::size_t>(e)] != 0.0) total += flow_[static_cast<std::size_t>(e)] * arc_cost(e);
        }
        res.cost = total;
        return res;
    }

    // Flow on real arc (i, j) after solve().
    double flow(int i, int j) const { return flow_[static_cast<std::size_t>(static_cast<std::int64_t>(i) * n2_ + j)]; }

private:
    static constexpr signed char kUpper = -1;
    static constexpr signed char kTree = 0;
    static constexpr signed char kLower = 1;
    static constexpr int kUp = 1;
    static constexpr int kDown = -1;

    int source(std::int64_t e) const {
        return e < arc_num_ ? static_cast<int>(e / n2_) : art_source_[static_cast<std::size_t>(e - arc_num_)];
    }
    int target(std::int64_t e) const {
        return e < arc_num_ ? n1_ + static_cast<int>(e % n2_) : art_target_[static_cast<std::size_t>(e - arc_num_)];
    }
    double arc_cost(std::int64_t e) const {
        return e < arc_num_ ? c_(static_cast<Eigen::Index>(e / n2_), static_cast<Eigen::Index>(e % n2_))
                            : art_cost_[static_cast<std::size_t>(e - arc_num_)];
    }

    void init() {
        const std::size_t nn = static_cast<std::size_t>(node_num_) + 1;
        const std::size_t all = static_cast<std::size_t>(arc_num_ + node_num_);
        root_ = node_num_;
        parent_.assign(nn, -1);
        pred_.assign(nn, -1);
        thread_.assign(nn, 0);
        rev_thread_.assign(nn, 0);
        succ_num_.assign(nn, 0);
        last_succ_.assign(nn, 0);
        pred_dir_.assign(nn, kUp);
        pi_.assign(nn, 0.0);
        state_.assign(all, kLower);
        flow_.assign(all, 0.0);
        art_source_.assign(static_cast<std::size_t>(node_num_), 0);
        art_target_.assign(static_cast<std::size_t>(node_num_), 0);
        art_cost_.assign(static_cast<std::size_t>(node_num_), 0.0);

        double max_cost = 0.0;
        for (Eigen::Index i = 0; i < c_.size(); ++i) max_cost = std::max(max_cost, std::abs(c_.data()[i]));
        art_cost_value_ = (max_cost + 1.0) * static_cast<double>(node_num_);
        eps_ = 64.0 * std::numeric_limits<double>::epsilon() * art_cost_value_;

        block_size_ = std::max<std::int64_t>(static_cast<std::int64_t>(std::sqrt(static_cast<double>(arc_num_))), 10);
        next_arc_ = 0;

        parent_[static_cast<std::size_t>(root_)] = -1;
        pred_[static_cast<std::size_t>(root_)] = -1;
        thread_[static_cast<std::size_t>(root_)] = 0;
        rev_thread_[0] = root_;
        succ_num_[static_cast<std::size_t>(root_)] = node_num_ + 1;
        last_succ_[static_cast<std::size_t>(root_)] = root_ - 1;
        pi_[static_cast<std::size_t>(root_)] = 0.0;

        for (int u = 0; u < node_num_; ++u) {
            const std::int64_t e = arc_num_ + u;
            const auto uu = static_cast<std::size_t>(u);
            const auto ea = static_cast<std::size_t>(u);
            parent_[uu] = root_;
            pred_[uu] = e;
            thread_[uu] = u + 1;
            rev_thread_[uu + 1] = u;
            succ_num_[uu] = 1;
            last_succ_[uu] = u;
            state_[static_cast<std::size_t>(e)] = kTree;
            if (supply_[uu] >= 0.0) {
                pred_dir_[uu] = kUp;
                pi_[uu] = 0.0;
                art_source_[ea] = u;
                art_target_[ea] = root_;
                flow_[static_cast<std::size_t>(e)] = supply_[uu];
                art_cost_[ea] = 0.0;
            } else {
                pred_dir_[uu] = kDown;
                pi_[uu] = art_cost_value_;
                art_source_[ea] = root_;
                art_target_[ea] = u;
                flow_[static_cast<std::size_t>(e)] = -supply_[uu];
                art_cost_[ea] = art_cost_value_;
            }
        }
    }

    double reduced(std::int64_t e) const {
        const std::int64_t i = e / n2_;
        const std::int64_t j = e % n2_;
        return c_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + pi_[static_cast<std::size_t>(i)] -
               pi_[static_cast<std::size_t>(n1_ + j)];
    }

    // Block search over the real arcs only; artificial arcs never re-enter.
    bool find_entering_arc() {
        double min = -eps_;
        std::int64_t cnt = block_size_;
        std::int64_t e;
        bool found = false;
        for (e = next_arc_; e < arc_num_; ++e) {
            const double c = state_[static_cast<std::size_t>(e)] * reduced(e);
            if (c < min) {
                min = c;
                in_arc_ = e;
                found = true;
            }
            if (--cnt == 0) {
                if (found) goto search_end;
                cnt = block_size_;
            }
        }
        for (e = 0; e < next_arc_; ++e) {
            const double c = state_[static_cast<std::size_t>(e)] * reduced(e);
            if (c < min) {
                min = c;
                in_arc_ = e;
                found = true;
            }
            if (--cnt == 0) {
                if (found) goto search_end;
                cnt = block_size_;
            }
        }
        if (!found) return false;
    search_end:
        next_arc_ = e;
        return true;
    }

    void find_join_node() {
        int u = source(in_arc_);
        int v = target(in_arc_);
        while (u != v) {
            if (succ_num_[static_cast<std::size_t>(u)] < succ_num_[static_cast<std::size_t>(v)]) {
                u = parent_[static_cast<std::size_t>(u)];
            } else {
                v = parent_[static_cast<std::size_t>(v)];
            }
        }
        join_ = u;
    }

    // Uncapacitated arcs: only arcs oriented against the cycle can block.
    void find_leaving_arc() {
        int first, second;
        if (state_[static_cast<std::size_t>(in_arc_)] == kLower) {
            first = source(in_arc_);
            second = target(in_arc_);
        } else {
            first = target(in_arc_);
            second = source(in_arc_);
        }
        delta_ = std::numeric_limits<double>::infinity();
        int result = 0;
        for (int u = first; u != join_; u = parent_[static_cast<std::size_t>(u)]) {
            const auto uu = static_cast<std::size_t>(u);
            if (pred_dir_[uu] == kUp) {
                const double d = flow_[static_cast<std::size_t>(pred_[uu])];
                if (d < delta_) {
                    delta_ = d;
                    u_out_ = u;
                    result = 1;
                }
            }
        }
        for (int u = second; u != join_; u = parent_[static_cast<std::size_t>(u)]) {
            const auto uu = static_cast<std::size_t>(u);
            if (pred_dir_[uu] == kDown) {
                const double d = flow_[static_cast<std::size_t>(pred_[uu])];
                if (d <= delta_) {
                    delta_ = d;
                    u_out_ = u;
                    result = 2;
                }
            }
        }
        if (result == 0) throw std::runtime_error("NetworkSimplex: unbounded cycle");
        if (result == 1) {
            u_in_ = first;
            v_in_ = second;
        } else {
            u_in_ = second;
            v_in_ = first;
        }
    }

    void change_flow() {
        if (delta_ > 0.0) {
            const double val = state_[static_cast<std::size_t>(in_arc_)] * delta_;
            flow_[static_cast<std::size_t>(in_arc_)] += val;
            for (int u = source(in_arc_); u != join_; u = parent_[static_cast<std::size_t>(u)]) {
                const auto uu = static_cast<std::size_t>(u);
                flow_[static_cast<std::size_t>(pred_[uu])] -= pred_dir_[uu] * val;
            }
            for (int u = target(in_arc_); u != join_; u = parent_[static_cast<std::size_t>(u)]) {
                const auto uu = static_cast<std::size_t>(u);
                flow_[static_cast<std::size_t>(pred_[uu])] += pred_dir_[uu] * val;
            }
        }
        state_[static_cast<std::size_t>(in_arc_)] = kTree;
        const auto out = static_cast<std::size_t>(pred_[static_cast<std::size_t>(u_out_)]);
        flow_[out] = 0.0;
        state_[out] = kLower;
    }

    void update_tree_structure() {
        auto P = [this](int u) -> int& { return parent_[static_cast<std::size_t>(u)]; };
        auto T = [this](int u) -> int& { return thread_[static_cast<std::size_t>(u)]; };
        auto R = [this](int u) -> int& { return rev_thread_[static_cast<std::size_t>(u)]; };
        auto S = [this](int u) -> int& { return succ_num_[static_cast<std::size_t>(u)]; };
        auto L = [this](int u) -> int& { return last_succ_[static_cast<std::size_t>(u)]; };

        const int old_rev_thread = R(u_out_);
        const int old_succ_num = S(u_out_);
        const int old_last_succ = L(u_out_);
        v_out_ = P(u_out_);

        if (u_in_ == u_out_) {
            P(u_in_) = v_in_;
            pred_[static_cast<std::size_t>(u_in_)] = in_arc_;
            pred_dir_[static_cast<std::size_t>(u_in_)] = u_in_ == source(in_arc_) ? kUp : kDown;
            if (T(v_in_) != u_out_) {
                int after = T(old_last_succ);
                T(old_rev_thread) = after;
                R(after) = old_rev_thread;
                after = T(v_in_);
                T(v_in_) = u_out_;
                R(u_out_) = v_in_;
                T(old_last_succ) = after;
                R(after) = old_last_succ;
            }
        } else {
            const int thread_continue = old_rev_thread == v_in_ ? T(old_last_succ) : T(v_in_);

            int stem = u_in_;
            int par_stem = v_in_;
            int next_stem;
            int last = L(u_in_);
            int before, after = T(last);
            T(v_in_) = u_in_;
            dirty_revs_.clear();
            dirty_revs_.push_back(v_in_);
            while (stem != u_out_) {
                next_stem = P(stem);
                T(last) = next_stem;
                dirty_revs_.push_back(last);

                before = R(stem);
                T(before) = after;
                R(after) = before;

                P(stem) = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = L(stem) == L(par_stem) ? R(par_stem) : L(stem);
                after = T(last);
            }
            P(u_out_) = par_stem;
            T(last) = thread_continue;
            R(thread_continue) = last;
            L(u_out_) = last;

            if (old_rev_thread != v_in_) {
                T(old_rev_thread) = after;
                R(after) = old_rev_thread;
            }

            for (int u : dirty_revs_) R(T(u)) = u;

            int tmp_sc = 0;
            const int tmp_ls = L(u_out_);
            for (int u = u_out_, p = P(u); u != u_in_; u = p, p = P(u)) {
                pred_[static_cast<std::size_t>(u)] = pred_[static_cast<std::size_t>(p)];
                pred_dir_[static_cast<std::size_t>(u)] = -pred_dir_[static_cast<std::size_t>(p)];
                tmp_sc += S(u) - S(p);
                S(u) = tmp_sc;
                L(p) = tmp_ls;
            }
            pred_[static_cast<std::size_t>(u_in_)] = in_arc_;
            pred_dir_[static_cast<std::size_t>(u_in_)] = u_in_ == source(in_arc_) ? kUp : kDown;
            S(u_in_) = old_succ_num;
        }

        const int up_limit_out = L(join_) == v_in_ ? join_ : -1;
        const int last_succ_out = L(u_out_);
        for (int u = v_in_; u != -1 && L(u) == v_in_; u = P(u)) L(u) = last_succ_out;

        if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
            for (int u = v_out_; u != up_limit_out && L(u) == old_last_succ; u = P(u)) L(u) = old_rev_thread;
        } else if (last_succ_out != old_last_succ) {
            for (int u = v_out_; u != up_limit_out && L(u) == old_last_succ; u = P(u)) L(u) = last_succ_out;
        }

        for (int u = v_in_; u != join_; u = P(u)) S(u) += old_succ_num;
        for (int u = v_out_; u != join_; u = P(u)) S(u) -= old_succ_num;
    }

    void update_potential() {
        const auto ui = static_cast<std::size_t>(u_in_);
        const double sigma = pi_[static_cast<std::size_t>(v_in_)] - pi_[ui] - pred_dir_[ui] * arc_cost(in_arc_);
        const int end = thread_[static_cast<std::size_t>(last_succ_[ui])];
        for (int u = u_in_; u != end; u = thread_[static_cast<std::size_t>(u)]) pi_[static_cast<std::size_t>(u)] += sigma;
    }

    int n1_, n2_;
    const Eigen::MatrixXd& c_;
    int node_num_ = 0;
    std::int64_t arc_num_ = 0;
    int root_ = 0;
    std::vector<double> supply_;

    std::vector<int> parent_, thread_, rev_thread_, succ_num_, last_succ_, pred_dir_;
    std::vector<std::int64_t> pred_;
    std::vector<double> pi_, flow_;
    std::vector<signed char> state_;
    std::vector<int> art_source_, art_target_;
    std::vector<double> art_cost_;
    double art_cost_value_ = 0.0;
    double eps_ = 0.0;

    std::int64_t block_size_ = 10, next_arc_ = 0;
    std::int64_t in_arc_ = 0;
    int join_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0, v_out_ = 0;
    double delta_ = 0.0;
    std::vector<int> dirty_revs_;
};

inline double transport_cost(const std::vector<double>& a, const std::vector<double>& b, const Eigen::MatrixXd& cost,
                             std::size_t budget = kTransportBudget) {
    const std::size_t cells = a.size() * b.size();
    if (cells > budget) throw SizeBudgetExceeded(cells);
    NetworkSimplex ns(a, b, cost);
    return std::max(0.0, ns.solve().cost);
}

// ---------------------------------------------------------------------------
// Empirical measures on P(C^k)

class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;

    EmpiricalMeasure(std::vector<ProjectivePoint> atoms, std::vector<double> weights)
        : atoms_(std::move(atoms)), weights_(std::move(weights)) {
        if (atoms_.size() != weights_.size()) throw std::invalid_argument("EmpiricalMeasure: size mismatch");
        if (atoms_.empty()) throw std::invalid_argument("EmpiricalMeasure: no atoms");
        double total = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("EmpiricalMeasure: negative weight");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-10) throw std::invalid_argument("EmpiricalMeasure: weights must sum to 1");
        const int k = atoms_.front().dim();
        for (const auto& a : atoms_) {
            if (a.dim() != k) throw std::invalid_argument("EmpiricalMeasure: mixed dimensions");
        }
    }

    static EmpiricalMeasure uniform(std::vector<ProjectivePoint> atoms) {
        const std::size_t n = atoms.size();
        if (n == 0) throw std::invalid_argument("EmpiricalMeasure: no atoms");
        std::vector<double> w(n, 1.0 / static_cast<double>(n));
        return EmpiricalMeasure(std::move(atoms), std::move(w));
    }

    static EmpiricalMeasure dirac(const ProjectivePoint& x) { return EmpiricalMeasure({x}, {1.0}); }

    std::size_t size() const { return atoms_.size(); }
    int dim() const { return atoms_.empty() ? 0 : atoms_.front().dim(); }
    const std::vector<ProjectivePoint>& atoms() const { return atoms_; }
    const std::vector<double>& weights() const { return weights_; }

    // Total weight of atoms within distance `radius` of x.
    double mass_near(const ProjectivePoint& x, double radius) const {
        double m = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            if (fs_distance(atoms_[i], x) <= radius) m += weights_[i];
        }
        return m;
    }

private:
    std::vector<ProjectivePoint> atoms_;
    std::vector<double> weights_;
};

inline Eigen::MatrixXd fs_cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    Eigen::MatrixXd c(static_cast<Eigen::Index>(mu.size()), static_cast<Eigen::Index>(nu.size()));
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (std::size_t j = 0; j < nu.size(); ++j) {
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fs_distance(mu.atoms()[i], nu.atoms()[j]);
        }
    }
    return c;
}

// Exact W1 under the Fubini-Study metric. Throws SizeBudgetExceeded when
// n * m exceeds the budget.
inline double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                           std::size_t budget = kTransportBudget) {
    if (mu.dim() != nu.dim()) throw std::invalid_argument("wasserstein1: dimension mismatch");
    const std::size_t cells = mu.size() * nu.size();
    if (cells > budget) throw SizeBudgetExceeded(cells);
    const Eigen::MatrixXd c = fs_cost_matrix(mu, nu);
    return transport_cost(mu.weights(), nu.weights(), c, budget);
}

}  // namespace qtraj

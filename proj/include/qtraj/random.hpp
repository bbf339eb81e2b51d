// random.hpp
// Per-trajectory random streams and deterministic parallel loops.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

namespace qtraj {

// Independent stream for trajectory `index` of a run seeded with `seed`.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t index) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                          0x71a7u};
        eng_.seed(seq);
    }

    explicit Rng(std::uint64_t seed) : Rng(seed, 0) {}

    double uniform() { return uniform_(eng_); }
    double normal() { return normal_(eng_); }
    std::mt19937_64& engine() { return eng_; }

    // Haar-distributed unit vector in C^k.
    Eigen::VectorXcd haar_vector(int k) {
        Eigen::VectorXcd v(k);
        for (int i = 0; i < k; ++i) v(i) = std::complex<double>(normal(), normal());
        return v / v.norm();
    }

    // Haar-distributed k x k unitary (QR of a Ginibre matrix with phase fix).
    Eigen::MatrixXcd haar_unitary(int k) {
        Eigen::MatrixXcd z(k, k);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) z(i, j) = std::complex<double>(normal(), normal()) / std::sqrt(2.0);
        }
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
        Eigen::MatrixXcd q = qr.householderQ();
        const Eigen::MatrixXcd r = qr.matrixQR();
        for (int i = 0; i < k; ++i) {
            const double a = std::abs(r(i, i));
            if (a > 0.0) q.col(i) *= r(i, i) / a;
        }
        return q;
    }

    Eigen::MatrixXcd ginibre(int k) {
        Eigen::MatrixXcd z(k, k);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) z(i, j) = std::complex<double>(normal(), normal());
        }
        return z;
    }

private:
    std::mt19937_64 eng_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline unsigned default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1u : n;
}

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers
// write results into slot i so the outcome does not depend on `threads`.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Order-independent summary statistics.

inline double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

struct MeanStderr {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& x) {
    MeanStderr out;
    const std::size_t n = x.size();
    if (n == 0) return out;
    out.mean = pairwise_sum(x) / static_cast<double>(n);
    if (n < 2) return out;
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) dev[i] = (x[i] - out.mean) * (x[i] - out.mean);
    const double var = pairwise_sum(dev) / static_cast<double>(n - 1);
    out.se = std::sqrt(var / static_cast<double>(n));
    return out;
}

}  // namespace qtraj

#pragma once

// Exact O(N^2) t-SNE (van der Maaten & Hinton, 2008) for 2-D neighborhood layouts.
//
// Every reduction runs in a fixed order (each row accumulated sequentially, rows then
// combined by index), so results are bitwise identical for any thread count.

#include "lev/corpus.hpp"
#include "lev/errors.hpp"
#include "lev/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lev {

struct TsneConfig {
    double perplexity = 30.0;
    int n_iter = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    int momentum_switch_iter = 250;
    std::uint64_t seed = 42;
    double min_prob = 1e-12;
    double perplexity_tolerance = 1e-5; // relative; bandwidth search stops at |2^H - perplexity| <= tol * perplexity
};

/// Throws PreconditionError when the configuration is unusable for `n` points.
inline void validate(const TsneConfig& c, std::size_t n) {
    auto fail = [](const std::string& m) { throw PreconditionError("t-SNE: " + m); };
    if (!(c.perplexity > 1.0)) fail("perplexity must be > 1");
    if (c.n_iter < 250) fail("n_iter must be >= 250");
    if (!(c.learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (!(c.early_exaggeration >= 1.0)) fail("early_exaggeration must be >= 1");
    if (c.exaggeration_iters < 0 || c.exaggeration_iters > c.n_iter) fail("exaggeration_iters must lie in [0, n_iter]");
    if (c.momentum_switch_iter < 0) fail("momentum_switch_iter must be >= 0");
    if (!(c.min_prob > 0.0)) fail("min_prob must be > 0");
    if (!(c.perplexity_tolerance > 0.0)) fail("perplexity_tolerance must be > 0");
    if (n < 4) fail("need at least 4 points, got " + std::to_string(n));
    const double limit = (static_cast<double>(n) - 1.0) / 3.0;
    if (!(c.perplexity < limit))
        fail("perplexity " + std::to_string(c.perplexity) + " must be < (N-1)/3 = " + std::to_string(limit) +
             " for N = " + std::to_string(n));
}

using Point2 = std::array<double, 2>;

/// Symmetric joint affinities P (row-major n x n, zero diagonal, sums to 1).
struct Affinities {
    std::size_t n = 0;
    std::vector<double> P;
    std::vector<double> sigmas;           // Gaussian bandwidth of each conditional row
    std::vector<double> row_perplexities; // achieved 2^H(P_i) per row
    double min_prob = 1e-12;

    double at(std::size_t i, std::size_t j) const { return P[i * n + j]; }
};

struct TsneLayout {
    std::vector<Point2> Y;
    std::vector<double> kl_trace; // KL(P || Q) after each iteration
    TsneConfig config;
    std::uint64_t seed = 0;
};

inline constexpr int kBandwidthMaxSteps = 200;

namespace detail {

/// Entropy (nats) and weights of one conditional row for precision beta; distances shifted by their minimum.
inline double row_entropy(std::span<const double> shifted, double beta, std::span<double> w) {
    double z = 0.0, wd = 0.0;
    for (std::size_t j = 0; j < shifted.size(); ++j) {
        w[j] = std::exp(-beta * shifted[j]);
        z += w[j];
        wd += w[j] * shifted[j];
    }
    for (auto& x : w) x /= z;
    return std::log(z) + beta * wd / z;
}

/// Water-filling floor: entries below `floor` are raised to it and the others rescaled so the
/// total stays 1, repeated until no rescaled entry drops below the floor.
inline void floor_and_renormalize(std::vector<double>& P, std::size_t n, double floor) {
    std::vector<char> pinned(P.size(), 0);
    for (int pass = 0; pass < 64; ++pass) {
        double free_mass = 0.0;
        std::size_t pinned_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const std::size_t ij = i * n + j;
                if (!pinned[ij] && P[ij] < floor) pinned[ij] = 1;
                if (pinned[ij]) ++pinned_count;
                else row += P[ij];
            }
            free_mass += row;
        }
        const double target = 1.0 - static_cast<double>(pinned_count) * floor;
        const double scale = target / free_mass;
        bool dropped = false;
        for (std::size_t ij = 0; ij < P.size(); ++ij) {
            if (ij / n == ij % n) continue;
            if (pinned[ij]) {
                P[ij] = floor;
            } else {
                P[ij] *= scale;
                if (P[ij] < floor) dropped = true;
            }
        }
        if (!dropped) return;
    }
}


inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// N(0, sd^2) pair for one row, keyed by (seed, key) so a point's start does not depend on its position.
inline Point2 seeded_start(std::uint64_t seed, std::string_view key, double sd) {
    std::mt19937_64 rng(splitmix64(seed) ^ fnv1a64(key));
    constexpr double kScale = 1.0 / 9007199254740992.0; // 2^-53
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * kScale; // (0, 1]
    const double u2 = static_cast<double>(rng() >> 11) * kScale;         // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    return {sd * r * std::cos(t), sd * r * std::sin(t)};
}

/// Student-t kernel of a layout: num_ij = 1 / (1 + |y_i - y_j|^2), diagonal 0.
struct StudentKernel {
    std::vector<double> num;
    double z = 0.0;
};

inline StudentKernel student_kernel(std::span<const Point2> Y, unsigned threads) {
    const std::size_t n = Y.size();
    StudentKernel k;
    k.num.assign(n * n, 0.0);
    std::vector<double> row_sum(n, 0.0);
    parallel_for(n, threads, [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = Y[i][0] - Y[j][0], dy = Y[i][1] - Y[j][1];
            const double v = 1.0 / (1.0 + dx * dx + dy * dy);
            k.num[i * n + j] = v;
            s += v;
        }
        row_sum[i] = s;
    });
    for (double s : row_sum) k.z += s;
    return k;
}

inline double kl_from_kernel(const Affinities& P, const StudentKernel& k, unsigned threads) {
    const std::size_t n = P.n;
    std::vector<double> row(n, 0.0);
    parallel_for(n, threads, [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double p = P.P[i * n + j];
            if (p <= 0.0) continue;
            const double q = std::max(k.num[i * n + j] / k.z, P.min_prob);
            s += p * std::log(p / q);
        }
        row[i] = s;
    });
    double total = 0.0;
    for (double s : row) total += s;
    return total;
}

inline std::vector<Point2> gradient_from_kernel(const Affinities& P, std::span<const Point2> Y, const StudentKernel& k,
                                                double exaggeration, unsigned threads) {
    const std::size_t n = P.n;
    std::vector<Point2> g(n, Point2{0.0, 0.0});
    parallel_for(n, threads, [&](std::size_t i) {
        double gx = 0.0, gy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double num = k.num[i * n + j];
            const double mult = (exaggeration * P.P[i * n + j] - num / k.z) * num;
            gx += mult * (Y[i][0] - Y[j][0]);
            gy += mult * (Y[i][1] - Y[j][1]);
        }
        g[i] = {4.0 * gx, 4.0 * gy};
    });
    return g;
}

inline void require_shape(const Affinities& P, std::size_t rows) {
    if (P.P.size() != P.n * P.n || rows != P.n)
        throw DimMismatchError("t-SNE: affinity matrix is " + std::to_string(P.n) + " points, layout has " +
                               std::to_string(rows));
}

} // namespace detail

/// Gaussian conditional affinities calibrated to `perplexity`, symmetrized and floored.
/// `X` is row-major n x dim; distances are squared Euclidean.
inline Affinities conditional_affinities(std::span<const double> X, std::size_t n, std::size_t dim, double perplexity,
                                         double tolerance = 1e-5, double min_prob = 1e-12, unsigned threads = 1) {
    if (X.size() != n * dim) throw DimMismatchError("t-SNE: input is not n x dim");
    if (n < 4) throw PreconditionError("t-SNE: need at least 4 points, got " + std::to_string(n));
    if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(n - 1)))
        throw PreconditionError("t-SNE: perplexity must lie in (1, N-1) for N = " + std::to_string(n));

    const double target = std::log(perplexity);
    std::vector<double> cond(n * n, 0.0);
    Affinities a;
    a.n = n;
    a.min_prob = min_prob;
    a.sigmas.assign(n, 0.0);
    a.row_perplexities.assign(n, 0.0);

    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<double> d;
        d.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = X[i * dim + c] - X[j * dim + c];
                s += diff * diff;
            }
            d.push_back(s);
        }
        const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
        const double dmin = *lo_it;
        if (*hi_it == dmin)
            throw DegenerateError("t-SNE: row " + std::to_string(i) + " is equidistant from every other point");
        for (auto& x : d) x -= dmin;

        std::vector<double> w(d.size());
        double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
        bool found = false;
        double h = 0.0;
        for (int step = 0; step < kBandwidthMaxSteps; ++step) {
            h = detail::row_entropy(d, beta, w);
            if (std::abs(std::exp(h) - perplexity) <= tolerance * perplexity) {
                found = true;
                break;
            }
            if (h > target) { // too flat: sharpen
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
            } else {
                beta_hi = beta;
                beta = 0.5 * (beta + beta_lo);
            }
        }
        if (!found)
            throw ConvergenceError("t-SNE: bandwidth search for row " + std::to_string(i) + " did not converge in " +
                                   std::to_string(kBandwidthMaxSteps) + " steps");
        a.sigmas[i] = std::sqrt(1.0 / (2.0 * beta));
        a.row_perplexities[i] = std::exp(h);
        for (std::size_t j = 0, k = 0; j < n; ++j)
            if (j != i) cond[i * n + j] = w[k++];
    });

    a.P.assign(n * n, 0.0);
    const double denom = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a.P[i * n + j] = a.P[j * n + i] = (cond[i * n + j] + cond[j * n + i]) / denom;
    detail::floor_and_renormalize(a.P, n, min_prob);
    return a;
}

inline Affinities conditional_affinities(const EmbeddingMatrix& m, double perplexity, double tolerance = 1e-5,
                                         double min_prob = 1e-12, unsigned threads = 1) {
    return conditional_affinities(m.values, m.rows(), m.dim, perplexity, tolerance, min_prob, threads);
}

/// KL(P || Q), Q the normalized Student-t similarities of Y floored at P.min_prob.
inline double kl_divergence(const Affinities& P, std::span<const Point2> Y, unsigned threads = 1) {
    detail::require_shape(P, Y.size());
    return detail::kl_from_kernel(P, detail::student_kernel(Y, threads), threads);
}

/// Analytic gradient of KL(exaggeration * P || Q) with respect to Y.
inline std::vector<Point2> kl_gradient(const Affinities& P, std::span<const Point2> Y, double exaggeration = 1.0,
                                       unsigned threads = 1) {
    detail::require_shape(P, Y.size());
    return detail::gradient_from_kernel(P, Y, detail::student_kernel(Y, threads), exaggeration, threads);
}

/// Gradient descent with early exaggeration, momentum and adaptive gains. `row_keys` seed each
/// point's start position (pass image ids); empty means the row index is used as key.
inline TsneLayout run_tsne(const Affinities& P, const TsneConfig& cfg, std::span<const std::string> row_keys = {},
                           unsigned threads = 1) {
    const std::size_t n = P.n;
    validate(cfg, n);
    detail::require_shape(P, n);
    if (!row_keys.empty() && row_keys.size() != n) throw DimMismatchError("t-SNE: row_keys must have one key per point");

    TsneLayout out;
    out.config = cfg;
    out.seed = cfg.seed;
    out.Y.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.Y[i] = detail::seeded_start(cfg.seed, row_keys.empty() ? std::to_string(i) : row_keys[i], 1e-4);
    out.kl_trace.reserve(static_cast<std::size_t>(cfg.n_iter));

    auto& Y = out.Y;
    std::vector<Point2> velocity(n, Point2{0.0, 0.0});
    std::vector<Point2> gains(n, Point2{1.0, 1.0});

    auto recenter = [&] {
        double mx = 0.0, my = 0.0;
        for (const auto& p : Y) {
            mx += p[0];
            my += p[1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (auto& p : Y) {
            p[0] -= mx;
            p[1] -= my;
        }
    };
    recenter();

    for (int iter = 0; iter < cfg.n_iter; ++iter) {
        const double exaggeration = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch_iter ? cfg.momentum_initial : cfg.momentum_final;

        const auto kernel = detail::student_kernel(Y, threads);
        if (iter > 0) out.kl_trace.push_back(detail::kl_from_kernel(P, kernel, threads));
        const auto grad = detail::gradient_from_kernel(P, Y, kernel, exaggeration, threads);

        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 2; ++c) {
                double& g = gains[i][c];
                const bool same_sign = detail::sign_of(grad[i][c]) == detail::sign_of(velocity[i][c]);
                g = same_sign ? g * 0.8 : g + 0.2;
                if (g < 0.01) g = 0.01;
                velocity[i][c] = momentum * velocity[i][c] - cfg.learning_rate * g * grad[i][c];
                Y[i][c] += velocity[i][c];
            }
        recenter();

        for (std::size_t i = 0; i < n; ++i)
            if (!std::isfinite(Y[i][0]) || !std::isfinite(Y[i][1]))
                throw NumericError("t-SNE: non-finite coordinate at iteration " + std::to_string(iter));
    }
    out.kl_trace.push_back(kl_divergence(P, Y, threads));
    return out;
}

/// Affinities + optimization for one model's embeddings, keyed by image id.
inline TsneLayout tsne_embed(const EmbeddingMatrix& m, const TsneConfig& cfg, unsigned threads = 1) {
    validate(cfg, m.rows());
    const Affinities P = conditional_affinities(m, cfg.perplexity, cfg.perplexity_tolerance, cfg.min_prob, threads);
    return run_tsne(P, cfg, m.image_ids, threads);
}

} // namespace lev

#pragma once

// Per-model, per-axis descriptive statistics and the multi-axis battery summary.

#include "lev/axis.hpp"
#include "lev/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lev {

// ---------------------------------------------------------------------------
// Correlation primitives

/// 1-based ranks; tied values share the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline bool is_constant(std::span<const double> x) {
    return std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end();
}

/// Pearson correlation. NaN when either vector is constant (undefined).
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimMismatchError("pearson: vectors differ in length");
    const std::size_t n = a.size();
    if (n == 0 || is_constant(a) || is_constant(b)) return std::numeric_limits<double>::quiet_NaN();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    // sqrt of the product (not product of sqrts) keeps r(x, x) == 1 exactly.
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    return pearson(ra, rb);
}

inline double mean_of(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

/// Population (divide-by-N) standard deviation, two-pass.
inline double population_sigma(std::span<const double> x) {
    if (is_constant(x)) return 0.0;
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// Axis summary

struct RankedImage {
    std::string image_relpth;
    double score = 0.0;
    bool operator==(const RankedImage&) const = default;
};

struct AxisSummary {
    std::string model_id;
    std::string axis_name;
    std::size_t n_total = 0;
    double pct_right = 0.0;
    double pct_left = 0.0;
    double pct_zero = 0.0;
    double sigma = 0.0;
    double mean = 0.0;
    std::vector<RankedImage> top_right; // score descending
    std::vector<RankedImage> top_left;  // score ascending

    bool operator==(const AxisSummary&) const = default;
};

/// Percentage of rows strictly above / below zero.
inline double percent(std::size_t count, std::size_t total) {
    return 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

inline AxisSummary summarize(const ScoreTable& table, std::size_t k) {
    const std::size_t n = table.size();
    if (n == 0) throw EmptyTableError("cannot summarize empty table (" + table.model_id + ", " + table.axis_name + ")");
    if (k < 1 || k > n)
        throw PreconditionError("k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");

    AxisSummary s;
    s.model_id = table.model_id;
    s.axis_name = table.axis_name;
    s.n_total = n;

    std::size_t right = 0, left = 0, zero = 0;
    for (const auto& r : table.rows) {
        if (r.score_axis > 0.0) ++right;
        else if (r.score_axis < 0.0) ++left;
        else ++zero;
    }
    s.pct_right = percent(right, n);
    s.pct_left = percent(left, n);
    s.pct_zero = percent(zero, n);

    const auto scores = table.scores();
    s.mean = mean_of(scores);
    s.sigma = population_sigma(scores);

    std::vector<const AxisScore*> rows;
    for (const auto& r : table.rows) rows.push_back(&r);
    auto by_desc = [](const AxisScore* a, const AxisScore* b) {
        if (a->score_axis != b->score_axis) return a->score_axis > b->score_axis;
        return a->image_relpth < b->image_relpth;
    };
    auto by_asc = [](const AxisScore* a, const AxisScore* b) {
        if (a->score_axis != b->score_axis) return a->score_axis < b->score_axis;
        return a->image_relpth < b->image_relpth;
    };
    std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end(), by_desc);
    for (std::size_t i = 0; i < k; ++i) s.top_right.push_back({rows[i]->image_relpth, rows[i]->score_axis});
    std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end(), by_asc);
    for (std::size_t i = 0; i < k; ++i) s.top_left.push_back({rows[i]->image_relpth, rows[i]->score_axis});
    return s;
}

// ---------------------------------------------------------------------------
// Battery

struct BatterySummary {
    std::vector<std::string> models;
    std::vector<std::string> axes;
    std::vector<std::vector<AxisSummary>> cells; // [model][axis]
    std::vector<double> mean_sigma;              // per model
    std::vector<std::string> stability_order;    // ascending mean_sigma
    /// Per model, axes x axes Spearman correlations between score vectors.
    std::vector<std::vector<std::vector<double>>> axis_correlations;

    const AxisSummary& cell(std::size_t model, std::size_t axis) const { return cells[model][axis]; }
};

namespace detail {

inline void require_same_images(const ScoreTable& ref, const ScoreTable& t) {
    bool same = ref.size() == t.size();
    for (std::size_t i = 0; same && i < ref.size(); ++i) same = ref.rows[i].image_relpth == t.rows[i].image_relpth;
    if (!same)
        throw AlignmentError("tables (" + ref.model_id + ", " + ref.axis_name + ") and (" + t.model_id + ", " +
                             t.axis_name + ") cover different images");
}

} // namespace detail

/// Summarizes a complete models x axes grid. `tables` may come in any order; each
/// (model, axis) cell must appear exactly once.
inline BatterySummary battery(const std::vector<std::string>& models, const std::vector<std::string>& axes,
                              const std::vector<ScoreTable>& tables, std::size_t k) {
    if (models.empty() || axes.empty()) throw PreconditionError("battery needs at least one model and one axis");

    std::map<std::pair<std::string, std::string>, const ScoreTable*> index;
    for (const auto& t : tables) {
        if (!index.emplace(std::pair{t.model_id, t.axis_name}, &t).second)
            throw ValidationError("duplicate battery cell (" + t.model_id + ", " + t.axis_name + ")");
    }

    std::vector<std::vector<const ScoreTable*>> grid(models.size(), std::vector<const ScoreTable*>(axes.size()));
    std::string missing;
    for (std::size_t m = 0; m < models.size(); ++m)
        for (std::size_t a = 0; a < axes.size(); ++a) {
            auto it = index.find({models[m], axes[a]});
            if (it == index.end()) missing += "\n  - (" + models[m] + ", " + axes[a] + ")";
            else grid[m][a] = it->second;
        }
    if (!missing.empty()) throw IncompleteGridError("incomplete battery grid, missing cells:" + missing);

    const ScoreTable& ref = *grid[0][0];
    for (const auto& row : grid)
        for (const auto* t : row) detail::require_same_images(ref, *t);

    BatterySummary b;
    b.models = models;
    b.axes = axes;
    b.cells.resize(models.size());
    b.axis_correlations.resize(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
        double sigma_sum = 0.0;
        std::vector<std::vector<double>> scores;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            b.cells[m].push_back(summarize(*grid[m][a], k));
            sigma_sum += b.cells[m].back().sigma;
            scores.push_back(grid[m][a]->scores());
        }
        b.mean_sigma.push_back(sigma_sum / static_cast<double>(axes.size()));

        auto& corr = b.axis_correlations[m];
        corr.assign(axes.size(), std::vector<double>(axes.size(), 1.0));
        for (std::size_t i = 0; i < axes.size(); ++i)
            for (std::size_t j = i + 1; j < axes.size(); ++j) corr[i][j] = corr[j][i] = spearman(scores[i], scores[j]);
    }

    std::vector<std::size_t> order(models.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (b.mean_sigma[x] != b.mean_sigma[y]) return b.mean_sigma[x] < b.mean_sigma[y];
        return models[x] < models[y];
    });
    for (auto i : order) b.stability_order.push_back(models[i]);
    return b;
}

} // namespace lev

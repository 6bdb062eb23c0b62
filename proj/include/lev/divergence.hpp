#pragma once

// Inter-model comparison on aligned score tables of one axis.

#include "lev/axis.hpp"
#include "lev/errors.hpp"
#include "lev/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lev {

/// raw: |s_a - s_b|. zscore: |z_a - z_b| with z the per-model standard score.
enum class ContrastMode { raw, zscore };

inline std::string_view to_string(ContrastMode m) { return m == ContrastMode::raw ? "raw" : "zscore"; }

inline ContrastMode parse_contrast_mode(std::string_view s) {
    if (s == "raw") return ContrastMode::raw;
    if (s == "zscore") return ContrastMode::zscore;
    throw ParseError("unknown contrast mode '" + std::string(s) + "' (expected raw|zscore)");
}

struct ContrastedImage {
    std::string image_relpth;
    double score_a = 0.0;
    double score_b = 0.0;
    double contrast = 0.0;
    bool operator==(const ContrastedImage&) const = default;
};

struct PairDiagnostics {
    std::string model_a;
    std::string model_b;
    double pct_right_a = 0.0;
    double pct_right_b = 0.0;
    double gap_pp = 0.0;
    double pearson = 0.0;
    double spearman = 0.0;
    double sign_disagreement_pct = 0.0;
    ContrastMode contrast_mode = ContrastMode::zscore;
    std::vector<ContrastedImage> contrasted;
};

struct DivergenceReport {
    std::string axis_name;
    std::vector<PairDiagnostics> model_pairs;
    double max_gap_pp = 0.0;
    std::pair<std::string, std::string> max_gap_pair;
};

namespace detail {

inline std::size_t count_positive(std::span<const double> x) {
    return static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [](double v) { return v > 0.0; }));
}

inline std::vector<double> standard_scores(std::span<const double> x, const std::string& label) {
    const double m = mean_of(x);
    const double sd = population_sigma(x);
    if (!(sd > 0.0)) throw ZeroVarianceError("zscore contrast undefined: " + label + " has zero variance");
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - m) / sd;
    return z;
}

} // namespace detail

inline PairDiagnostics pair_diagnostics(const ScoreTable& a, const ScoreTable& b, std::size_t k,
                                        ContrastMode mode = ContrastMode::zscore) {
    if (a.axis_name != b.axis_name)
        throw AlignmentError("cannot compare axis " + a.axis_name + " with axis " + b.axis_name);
    detail::require_same_images(a, b);
    const std::size_t n = a.size();
    if (n == 0) throw EmptyTableError("cannot compare empty tables on axis " + a.axis_name);
    if (k < 1 || k > n) throw PreconditionError("k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");

    const auto sa = a.scores();
    const auto sb = b.scores();

    PairDiagnostics d;
    d.model_a = a.model_id;
    d.model_b = b.model_id;
    d.contrast_mode = mode;
    d.pct_right_a = percent(detail::count_positive(sa), n);
    d.pct_right_b = percent(detail::count_positive(sb), n);
    d.gap_pp = std::abs(d.pct_right_a - d.pct_right_b);
    d.pearson = pearson(sa, sb);
    d.spearman = spearman(sa, sb);

    std::size_t opposite = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (detail::sign_of(sa[i]) * detail::sign_of(sb[i]) < 0) ++opposite;
    d.sign_disagreement_pct = percent(opposite, n);

    std::vector<double> ca = sa, cb = sb;
    if (mode == ContrastMode::zscore) {
        ca = detail::standard_scores(sa, a.model_id + " on " + a.axis_name);
        cb = detail::standard_scores(sb, b.model_id + " on " + b.axis_name);
    }
    std::vector<ContrastedImage> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = {a.rows[i].image_relpth, sa[i], sb[i], std::abs(ca[i] - cb[i])};
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                      [](const ContrastedImage& x, const ContrastedImage& y) {
                          if (x.contrast != y.contrast) return x.contrast > y.contrast;
                          return x.image_relpth < y.image_relpth;
                      });
    all.resize(k);
    d.contrasted = std::move(all);
    return d;
}

/// All pairwise diagnostics (input order, i < j) and the widest percentage-point gap.
inline DivergenceReport axis_divergence(const std::vector<ScoreTable>& tables, std::size_t k,
                                        ContrastMode mode = ContrastMode::zscore) {
    if (tables.size() < 2) throw PreconditionError("axis_divergence needs at least two tables");
    DivergenceReport r;
    r.axis_name = tables.front().axis_name;
    bool first = true;
    for (std::size_t i = 0; i < tables.size(); ++i)
        for (std::size_t j = i + 1; j < tables.size(); ++j) {
            r.model_pairs.push_back(pair_diagnostics(tables[i], tables[j], k, mode));
            const auto& p = r.model_pairs.back();
            if (first || p.gap_pp > r.max_gap_pp) {
                r.max_gap_pp = p.gap_pp;
                r.max_gap_pair = {p.model_a, p.model_b};
                first = false;
            }
        }
    return r;
}

struct AxisDivergenceRank {
    std::string axis_name;
    double max_gap_pp = 0.0;
    std::pair<std::string, std::string> max_gap_pair;
};

/// Axes ordered by widest inter-model gap, descending; ties by axis name.
inline std::vector<AxisDivergenceRank> rank_axes_by_divergence(const std::vector<DivergenceReport>& reports) {
    std::vector<AxisDivergenceRank> out;
    for (const auto& r : reports) out.push_back({r.axis_name, r.max_gap_pp, r.max_gap_pair});
    std::stable_sort(out.begin(), out.end(), [](const AxisDivergenceRank& x, const AxisDivergenceRank& y) {
        if (x.max_gap_pp != y.max_gap_pp) return x.max_gap_pp > y.max_gap_pp;
        return x.axis_name < y.axis_name;
    });
    return out;
}

} // namespace lev

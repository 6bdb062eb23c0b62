#pragma once

// File outputs: score CSVs, JSON reports, layout tables and SVG scatter plots.
// Every writer is a pure function of its inputs: no timestamps, no randomness.

#include "lev/axis.hpp"
#include "lev/corpus.hpp"
#include "lev/divergence.hpp"
#include "lev/errors.hpp"
#include "lev/stats.hpp"
#include "lev/tsne.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace lev {

inline constexpr std::string_view kToolName = "lev";
inline constexpr std::string_view kToolVersion = "0.1.0";

inline constexpr std::string_view kScoreCsvHeader =
    "image_index,image_relpth,score_axis,cos_left,cos_right,certainty_mode,certainty";

/// Shortest decimal string that parses back to exactly `x`, laid out like Python's repr():
/// fixed notation for decimal exponents in [-4, 16), otherwise d.ddde+XX.
inline std::string format_shortest(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";

    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::scientific);
    std::string_view sci(buf, static_cast<std::size_t>(res.ptr - buf));

    std::string out;
    if (sci.front() == '-') {
        out += '-';
        sci.remove_prefix(1);
    }
    const auto epos = sci.find('e');
    std::string digits;
    for (char c : sci.substr(0, epos))
        if (c != '.') digits += c;
    int exp10 = 0;
    {
        auto e = sci.substr(epos + 1);
        if (e.front() == '+') e.remove_prefix(1);
        std::from_chars(e.data(), e.data() + e.size(), exp10);
    }

    if (exp10 >= -4 && exp10 < 16) {
        if (exp10 >= 0) {
            const auto int_len = static_cast<std::size_t>(exp10) + 1;
            if (digits.size() <= int_len) {
                out += digits + std::string(int_len - digits.size(), '0') + ".0";
            } else {
                out += digits.substr(0, int_len) + "." + digits.substr(int_len);
            }
        } else {
            out += "0." + std::string(static_cast<std::size_t>(-exp10 - 1), '0') + digits;
        }
        return out;
    }
    out += digits.substr(0, 1);
    if (digits.size() > 1) out += "." + digits.substr(1);
    char ebuf[16];
    std::snprintf(ebuf, sizeof ebuf, "e%c%02d", exp10 < 0 ? '-' : '+', std::abs(exp10));
    return out + ebuf;
}

namespace detail {

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline void write_text(const fs::path& path, const std::string& text) {
    write_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

inline double round1(double x) { return std::round(x * 10.0) / 10.0; }

/// NaN-safe numeric JSON value (NaN becomes null).
inline nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

inline double num_from(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Score CSV

inline std::string score_csv(const ScoreTable& table) {
    std::string out(kScoreCsvHeader);
    out += '\n';
    for (const auto& r : table.rows) {
        out += std::to_string(r.image_index);
        out += ',';
        out += detail::csv_field(r.image_relpth);
        out += ',';
        out += format_shortest(r.score_axis);
        out += ',';
        out += format_shortest(r.cos_left);
        out += ',';
        out += format_shortest(r.cos_right);
        out += ',';
        out += to_string(r.certainty_mode);
        out += ',';
        out += format_shortest(r.certainty);
        out += '\n';
    }
    return out;
}

inline void write_score_csv(const ScoreTable& table, const fs::path& path) { detail::write_text(path, score_csv(table)); }

// ---------------------------------------------------------------------------
// JSON documents

inline nlohmann::json to_json(const AxisSummary& s) {
    auto ranked = [](const std::vector<RankedImage>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : v) arr.push_back({{"image_relpth", r.image_relpth}, {"score", r.score}});
        return arr;
    };
    return {{"model_id", s.model_id},
            {"axis_name", s.axis_name},
            {"n_total", s.n_total},
            {"pct_right", s.pct_right},
            {"pct_left", s.pct_left},
            {"pct_zero", s.pct_zero},
            {"sigma", s.sigma},
            {"mean", s.mean},
            {"display", {{"pct_right", detail::round1(s.pct_right)},
                         {"pct_left", detail::round1(s.pct_left)},
                         {"pct_zero", detail::round1(s.pct_zero)}}},
            {"top_right", ranked(s.top_right)},
            {"top_left", ranked(s.top_left)}};
}

inline AxisSummary summary_from_json(const nlohmann::json& j) {
    auto ranked = [](const nlohmann::json& arr) {
        std::vector<RankedImage> v;
        for (const auto& r : arr) v.push_back({r.at("image_relpth").get<std::string>(), r.at("score").get<double>()});
        return v;
    };
    AxisSummary s;
    s.model_id = j.at("model_id").get<std::string>();
    s.axis_name = j.at("axis_name").get<std::string>();
    s.n_total = j.at("n_total").get<std::size_t>();
    s.pct_right = j.at("pct_right").get<double>();
    s.pct_left = j.at("pct_left").get<double>();
    s.pct_zero = j.at("pct_zero").get<double>();
    s.sigma = j.at("sigma").get<double>();
    s.mean = j.at("mean").get<double>();
    s.top_right = ranked(j.at("top_right"));
    s.top_left = ranked(j.at("top_left"));
    return s;
}

inline nlohmann::json to_json(const BatterySummary& b) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& row : b.cells)
        for (const auto& c : row) cells.push_back(to_json(c));
    nlohmann::json mean_sigma = nlohmann::json::object();
    nlohmann::json corr = nlohmann::json::object();
    for (std::size_t m = 0; m < b.models.size(); ++m) {
        mean_sigma[b.models[m]] = b.mean_sigma[m];
        nlohmann::json mat = nlohmann::json::array();
        for (const auto& r : b.axis_correlations[m]) {
            nlohmann::json row = nlohmann::json::array();
            for (double v : r) row.push_back(detail::num(v));
            mat.push_back(row);
        }
        corr[b.models[m]] = mat;
    }
    return {{"models", b.models},
            {"axes", b.axes},
            {"cells", cells},
            {"mean_sigma", mean_sigma},
            {"stability_order", b.stability_order},
            {"axis_correlations", corr}};
}

inline BatterySummary battery_from_json(const nlohmann::json& j) {
    BatterySummary b;
    b.models = j.at("models").get<std::vector<std::string>>();
    b.axes = j.at("axes").get<std::vector<std::string>>();
    const auto& cells = j.at("cells");
    b.cells.resize(b.models.size());
    for (std::size_t m = 0; m < b.models.size(); ++m) {
        for (std::size_t a = 0; a < b.axes.size(); ++a) b.cells[m].push_back(summary_from_json(cells.at(m * b.axes.size() + a)));
        b.mean_sigma.push_back(j.at("mean_sigma").at(b.models[m]).get<double>());
        std::vector<std::vector<double>> mat;
        for (const auto& row : j.at("axis_correlations").at(b.models[m])) {
            std::vector<double> r;
            for (const auto& v : row) r.push_back(detail::num_from(v));
            mat.push_back(std::move(r));
        }
        b.axis_correlations.push_back(std::move(mat));
    }
    b.stability_order = j.at("stability_order").get<std::vector<std::string>>();
    return b;
}

inline nlohmann::json to_json(const PairDiagnostics& p) {
    nlohmann::json contrasted = nlohmann::json::array();
    for (const auto& c : p.contrasted)
        contrasted.push_back(
            {{"image_relpth", c.image_relpth}, {"score_a", c.score_a}, {"score_b", c.score_b}, {"contrast", c.contrast}});
    return {{"model_a", p.model_a},
            {"model_b", p.model_b},
            {"pct_right_a", p.pct_right_a},
            {"pct_right_b", p.pct_right_b},
            {"gap_pp", p.gap_pp},
            {"pearson", detail::num(p.pearson)},
            {"spearman", detail::num(p.spearman)},
            {"sign_disagreement_pct", p.sign_disagreement_pct},
            {"contrast_mode", to_string(p.contrast_mode)},
            {"display", {{"gap_pp", detail::round1(p.gap_pp)}, {"sign_disagreement_pct", detail::round1(p.sign_disagreement_pct)}}},
            {"contrasted", contrasted}};
}

inline PairDiagnostics pair_from_json(const nlohmann::json& j) {
    PairDiagnostics p;
    p.model_a = j.at("model_a").get<std::string>();
    p.model_b = j.at("model_b").get<std::string>();
    p.pct_right_a = j.at("pct_right_a").get<double>();
    p.pct_right_b = j.at("pct_right_b").get<double>();
    p.gap_pp = j.at("gap_pp").get<double>();
    p.pearson = detail::num_from(j.at("pearson"));
    p.spearman = detail::num_from(j.at("spearman"));
    p.sign_disagreement_pct = j.at("sign_disagreement_pct").get<double>();
    p.contrast_mode = parse_contrast_mode(j.at("contrast_mode").get<std::string>());
    for (const auto& c : j.at("contrasted"))
        p.contrasted.push_back({c.at("image_relpth").get<std::string>(), c.at("score_a").get<double>(),
                                c.at("score_b").get<double>(), c.at("contrast").get<double>()});
    return p;
}

inline nlohmann::json to_json(const DivergenceReport& r) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : r.model_pairs) pairs.push_back(to_json(p));
    return {{"axis_name", r.axis_name},
            {"max_gap_pp", r.max_gap_pp},
            {"max_gap_pair", {r.max_gap_pair.first, r.max_gap_pair.second}},
            {"display", {{"max_gap_pp", detail::round1(r.max_gap_pp)}}},
            {"model_pairs", pairs}};
}

inline DivergenceReport divergence_from_json(const nlohmann::json& j) {
    DivergenceReport r;
    r.axis_name = j.at("axis_name").get<std::string>();
    r.max_gap_pp = j.at("max_gap_pp").get<double>();
    r.max_gap_pair = {j.at("max_gap_pair").at(0).get<std::string>(), j.at("max_gap_pair").at(1).get<std::string>()};
    for (const auto& p : j.at("model_pairs")) r.model_pairs.push_back(pair_from_json(p));
    return r;
}

/// Provenance block shared by every JSON document.
inline nlohmann::json tool_block() { return {{"name", kToolName}, {"version", kToolVersion}}; }

inline nlohmann::json report_metadata() {
    return {{"sigma", "population standard deviation of raw score_axis values (no rescaling)"},
            {"percentages", "share of images with score_axis > 0 (right), < 0 (left), == 0 (zero)"},
            {"display_rounding", "display fields are rounded to 1 decimal; all other fields are full precision"}};
}

struct ReportBundle {
    nlohmann::json tool;
    nlohmann::json config;
    BatterySummary battery;
    std::vector<DivergenceReport> divergences;
    std::vector<AxisDivergenceRank> ranked_axes;
};

inline nlohmann::json reports_document(const BatterySummary& battery, const std::vector<DivergenceReport>& divergences,
                                       const nlohmann::json& config = nlohmann::json::object()) {
    nlohmann::json divs = nlohmann::json::array();
    for (const auto& d : divergences) divs.push_back(to_json(d));
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& r : rank_axes_by_divergence(divergences))
        ranked.push_back({{"axis_name", r.axis_name},
                          {"max_gap_pp", r.max_gap_pp},
                          {"max_gap_pair", {r.max_gap_pair.first, r.max_gap_pair.second}}});
    return {{"tool", tool_block()},
            {"config", config},
            {"metadata", report_metadata()},
            {"battery", to_json(battery)},
            {"divergences", divs},
            {"ranked_axes", ranked}};
}

inline void write_reports_json(const BatterySummary& battery, const std::vector<DivergenceReport>& divergences,
                               const fs::path& path, const nlohmann::json& config = nlohmann::json::object()) {
    detail::write_text(path, reports_document(battery, divergences, config).dump(2) + "\n");
}

inline ReportBundle read_reports_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        ReportBundle b;
        b.tool = j.at("tool");
        b.config = j.at("config");
        b.battery = battery_from_json(j.at("battery"));
        for (const auto& d : j.at("divergences")) b.divergences.push_back(divergence_from_json(d));
        for (const auto& r : j.at("ranked_axes"))
            b.ranked_axes.push_back({r.at("axis_name").get<std::string>(), r.at("max_gap_pp").get<double>(),
                                     {r.at("max_gap_pair").at(0).get<std::string>(), r.at("max_gap_pair").at(1).get<std::string>()}});
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline void write_json(const nlohmann::json& j, const fs::path& path) { detail::write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Layouts

inline void write_layout_csv(const TsneLayout& layout, const std::vector<std::string>& image_ids, const fs::path& path) {
    if (image_ids.size() != layout.Y.size()) throw DimMismatchError("layout and image id list differ in length");
    std::string out = "image_index,image_relpth,y0,y1\n";
    for (std::size_t i = 0; i < layout.Y.size(); ++i)
        out += std::to_string(i) + "," + detail::csv_field(image_ids[i]) + "," + format_shortest(layout.Y[i][0]) + "," +
               format_shortest(layout.Y[i][1]) + "\n";
    detail::write_text(path, out);
}

inline void write_kl_trace(const TsneLayout& layout, const fs::path& path) {
    std::string out = "iteration,kl\n";
    for (std::size_t i = 0; i < layout.kl_trace.size(); ++i)
        out += std::to_string(i) + "," + format_shortest(layout.kl_trace[i]) + "\n";
    detail::write_text(path, out);
}

// ---------------------------------------------------------------------------
// SVG scatter plot

enum class LabelMode { none, top_k, all };

struct RenderSpec {
    const TsneLayout* layout = nullptr;
    std::vector<std::string> image_ids;            // labels; may be empty when labels == none
    std::optional<ScoreTable> coloring;            // diverging colors centered at score 0
    LabelMode labels = LabelMode::none;
    std::size_t label_k = 10;                      // for top_k: the k largest |score|
    double width = 800.0;
    double height = 800.0;
    double point_radius = 4.0;
    std::string title;
};

struct Rgb {
    int r, g, b;
};

inline constexpr Rgb kNeutral{247, 247, 247};
inline constexpr Rgb kLeftPole{33, 102, 172};
inline constexpr Rgb kRightPole{178, 24, 43};

/// Diverging ramp: t in [-1, 1]; 0 maps to the neutral midpoint.
inline Rgb diverging_color(double t) {
    t = std::clamp(t, -1.0, 1.0);
    const Rgb end = t < 0 ? kLeftPole : kRightPole;
    const double a = std::abs(t);
    auto mix = [a](int from, int to) { return static_cast<int>(std::lround(from + (to - from) * a)); };
    return {mix(kNeutral.r, end.r), mix(kNeutral.g, end.g), mix(kNeutral.b, end.b)};
}

inline std::string hex(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace detail

inline std::string render_svg_string(const RenderSpec& spec) {
    if (!spec.layout) throw PreconditionError("render: no layout");
    const auto& Y = spec.layout->Y;
    const std::size_t n = Y.size();
    if (spec.coloring && spec.coloring->size() != n) throw AlignmentError("render: coloring table does not match layout");
    if (spec.labels != LabelMode::none && spec.image_ids.size() != n)
        throw PreconditionError("render: labels need one image id per point");

    const double pad = 40.0 + spec.point_radius;
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    if (n > 0) {
        xmin = xmax = Y[0][0];
        ymin = ymax = Y[0][1];
    }
    for (const auto& p : Y) {
        xmin = std::min(xmin, p[0]);
        xmax = std::max(xmax, p[0]);
        ymin = std::min(ymin, p[1]);
        ymax = std::max(ymax, p[1]);
    }
    const double avail_w = spec.width - 2 * pad, avail_h = spec.height - 2 * pad;
    const double xr = xmax - xmin, yr = ymax - ymin;
    double scale = 1.0;
    if (xr > 0 || yr > 0) scale = std::min(xr > 0 ? avail_w / xr : avail_h / yr, yr > 0 ? avail_h / yr : avail_w / xr);
    const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
    auto px = [&](const Point2& p) { return spec.width / 2 + (p[0] - cx) * scale; };
    auto py = [&](const Point2& p) { return spec.height / 2 - (p[1] - cy) * scale; };

    std::vector<double> scores(n, 0.0);
    double max_abs = 0.0;
    if (spec.coloring) {
        scores = spec.coloring->scores();
        for (double s : scores) max_abs = std::max(max_abs, std::abs(s));
    }
    auto color_of = [&](std::size_t i) { return max_abs > 0 ? diverging_color(scores[i] / max_abs) : kNeutral; };

    // Strongest scores drawn last so they stay visible.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(scores[a]) < std::abs(scores[b]); });

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fixed2(spec.width) << "\" height=\""
       << detail::fixed2(spec.height) << "\" viewBox=\"0 0 " << detail::fixed2(spec.width) << " "
       << detail::fixed2(spec.height) << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << detail::fixed2(spec.width) << "\" height=\"" << detail::fixed2(spec.height)
       << "\" fill=\"#ffffff\"/>\n";
    if (!spec.title.empty())
        os << "<text x=\"" << detail::fixed2(spec.width / 2) << "\" y=\"24.00\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
           << detail::xml_escape(spec.title) << "</text>\n";
    os << "<g id=\"points\" stroke=\"#333333\" stroke-width=\"0.5\">\n";
    for (std::size_t i : order)
        os << "<circle cx=\"" << detail::fixed2(px(Y[i])) << "\" cy=\"" << detail::fixed2(py(Y[i])) << "\" r=\""
           << detail::fixed2(spec.point_radius) << "\" fill=\"" << hex(color_of(i)) << "\"/>\n";
    os << "</g>\n";

    std::vector<std::size_t> labelled;
    if (spec.labels == LabelMode::all) {
        labelled.resize(n);
        std::iota(labelled.begin(), labelled.end(), std::size_t{0});
    } else if (spec.labels == LabelMode::top_k && spec.coloring) {
        labelled.assign(order.rbegin(), order.rend());
        labelled.resize(std::min(spec.label_k, n));
    }
    if (!labelled.empty()) {
        os << "<g id=\"labels\" font-family=\"sans-serif\" font-size=\"9\" fill=\"#222222\">\n";
        for (std::size_t i : labelled)
            os << "<text x=\"" << detail::fixed2(px(Y[i]) + spec.point_radius + 2) << "\" y=\"" << detail::fixed2(py(Y[i]) + 3)
               << "\">" << detail::xml_escape(spec.image_ids[i]) << "</text>\n";
        os << "</g>\n";
    }

    if (spec.coloring) {
        const double lx = spec.width - 150, ly = spec.height - 24;
        os << "<defs><linearGradient id=\"ramp\" x1=\"0\" x2=\"1\" y1=\"0\" y2=\"0\">"
           << "<stop offset=\"0\" stop-color=\"" << hex(kLeftPole) << "\"/>"
           << "<stop offset=\"0.5\" stop-color=\"" << hex(kNeutral) << "\"/>"
           << "<stop offset=\"1\" stop-color=\"" << hex(kRightPole) << "\"/></linearGradient></defs>\n";
        os << "<rect x=\"" << detail::fixed2(lx) << "\" y=\"" << detail::fixed2(ly)
           << "\" width=\"120.00\" height=\"10.00\" fill=\"url(#ramp)\" stroke=\"#333333\" stroke-width=\"0.5\"/>\n";
        os << "<text x=\"" << detail::fixed2(lx) << "\" y=\"" << detail::fixed2(ly - 4)
           << "\" font-family=\"sans-serif\" font-size=\"9\">" << detail::xml_escape(spec.coloring->axis_name) << " (-"
           << format_shortest(max_abs) << " .. +" << format_shortest(max_abs) << ")</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void render_svg(const RenderSpec& spec, const fs::path& path) { detail::write_text(path, render_svg_string(spec)); }

} // namespace lev

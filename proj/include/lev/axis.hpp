#pragma once

// Bipolar semantic axes: two pole vectors built from phrase embeddings, and the
// per-image scores against them.

#include "lev/corpus.hpp"
#include "lev/errors.hpp"
#include "lev/parallel.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lev {

enum class CombineMode { centroid, single };
enum class CertaintyMode { margin, projection };

inline std::string_view to_string(CombineMode m) { return m == CombineMode::centroid ? "centroid" : "single"; }
inline std::string_view to_string(CertaintyMode m) { return m == CertaintyMode::margin ? "margin" : "projection"; }

inline CombineMode parse_combine_mode(std::string_view s) {
    if (s == "centroid") return CombineMode::centroid;
    if (s == "single") return CombineMode::single;
    throw ParseError("unknown combine_mode '" + std::string(s) + "' (expected centroid|single)");
}

inline CertaintyMode parse_certainty_mode(std::string_view s) {
    if (s == "margin") return CertaintyMode::margin;
    if (s == "projection") return CertaintyMode::projection;
    throw ParseError("unknown certainty mode '" + std::string(s) + "' (expected margin|projection)");
}

struct AxisSpec {
    std::string name;
    std::vector<std::string> left_phrases;
    std::vector<std::string> right_phrases;
    CombineMode combine_mode = CombineMode::centroid;

    /// Pole swap: the same axis read in the opposite direction.
    AxisSpec swapped() const { return {name, right_phrases, left_phrases, combine_mode}; }
};

/// Phrase keys that must exist in a TextBank for this axis to be built.
inline std::vector<std::string> required_phrases(const AxisSpec& spec) {
    auto join = [](const std::vector<std::string>& ps) {
        std::string out;
        for (const auto& p : ps) {
            if (!out.empty()) out += ' ';
            out += p;
        }
        return out;
    };
    if (spec.combine_mode == CombineMode::single) return {join(spec.left_phrases), join(spec.right_phrases)};
    std::vector<std::string> out = spec.left_phrases;
    out.insert(out.end(), spec.right_phrases.begin(), spec.right_phrases.end());
    return out;
}

// ---------------------------------------------------------------------------
// Axes file: {"axes": [{"name", "left_phrases", "right_phrases", "combine_mode"?}, ...]}

inline void validate_axes(const std::vector<AxisSpec>& axes) {
    std::set<std::string_view> names;
    for (const auto& a : axes) {
        if (a.name.empty()) throw ValidationError("axis with empty name");
        if (!names.insert(a.name).second) throw ValidationError("duplicate axis name: " + a.name);
        if (a.left_phrases.empty() || a.right_phrases.empty())
            throw ValidationError("axis " + a.name + ": both poles need at least one phrase");
        std::set<std::string_view> l(a.left_phrases.begin(), a.left_phrases.end());
        std::set<std::string_view> r(a.right_phrases.begin(), a.right_phrases.end());
        if (l == r) throw ValidationError("axis " + a.name + ": left and right poles are identical");
    }
}

inline nlohmann::json axes_to_json(const std::vector<AxisSpec>& axes) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : axes)
        arr.push_back({{"name", a.name},
                       {"left_phrases", a.left_phrases},
                       {"right_phrases", a.right_phrases},
                       {"combine_mode", to_string(a.combine_mode)}});
    return {{"axes", arr}};
}

inline std::vector<AxisSpec> axes_from_json(const nlohmann::json& j) {
    std::vector<AxisSpec> axes;
    try {
        for (const auto& ja : j.at("axes")) {
            AxisSpec a;
            a.name = ja.at("name").get<std::string>();
            a.left_phrases = ja.at("left_phrases").get<std::vector<std::string>>();
            a.right_phrases = ja.at("right_phrases").get<std::vector<std::string>>();
            if (ja.contains("combine_mode")) a.combine_mode = parse_combine_mode(ja["combine_mode"].get<std::string>());
            axes.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("axes file: ") + e.what());
    }
    validate_axes(axes);
    return axes;
}

inline std::vector<AxisSpec> load_axes_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open axes file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return axes_from_json(j);
}

/// The eight reference axes: three analysis levels plus the five-axis battery.
/// Positive scores lean toward the right pole.
inline std::vector<AxisSpec> default_axes() {
    return {
        {"luminance", {"deep shadow underexposed darkness"}, {"bright overexposed highlight luminosity"}},
        {"object", {"building-landscape"}, {"human body-face"}},
        {"political", {"apolitical neutral"}, {"political engaged"}},
        {"conflict",
         {"explicit violence", "war", "weapons", "conflicts", "protest"},
         {"implicit power", "social tension", "alienation", "oppression", "inequality"}},
        {"institution_subversion",
         {"museum", "canon", "heritage", "masterpiece", "tradition"},
         {"subversion", "protest", "transgression", "critique", "resistance"}},
        {"political_aesthetics",
         {"aesthetic", "decorative", "formal", "timeless", "universal"},
         {"colonialism", "domination", "exoticism", "exploitation", "otherness"}},
        {"body_norm",
         {"ideal body", "beauty", "proportion", "harmony", "anatomy"},
         {"violence", "deformation", "suffering", "sexuality", "trauma"}},
        {"power",
         {"order", "stability", "harmony", "balance", "tradition", "continuity"},
         {"power", "domination", "oppression", "control", "authority", "hierarchy"}},
    };
}

inline const AxisSpec* find_axis(const std::vector<AxisSpec>& axes, std::string_view name) {
    for (const auto& a : axes)
        if (a.name == name) return &a;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Axis vectors and scoring

struct AxisVectors {
    std::string axis_name;
    std::string model_id;
    std::vector<double> t_left;
    std::vector<double> t_right;
    std::vector<double> difference; // t_right - t_left
    std::vector<double> direction;  // difference / separation
    double separation = 0.0;        // ||t_right - t_left||

    std::size_t dim() const { return direction.size(); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline constexpr double kDegenerateSeparation = 1e-9;

namespace detail {

inline std::vector<double> pole_vector(const std::vector<std::string>& phrases, CombineMode mode, const TextBank& bank,
                                       const std::string& axis_name) {
    auto lookup = [&](const std::string& phrase) -> const std::vector<double>& {
        const auto* v = bank.find(phrase);
        if (!v) throw MissingPhraseError("axis " + axis_name + ": phrase \"" + phrase + "\" missing from text bank of model " + bank.model_id);
        if (v->size() != bank.dim) throw DimMismatchError("phrase \"" + phrase + "\" has wrong dimension");
        return *v;
    };

    if (mode == CombineMode::single) {
        std::string joined;
        for (const auto& p : phrases) {
            if (!joined.empty()) joined += ' ';
            joined += p;
        }
        return lookup(joined);
    }

    std::vector<double> mean(bank.dim, 0.0);
    for (const auto& p : phrases) {
        const auto& v = lookup(p);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
    }
    if (phrases.size() == 1) return mean; // already unit
    for (auto& x : mean) x /= static_cast<double>(phrases.size());
    const double norm = detail::l2_norm(mean);
    if (!(norm > kDegenerateSeparation))
        throw DegenerateAxisError("axis " + axis_name + ": pole phrases cancel out (zero centroid) for model " + bank.model_id);
    for (auto& x : mean) x /= norm;
    return mean;
}

} // namespace detail

inline AxisVectors build_axis(const AxisSpec& spec, const TextBank& bank) {
    AxisVectors ax;
    ax.axis_name = spec.name;
    ax.model_id = bank.model_id;
    ax.t_left = detail::pole_vector(spec.left_phrases, spec.combine_mode, bank, spec.name);
    ax.t_right = detail::pole_vector(spec.right_phrases, spec.combine_mode, bank, spec.name);
    ax.difference.resize(bank.dim);
    for (std::size_t i = 0; i < bank.dim; ++i) ax.difference[i] = ax.t_right[i] - ax.t_left[i];
    ax.separation = detail::l2_norm(ax.difference);
    if (ax.separation < kDegenerateSeparation)
        throw DegenerateAxisError("axis " + spec.name + ": poles coincide for model " + bank.model_id);
    ax.direction = ax.difference;
    for (auto& x : ax.direction) x /= ax.separation;
    return ax;
}

struct AxisScore {
    std::size_t image_index = 0;
    std::string image_relpth;
    double score_axis = 0.0;
    double cos_left = 0.0;
    double cos_right = 0.0;
    CertaintyMode certainty_mode = CertaintyMode::margin;
    double certainty = 0.0;

    bool operator==(const AxisScore&) const = default;
};

struct ScoreTable {
    std::string model_id;
    std::string axis_name;
    CertaintyMode mode = CertaintyMode::margin;
    std::vector<AxisScore> rows;

    std::size_t size() const { return rows.size(); }

    std::vector<double> scores() const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r.score_axis);
        return out;
    }

    bool operator==(const ScoreTable&) const = default;
};

/// Scores one unit image vector. Margin: cos_right - cos_left. Projection: <v, direction>.
/// Positive leans to the right pole.
inline AxisScore score_image(std::span<const double> v, const AxisVectors& axis, CertaintyMode mode) {
    if (v.size() != axis.dim())
        throw DimMismatchError("image vector has dim " + std::to_string(v.size()) + ", axis " + axis.axis_name +
                               " has dim " + std::to_string(axis.dim()));
    AxisScore s;
    s.cos_left = dot(v, axis.t_left);
    s.cos_right = dot(v, axis.t_right);
    s.certainty_mode = mode;
    // one dot product with the pole difference serves both modes
    const double margin = dot(v, axis.difference);
    s.score_axis = mode == CertaintyMode::margin ? margin : margin / axis.separation;
    s.certainty = std::abs(s.score_axis);
    return s;
}

inline ScoreTable score_corpus(const EmbeddingMatrix& m, const AxisVectors& axis, CertaintyMode mode, unsigned threads = 1) {
    if (m.model_id != axis.model_id)
        throw AlignmentError("axis " + axis.axis_name + " was built for model " + axis.model_id + ", matrix is " + m.model_id);
    if (m.dim != axis.dim())
        throw DimMismatchError("model " + m.model_id + " has dim " + std::to_string(m.dim) + ", axis " +
                               axis.axis_name + " has dim " + std::to_string(axis.dim()));
    ScoreTable t;
    t.model_id = m.model_id;
    t.axis_name = axis.axis_name;
    t.mode = mode;
    t.rows.resize(m.rows());
    parallel_for(m.rows(), threads, [&](std::size_t i) {
        AxisScore s = score_image(m.row(i), axis, mode);
        if (!std::isfinite(s.score_axis))
            throw NumericError("non-finite score for image " + m.image_ids[i] + " on axis " + axis.axis_name);
        s.image_index = i;
        s.image_relpth = m.image_ids[i];
        t.rows[i] = std::move(s);
    });
    return t;
}

} // namespace lev

#pragma once

// Subcommand drivers behind the `lev` executable. Each returns a process exit code:
// 0 success, 1 usage/precondition, 2 data validation, 3 numeric failure.

#include "lev/axis.hpp"
#include "lev/corpus.hpp"
#include "lev/divergence.hpp"
#include "lev/errors.hpp"
#include "lev/parallel.hpp"
#include "lev/report.hpp"
#include "lev/stats.hpp"
#include "lev/tsne.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace lev {

struct CliConfig {
    std::string subcommand;
    fs::path manifest;
    std::vector<std::string> models;
    std::optional<fs::path> axes;
    std::optional<std::string> axis;
    CertaintyMode mode = CertaintyMode::margin;
    std::size_t k = 10;
    ContrastMode contrast = ContrastMode::zscore;
    TsneConfig tsne;
    std::optional<fs::path> out;
    bool render = false;
    unsigned threads = 0; // 0: hardware concurrency; results do not depend on it
};

inline nlohmann::json to_json(const TsneConfig& c) {
    return {{"perplexity", c.perplexity},
            {"n_iter", c.n_iter},
            {"learning_rate", c.learning_rate},
            {"early_exaggeration", c.early_exaggeration},
            {"exaggeration_iters", c.exaggeration_iters},
            {"momentum_initial", c.momentum_initial},
            {"momentum_final", c.momentum_final},
            {"momentum_switch_iter", c.momentum_switch_iter},
            {"seed", c.seed},
            {"min_prob", c.min_prob},
            {"perplexity_tolerance", c.perplexity_tolerance}};
}

/// Path component for a model id or axis name: anything outside [A-Za-z0-9._-] becomes '_'.
inline std::string path_component(std::string_view s) {
    std::string out;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        out += ok ? c : '_';
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

namespace detail {

struct ResolvedAxes {
    std::vector<AxisSpec> axes;
    std::string source;
};

inline ResolvedAxes resolve_axes(const CliConfig& cfg, const CorpusManifest& manifest) {
    if (cfg.axes) return {load_axes_file(*cfg.axes), cfg.axes->string()};
    if (manifest.axes_file) {
        const auto p = manifest.resolve(*manifest.axes_file);
        return {load_axes_file(p), p.string()};
    }
    return {default_axes(), "built-in default axes"};
}

inline nlohmann::json run_echo(const CliConfig& cfg, std::size_t k_effective, const std::string& axes_source) {
    nlohmann::json j{{"tool", tool_block()},
                     {"subcommand", cfg.subcommand},
                     {"manifest", cfg.manifest.string()},
                     {"models", cfg.models},
                     {"axes_source", axes_source},
                     {"axis", cfg.axis ? nlohmann::json(*cfg.axis) : nlohmann::json(nullptr)},
                     {"mode", to_string(cfg.mode)},
                     {"k", cfg.k},
                     {"k_effective", k_effective},
                     {"contrast", to_string(cfg.contrast)},
                     {"tsne", to_json(cfg.tsne)},
                     {"out", cfg.out ? nlohmann::json(cfg.out->string()) : nlohmann::json(nullptr)},
                     {"render", cfg.render}};
    return j;
}

inline unsigned threads_of(const CliConfig& cfg) { return cfg.threads ? cfg.threads : default_thread_count(); }

inline std::size_t effective_k(const CliConfig& cfg, std::size_t n) {
    if (cfg.k < 1) throw PreconditionError("--k must be >= 1");
    return std::min(cfg.k, n);
}

inline const std::string& single_model(const CliConfig& cfg) {
    if (cfg.models.size() != 1) throw PreconditionError(cfg.subcommand + ": exactly one --model is required");
    return cfg.models.front();
}

inline fs::path out_dir(const CliConfig& cfg) {
    if (!cfg.out) throw PreconditionError(cfg.subcommand + ": --out is required");
    fs::create_directories(*cfg.out);
    return *cfg.out;
}

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

} // namespace detail

inline int cmd_ingest(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    const CorpusManifest manifest = load_manifest(cfg.manifest);
    out << "corpus " << manifest.corpus_id << ": " << manifest.size() << " images, " << manifest.models.size()
        << " models\n";

    std::vector<std::string> issues;
    std::optional<std::vector<AxisSpec>> axes;
    std::string axes_source;
    try {
        auto r = detail::resolve_axes(cfg, manifest);
        axes = std::move(r.axes);
        axes_source = r.source;
        out << "axes: " << axes->size() << " from " << axes_source << "\n";
    } catch (const Error& e) {
        issues.push_back(e.what());
    }

    std::vector<EmbeddingMatrix> loaded;
    for (const auto& entry : manifest.models) {
        try {
            EmbeddingMatrix m = load_embeddings(manifest, entry.model_id);
            const auto [lo, hi] = std::minmax_element(m.raw_norms.begin(), m.raw_norms.end());
            out << "model " << m.model_id << ": rows " << m.rows() << ", dim " << m.dim << ", stored row norms in ["
                << format_shortest(*lo) << ", " << format_shortest(*hi) << "]\n";
            loaded.push_back(std::move(m));
        } catch (const Error& e) {
            issues.push_back(e.what());
        }
        if (!entry.text_bank_file) {
            out << "model " << entry.model_id << ": no text bank (axes cannot be scored)\n";
            continue;
        }
        try {
            const TextBank bank = load_text_bank(manifest, entry.model_id);
            out << "model " << entry.model_id << ": text bank with " << bank.entries.size() << " phrases\n";
            if (axes)
                for (const auto& a : *axes)
                    for (const auto& p : required_phrases(a))
                        if (!bank.find(p))
                            out << "  warning: axis " << a.name << " cannot be built, phrase \"" << p << "\" missing\n";
        } catch (const Error& e) {
            issues.push_back(e.what());
        }
    }
    if (loaded.size() >= 2 && issues.empty()) {
        try {
            (void)align(std::move(loaded));
        } catch (const Error& e) {
            issues.push_back(e.what());
        }
    }

    if (!issues.empty()) {
        err << "ingest failed with " << issues.size() << " problem(s):\n";
        for (const auto& i : issues) err << "  - " << i << "\n";
        return static_cast<int>(ExitCode::validation);
    }
    if (cfg.out) write_json(detail::run_echo(cfg, cfg.k, axes_source), detail::out_dir(cfg) / "run.json");
    out << "ok\n";
    return 0;
}

inline int cmd_score(const CliConfig& cfg, std::ostream& out, std::ostream&) {
    const std::string& model_id = detail::single_model(cfg);
    if (!cfg.axis) throw PreconditionError("score: --axis is required");
    const CorpusManifest manifest = load_manifest(cfg.manifest);
    if (!manifest.find_model(model_id)) throw PreconditionError("score: unknown model " + model_id);
    const auto axes = detail::resolve_axes(cfg, manifest);
    const AxisSpec* spec = find_axis(axes.axes, *cfg.axis);
    if (!spec) throw PreconditionError("score: unknown axis " + *cfg.axis + " in " + axes.source);

    const EmbeddingMatrix m = load_embeddings(manifest, model_id);
    const TextBank bank = load_text_bank(manifest, model_id);
    const AxisVectors axis = build_axis(*spec, bank);
    const ScoreTable table = score_corpus(m, axis, cfg.mode, detail::threads_of(cfg));
    const std::size_t k = detail::effective_k(cfg, table.size());
    const AxisSummary summary = summarize(table, k);

    const fs::path root = detail::out_dir(cfg);
    const fs::path dir = root / path_component(model_id) / path_component(spec->name);
    fs::create_directories(dir);
    write_score_csv(table, dir / "scores.csv");
    nlohmann::json sj = to_json(summary);
    write_json({{"tool", tool_block()}, {"metadata", report_metadata()}, {"mode", to_string(cfg.mode)}, {"summary", sj}},
               dir / "summary.json");
    write_json(detail::run_echo(cfg, k, axes.source), root / "run.json");

    out << model_id << " / " << spec->name << " (" << to_string(cfg.mode) << "): pct_left "
        << detail::fmt("%.1f", summary.pct_left) << ", pct_right " << detail::fmt("%.1f", summary.pct_right)
        << ", pct_zero " << detail::fmt("%.1f", summary.pct_zero) << ", sigma " << format_shortest(summary.sigma) << "\n";
    return 0;
}

inline int cmd_battery(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    const CorpusManifest manifest = load_manifest(cfg.manifest);
    const std::vector<std::string> models = cfg.models.empty() ? manifest.model_ids() : cfg.models;
    for (const auto& m : models)
        if (!manifest.find_model(m)) throw PreconditionError("battery: unknown model " + m);
    const auto axes = detail::resolve_axes(cfg, manifest);
    std::vector<std::string> axis_names;
    for (const auto& a : axes.axes) axis_names.push_back(a.name);
    const unsigned threads = detail::threads_of(cfg);

    std::vector<ScoreTable> tables;
    for (const auto& model_id : models) {
        const EmbeddingMatrix m = load_embeddings(manifest, model_id);
        const TextBank bank = load_text_bank(manifest, model_id);
        for (const auto& spec : axes.axes) {
            try {
                tables.push_back(score_corpus(m, build_axis(spec, bank), cfg.mode, threads));
            } catch (const MissingPhraseError& e) {
                err << "skipping cell: " << e.what() << "\n";
            }
        }
    }
    const std::size_t k = detail::effective_k(cfg, manifest.size());
    const BatterySummary summary = battery(models, axis_names, tables, k);

    std::vector<DivergenceReport> divergences;
    if (models.size() >= 2) {
        for (const auto& name : axis_names) {
            std::vector<ScoreTable> per_axis;
            for (const auto& model_id : models)
                for (const auto& t : tables)
                    if (t.model_id == model_id && t.axis_name == name) per_axis.push_back(t);
            divergences.push_back(axis_divergence(per_axis, k, cfg.contrast));
        }
    }

    const fs::path root = detail::out_dir(cfg);
    for (const auto& t : tables) {
        const fs::path dir = root / path_component(t.model_id) / path_component(t.axis_name);
        fs::create_directories(dir);
        write_score_csv(t, dir / "scores.csv");
    }
    const nlohmann::json echo = detail::run_echo(cfg, k, axes.source);
    write_reports_json(summary, divergences, root / "battery.json", echo);
    if (!divergences.empty()) {
        fs::create_directories(root / "divergence");
        for (const auto& d : divergences)
            write_json({{"tool", tool_block()}, {"contrast_mode", to_string(cfg.contrast)}, {"divergence", to_json(d)}},
                       root / "divergence" / (path_component(d.axis_name) + ".json"));
    }
    std::string ranked_csv = "rank,axis_name,max_gap_pp,model_a,model_b\n";
    const auto ranked = rank_axes_by_divergence(divergences);
    for (std::size_t i = 0; i < ranked.size(); ++i)
        ranked_csv += std::to_string(i + 1) + "," + detail::csv_field(ranked[i].axis_name) + "," +
                      format_shortest(ranked[i].max_gap_pp) + "," + detail::csv_field(ranked[i].max_gap_pair.first) +
                      "," + detail::csv_field(ranked[i].max_gap_pair.second) + "\n";
    detail::write_text(root / "ranked_axes.csv", ranked_csv);
    write_json(echo, root / "run.json");

    out << "stability (ascending mean sigma):";
    for (std::size_t i = 0; i < summary.stability_order.size(); ++i) {
        const auto it = std::find(models.begin(), models.end(), summary.stability_order[i]);
        out << (i ? ", " : " ") << *it << " " << format_shortest(summary.mean_sigma[static_cast<std::size_t>(it - models.begin())]);
    }
    out << "\n";
    for (std::size_t i = 0; i < ranked.size(); ++i)
        out << (i + 1) << ". " << ranked[i].axis_name << ": max gap " << detail::fmt("%.1f", ranked[i].max_gap_pp)
            << " pp (" << ranked[i].max_gap_pair.first << " vs " << ranked[i].max_gap_pair.second << ")\n";
    return 0;
}

inline int cmd_tsne(const CliConfig& cfg, std::ostream& out, std::ostream&) {
    const std::string& model_id = detail::single_model(cfg);
    const CorpusManifest manifest = load_manifest(cfg.manifest);
    if (!manifest.find_model(model_id)) throw PreconditionError("tsne: unknown model " + model_id);
    validate(cfg.tsne, manifest.size());

    std::optional<ScoreTable> coloring;
    std::string axes_source = "none";
    const EmbeddingMatrix m = load_embeddings(manifest, model_id);
    if (cfg.render && cfg.axis) {
        const auto axes = detail::resolve_axes(cfg, manifest);
        axes_source = axes.source;
        const AxisSpec* spec = find_axis(axes.axes, *cfg.axis);
        if (!spec) throw PreconditionError("tsne: unknown axis " + *cfg.axis + " in " + axes.source);
        coloring = score_corpus(m, build_axis(*spec, load_text_bank(manifest, model_id)), cfg.mode);
    }

    const unsigned threads = detail::threads_of(cfg);
    const TsneLayout layout = tsne_embed(m, cfg.tsne, threads);

    const fs::path root = detail::out_dir(cfg);
    const fs::path dir = root / "tsne" / path_component(model_id);
    fs::create_directories(dir);
    write_layout_csv(layout, m.image_ids, dir / "layout.csv");
    write_kl_trace(layout, dir / "kl_trace.csv");
    if (cfg.render) {
        RenderSpec spec;
        spec.layout = &layout;
        spec.image_ids = m.image_ids;
        spec.coloring = coloring;
        spec.labels = coloring ? LabelMode::top_k : LabelMode::none;
        spec.label_k = detail::effective_k(cfg, m.rows());
        spec.title = model_id + (coloring ? " / " + coloring->axis_name : std::string());
        render_svg(spec, dir / "layout.svg");
    }
    write_json(detail::run_echo(cfg, detail::effective_k(cfg, m.rows()), axes_source), root / "run.json");
    out << "t-SNE " << model_id << ": " << m.rows() << " points, final KL " << format_shortest(layout.kl_trace.back())
        << "\n";
    return 0;
}

/// Dispatches on cfg.subcommand and maps exceptions to exit codes.
inline int run_command(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        if (cfg.subcommand == "ingest") return cmd_ingest(cfg, out, err);
        if (cfg.subcommand == "score") return cmd_score(cfg, out, err);
        if (cfg.subcommand == "battery") return cmd_battery(cfg, out, err);
        if (cfg.subcommand == "tsne") return cmd_tsne(cfg, out, err);
        err << "unknown subcommand: " << cfg.subcommand << "\n";
        return static_cast<int>(ExitCode::usage);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::validation);
    }
}

} // namespace lev

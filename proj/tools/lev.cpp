// lev: command-line driver for corpus validation, axis scoring, battery reports and t-SNE layouts.

#include "lev/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_common(CLI::App* sub, lev::CliConfig& cfg) {
    sub->add_option("--manifest", cfg.manifest, "Corpus manifest (JSON)")->required();
}

void add_axes(CLI::App* sub, lev::CliConfig& cfg, std::string& mode) {
    sub->add_option_function<std::string>("--axes", [&cfg](const std::string& p) { cfg.axes = p; },
                                          "Axes file (default: manifest axes_file, else built-in axes)");
    sub->add_option("--mode", mode, "Scoring mode")->check(CLI::IsMember({"margin", "projection"}));
    sub->add_option("--k", cfg.k, "Top-k list length");
}

void add_out(CLI::App* sub, lev::CliConfig& cfg) {
    sub->add_option_function<std::string>("--out", [&cfg](const std::string& p) { cfg.out = p; }, "Output directory");
}

} // namespace

int main(int argc, char** argv) {
    lev::CliConfig cfg;
    std::string mode = "margin";
    std::string contrast = "zscore";
    std::string axis;

    CLI::App app{"lev: bipolar semantic axis analysis of vision-language embeddings"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "Validate a corpus and print per-model diagnostics");
    add_common(ingest, cfg);
    ingest->add_option_function<std::string>("--axes", [&cfg](const std::string& p) { cfg.axes = p; }, "Axes file");
    add_out(ingest, cfg);

    auto* score = app.add_subcommand("score", "Score one model on one axis");
    add_common(score, cfg);
    score->add_option("--model", cfg.models, "Model id")->required()->expected(1);
    score->add_option("--axis", axis, "Axis name")->required();
    add_axes(score, cfg, mode);
    add_out(score, cfg);

    auto* batt = app.add_subcommand("battery", "Score every model on every axis; summaries and divergence reports");
    add_common(batt, cfg);
    batt->add_option("--model", cfg.models, "Restrict to these models (repeatable)");
    add_axes(batt, cfg, mode);
    batt->add_option("--contrast", contrast, "Contrast ranking")->check(CLI::IsMember({"raw", "zscore"}));
    add_out(batt, cfg);

    auto* tsne = app.add_subcommand("tsne", "Exact t-SNE layout of one model's embeddings");
    add_common(tsne, cfg);
    tsne->add_option("--model", cfg.models, "Model id")->required()->expected(1);
    tsne->add_option("--perplexity", cfg.tsne.perplexity, "Perplexity");
    tsne->add_option("--iters", cfg.tsne.n_iter, "Iterations");
    tsne->add_option("--lr", cfg.tsne.learning_rate, "Learning rate");
    tsne->add_option("--seed", cfg.tsne.seed, "Random seed");
    tsne->add_flag("--render", cfg.render, "Also write layout.svg");
    tsne->add_option("--axis", axis, "Color the rendering by this axis");
    add_axes(tsne, cfg, mode);
    add_out(tsne, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(lev::ExitCode::usage);
    }

    for (auto* sub : {ingest, score, batt, tsne})
        if (sub->parsed()) cfg.subcommand = sub->get_name();
    cfg.mode = lev::parse_certainty_mode(mode);
    cfg.contrast = lev::parse_contrast_mode(contrast);
    if (!axis.empty()) cfg.axis = axis;
    return lev::run_command(cfg, std::cout, std::cerr);
}

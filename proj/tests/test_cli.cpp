#include "lev/cli.hpp"

#include "support/fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <sstream>

using namespace lev;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(const CliConfig& cfg) {
    std::ostringstream out, err;
    const int code = run_command(cfg, out, err);
    return {code, out.str(), err.str()};
}

/// Runs the installed binary; returns its exit status.
int tool(const std::string& args) {
    const std::string cmd = std::string(LEV_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::size_t count_files(const fs::path& root, const std::string& name) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() == name) ++n;
    return n;
}

const std::vector<std::string> kModels{"openai-clip-vit-l14", "laion-clip-vit-h14", "siglip-so400m"};

} // namespace

TEST_CASE("ingest", "[cli]") {
    fixture::TempDir tmp;
    const auto manifest = fixture::build_synthetic_corpus(tmp.path() / "c", kModels, 40, {512, 768, 1152}, default_axes());

    SECTION("valid corpus") {
        CliConfig cfg;
        cfg.subcommand = "ingest";
        cfg.manifest = manifest;
        const auto r = run(cfg);
        CHECK(r.code == 0);
        CHECK_THAT(r.out, ContainsSubstring("40 images") && ContainsSubstring("dim 1152"));
        CHECK(tool("ingest --manifest " + q(manifest)) == 0);
    }

    SECTION("corrupted header names the file") {
        auto bytes = fixture::read_file(tmp.path() / "c" / "laion-clip-vit-h14.levs");
        bytes[0] = 'X';
        fixture::write_file(tmp.path() / "c" / "laion-clip-vit-h14.levs", bytes);
        CliConfig cfg;
        cfg.subcommand = "ingest";
        cfg.manifest = manifest;
        const auto r = run(cfg);
        CHECK(r.code == 2);
        CHECK_THAT(r.err, ContainsSubstring("laion-clip-vit-h14.levs"));
        CHECK(tool("ingest --manifest " + q(manifest)) == 2);
    }

    SECTION("unknown axes file") {
        CliConfig cfg;
        cfg.subcommand = "ingest";
        cfg.manifest = manifest;
        cfg.axes = tmp.path() / "missing.json";
        CHECK(run(cfg).code == 2);
    }

    SECTION("usage errors") {
        CHECK(tool("") == 1);
        CHECK(tool("ingest") == 1);
        CHECK(tool("--help") == 0);
    }
}

TEST_CASE("score reproduces the published mask rows", "[cli][reference]") {
    fixture::TempDir tmp;
    const auto manifest = fixture::build_mask_corpus(tmp.path() / "corpus");
    const auto out = tmp.path() / "out";
    REQUIRE(tool("score --manifest " + q(manifest) + " --model openai-clip-vit-l14 --axis political --out " + q(out)) == 0);

    const auto csv = fixture::read_file(out / "openai-clip-vit-l14" / "political" / "scores.csv");
    std::vector<std::string> lines;
    std::istringstream in(csv);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 1 + fixture::kMaskFillers + 15);
    CHECK(lines[0] == kScoreCsvHeader);
    for (const auto& ref : fixture::reference_rows()) CHECK(lines[ref.image_index + 1] == ref.line);

    CHECK(fs::exists(out / "openai-clip-vit-l14" / "political" / "summary.json"));
    CHECK(fs::exists(out / "run.json"));
}

TEST_CASE("score in projection mode keeps the margin ordering", "[cli]") {
    fixture::TempDir tmp;
    const auto manifest = fixture::build_synthetic_corpus(tmp.path() / "c", {"m1"}, 60, {32}, default_axes());
    CliConfig cfg;
    cfg.subcommand = "score";
    cfg.manifest = manifest;
    cfg.models = {"m1"};
    cfg.axis = "power";
    cfg.out = tmp.path() / "margin";
    REQUIRE(run(cfg).code == 0);
    cfg.mode = CertaintyMode::projection;
    cfg.out = tmp.path() / "projection";
    REQUIRE(run(cfg).code == 0);

    auto scores = [](const fs::path& p) {
        std::vector<double> s;
        const auto rows = oracle::parse_csv(fixture::read_file(p));
        for (std::size_t i = 1; i < rows.size(); ++i) s.push_back(std::stod(rows[i][2]));
        return s;
    };
    const auto a = scores(tmp.path() / "margin" / "m1" / "power" / "scores.csv");
    const auto b = scores(tmp.path() / "projection" / "m1" / "power" / "scores.csv");
    CHECK(oracle::spearman(a, b) == Catch::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("score usage errors", "[cli]") {
    fixture::TempDir tmp;
    const auto manifest = fixture::build_synthetic_corpus(tmp.path() / "c", {"m1"}, 10, {8}, default_axes());
    CliConfig cfg;
    cfg.subcommand = "score";
    cfg.manifest = manifest;
    cfg.models = {"m1"};
    cfg.out = tmp.path() / "out";
    cfg.axis = "no_such_axis";
    CHECK(run(cfg).code == 1);
    cfg.axis = "political";
    cfg.models = {"nobody"};
    CHECK(run(cfg).code == 1);
    CHECK(tool("score --manifest " + q(manifest) + " --model m1 --axis nope --out " + q(tmp.path() / "o")) == 1);
    CHECK(tool("score --manifest " + q(manifest) + " --model m1 --axis political --mode cosine --out " + q(tmp.path() / "o")) == 1);
}

TEST_CASE("battery over three models and eight axes", "[cli]") {
    fixture::TempDir tmp;
    const auto manifest = fixture::build_synthetic_corpus(tmp.path() / "c", kModels, 50, {16, 24, 32}, default_axes());
    const auto out = tmp.path() / "out";
    REQUIRE(tool("battery --manifest " + q(manifest) + " --out " + q(out)) == 0);

    CHECK(count_files(out, "scores.csv") == 24);
    CHECK(fs::exists(out / "battery.json"));
    std::size_t divergence_files = 0;
    for (const auto& e : fs::directory_iterator(out / "divergence")) divergence_files += e.path().extension() == ".json";
    CHECK(divergence_files == 8);

    const auto bundle = read_reports_json(out / "battery.json");
    CHECK(bundle.battery.models == kModels);
    CHECK(bundle.battery.axes.size() == 8);
    CHECK(bundle.divergences.size() == 8);
    CHECK(bundle.ranked_axes.size() == 8);
    for (std::size_t i = 1; i < bundle.ranked_axes.size(); ++i)
        CHECK(bundle.ranked_axes[i - 1].max_gap_pp >= bundle.ranked_axes[i].max_gap_pp);

    const auto ranked = oracle::parse_csv(fixture::read_file(out / "ranked_axes.csv"));
    CHECK(ranked.size() == 9);
}

TEST_CASE("battery with a missing phrase is an incomplete grid", "[cli]") {
    fixture::TempDir tmp;
    const auto manifest = fixture::build_synthetic_corpus(tmp.path() / "c", {"m1", "m2"}, 20, {8}, default_axes());
    TextBank bank = read_text_bank_file(tmp.path() / "c" / "m2.levt", "m2");
    bank.entries.erase("colonialism");
    write_text_bank(bank, tmp.path() / "c" / "m2.levt");

    CliConfig cfg;
    cfg.subcommand = "battery";
    cfg.manifest = manifest;
    cfg.out = tmp.path() / "out";
    const auto r = run(cfg);
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("(m2, political_aesthetics)"));

    cfg.subcommand = "ingest";
    const auto ingest = run(cfg);
    CHECK(ingest.code == 0);
    CHECK_THAT(ingest.out, ContainsSubstring("colonialism"));
}

TEST_CASE("battery ranks axes by a planted gap", "[cli]") {
    // Two models on a dim-3 corpus. Axis "wide" separates them strongly, "narrow" barely.
    fixture::TempDir tmp;
    const fs::path dir = tmp.path() / "c";
    fs::create_directories(dir);
    const std::size_t n = 100;
    CorpusManifest m;
    m.corpus_id = "planted";
    for (std::size_t i = 0; i < n; ++i) m.image_ids.push_back("img" + std::to_string(i) + ".jpg");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<float> x1, x2;
    for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d) {
            x1.push_back(static_cast<float>(u(rng)));
            x2.push_back(x1.back());
        }
    write_matrix_file(dir / "a.levs", n, 3, x1);
    write_matrix_file(dir / "b.levs", n, 3, x2);
    // model a sees "wide" along +e0, model b sees it along -e0; "narrow" is the same for both
    TextBank ba, bb;
    ba.model_id = "a";
    bb.model_id = "b";
    ba.dim = bb.dim = 3;
    ba.entries = {{"wl", {-1, 0, 0}}, {"wr", {1, 0, 0}}, {"nl", {0, -1, 0}}, {"nr", {0, 1, 0}}};
    bb.entries = {{"wl", {1, 0, 0}}, {"wr", {-1, 0, 0}}, {"nl", {0, -1, 0}}, {"nr", {0, 1, 0}}};
    write_text_bank(ba, dir / "a.levt");
    write_text_bank(bb, dir / "b.levt");
    fixture::write_file(dir / "axes.json", axes_to_json({{"narrow", {"nl"}, {"nr"}}, {"wide", {"wl"}, {"wr"}}}).dump());
    m.models = {{"a", 3, "a.levs", "a.levt", {}}, {"b", 3, "b.levs", "b.levt", {}}};
    m.axes_file = "axes.json";
    write_manifest(m, dir / "manifest.json");

    CliConfig cfg;
    cfg.subcommand = "battery";
    cfg.manifest = dir / "manifest.json";
    cfg.out = tmp.path() / "out";
    REQUIRE(run(cfg).code == 0);
    const auto bundle = read_reports_json(tmp.path() / "out" / "battery.json");
    REQUIRE(bundle.ranked_axes.size() == 2);
    CHECK(bundle.ranked_axes[0].axis_name == "wide");
    CHECK(bundle.ranked_axes[1].axis_name == "narrow");
    CHECK(bundle.ranked_axes[1].max_gap_pp == 0.0);
    CHECK(bundle.divergences[1].model_pairs[0].pearson == Catch::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("tsne subcommand", "[cli]") {
    fixture::TempDir tmp;
    const auto manifest = fixture::build_synthetic_corpus(tmp.path() / "c", {"m1"}, 40, {16}, default_axes());
    const std::string base = "tsne --manifest " + q(manifest) + " --model m1 --perplexity 5 --iters 300 --seed 3";

    SECTION("repeat runs write identical files") {
        REQUIRE(tool(base + " --out " + q(tmp.path() / "a")) == 0);
        REQUIRE(tool(base + " --out " + q(tmp.path() / "b")) == 0);
        for (const char* f : {"layout.csv", "kl_trace.csv"}) {
            const auto a = fixture::read_file(tmp.path() / "a" / "tsne" / "m1" / f);
            CHECK(!a.empty());
            CHECK(a == fixture::read_file(tmp.path() / "b" / "tsne" / "m1" / f));
        }
        const auto echo = fixture::read_file(tmp.path() / "a" / "run.json");
        REQUIRE(tool(base + " --out " + q(tmp.path() / "a")) == 0);
        CHECK(fixture::read_file(tmp.path() / "a" / "run.json") == echo);
        const auto layout = oracle::parse_csv(fixture::read_file(tmp.path() / "a" / "tsne" / "m1" / "layout.csv"));
        CHECK(layout.size() == 41);
    }

    SECTION("perplexity too large for the corpus") {
        CHECK(tool("tsne --manifest " + q(manifest) + " --model m1 --perplexity 30 --out " + q(tmp.path() / "x")) == 1);
    }

    SECTION("render colored by an axis") {
        REQUIRE(tool(base + " --render --axis political --out " + q(tmp.path() / "r")) == 0);
        const auto svg = fixture::read_file(tmp.path() / "r" / "tsne" / "m1" / "layout.svg");
        std::size_t circles = 0;
        for (auto pos = svg.find("<circle"); pos != std::string::npos; pos = svg.find("<circle", pos + 1)) ++circles;
        CHECK(circles == 40);
        CHECK_THAT(svg, ContainsSubstring("political"));
    }
}

TEST_CASE("run echo is stable across identical invocations", "[cli]") {
    fixture::TempDir tmp;
    const auto manifest = fixture::build_synthetic_corpus(tmp.path() / "c", {"m1", "m2"}, 20, {8}, default_axes());
    CliConfig cfg;
    cfg.subcommand = "battery";
    cfg.manifest = manifest;
    cfg.out = tmp.path() / "out";
    REQUIRE(run(cfg).code == 0);
    const auto first = fixture::read_file(tmp.path() / "out" / "run.json");
    const auto first_battery = fixture::read_file(tmp.path() / "out" / "battery.json");
    REQUIRE(run(cfg).code == 0);
    CHECK(fixture::read_file(tmp.path() / "out" / "run.json") == first);
    CHECK(fixture::read_file(tmp.path() / "out" / "battery.json") == first_battery);
    const auto echo = nlohmann::json::parse(first);
    CHECK(echo.at("k") == 10);
}

TEST_CASE("path components are sanitized", "[cli]") {
    CHECK(path_component("openai/clip:vit") == "openai_clip_vit");
    CHECK(path_component("..") == "_..");
    CHECK(path_component("siglip-so400m_v1.2") == "siglip-so400m_v1.2");
}

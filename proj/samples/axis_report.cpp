// Library walkthrough: score one model of a corpus on every axis and print the summary table.
//
//   axis_report_sample <manifest.json> <model_id> [axes.json]
//
// With only a model id and no axes file, the built-in eight axes are used.

#include "lev/axis.hpp"
#include "lev/corpus.hpp"
#include "lev/report.hpp"
#include "lev/stats.hpp"

#include <cstdio>
#include <iostream>

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: " << argv[0] << " <manifest.json> <model_id> [axes.json]\n";
        return 1;
    }
    try {
        const auto manifest = lev::load_manifest(argv[1]);
        const std::string model = argv[2];
        const auto axes = argc > 3 ? lev::load_axes_file(argv[3]) : lev::default_axes();

        const auto matrix = lev::load_embeddings(manifest, model);
        const auto bank = lev::load_text_bank(manifest, model);
        const std::size_t k = std::min<std::size_t>(3, matrix.rows());

        std::printf("%-24s %8s %8s %10s  %s\n", "axis", "left%", "right%", "sigma", "top right");
        for (const auto& spec : axes) {
            const auto table = lev::score_corpus(matrix, lev::build_axis(spec, bank), lev::CertaintyMode::margin);
            const auto s = lev::summarize(table, k);
            std::printf("%-24s %8.1f %8.1f %10.4f  %s\n", spec.name.c_str(), s.pct_left, s.pct_right, s.sigma,
                        s.top_right.front().image_relpth.c_str());
        }
    } catch (const lev::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    }
    return 0;
}

#pragma once

// On-disk and in-memory fixtures shared by the unit and acceptance suites.

#include "lev/axis.hpp"
#include "lev/corpus.hpp"
#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef LEV_FIXTURE_DIR
#error "LEV_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace fixture {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "lev-test-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

// ---------------------------------------------------------------------------
// Published reference rows (15 African-mask images, political axis, margin mode)

struct ReferenceRow {
    std::size_t image_index;
    std::string image_relpth;
    double score_axis, cos_left, cos_right, certainty;
    std::string line; // verbatim CSV line
};

inline fs::path reference_csv_path() { return fs::path(LEV_FIXTURE_DIR) / "mask_political_reference.csv"; }

inline std::vector<ReferenceRow> reference_rows() {
    const std::string text = read_file(reference_csv_path());
    const auto rows = oracle::parse_csv(text);
    std::vector<ReferenceRow> out;
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line); // header
    for (std::size_t r = 1; r < rows.size(); ++r) {
        std::getline(lines, line);
        const auto& f = rows[r];
        out.push_back({std::stoul(f[0]), f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[6]), line});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Random helpers

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(dim);
    double s = 0;
    for (auto& x : v) {
        x = g(rng);
        s += x * x;
    }
    for (auto& x : v) x /= std::sqrt(s);
    return v;
}

/// Random orthogonal matrix (row-major) via Gram-Schmidt on Gaussian rows.
inline std::vector<double> random_orthogonal(std::mt19937_64& rng, std::size_t dim) {
    std::vector<std::vector<double>> rows;
    while (rows.size() < dim) {
        auto v = random_unit(rng, dim);
        for (const auto& r : rows) {
            double d = 0;
            for (std::size_t i = 0; i < dim; ++i) d += v[i] * r[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= d * r[i];
        }
        double s = 0;
        for (double x : v) s += x * x;
        s = std::sqrt(s);
        if (s < 1e-6) continue;
        for (auto& x : v) x /= s;
        rows.push_back(v);
    }
    std::vector<double> q;
    for (const auto& r : rows) q.insert(q.end(), r.begin(), r.end());
    return q;
}

inline std::vector<double> apply(const std::vector<double>& q, std::span<const double> v) {
    const std::size_t dim = v.size();
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) out[i] += q[i * dim + j] * v[j];
    return out;
}

/// In-memory matrix of random unit rows.
inline lev::EmbeddingMatrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                                          const std::string& model = "m", const std::string& corpus = "c") {
    lev::EmbeddingMatrix m;
    m.corpus_id = corpus;
    m.model_id = model;
    m.dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%04zu.jpg", i);
        m.image_ids.push_back(name);
        auto v = random_unit(rng, dim);
        m.values.insert(m.values.end(), v.begin(), v.end());
    }
    m.raw_norms.assign(n, 1.0);
    return m;
}

inline lev::TextBank random_bank(std::mt19937_64& rng, const std::vector<std::string>& phrases, std::size_t dim,
                                 const std::string& model = "m") {
    lev::TextBank b;
    b.model_id = model;
    b.dim = dim;
    for (const auto& p : phrases) b.entries[p] = random_unit(rng, dim);
    return b;
}

inline std::vector<std::string> all_phrases(const std::vector<lev::AxisSpec>& axes) {
    std::vector<std::string> out;
    for (const auto& a : axes)
        for (const auto& p : lev::required_phrases(a)) out.push_back(p);
    return out;
}

/// Float whose use as the last free component brings the row norm closest to 1.
inline float closing_component(double partial_sq) {
    const double ideal = std::sqrt(std::max(0.0, 1.0 - partial_sq));
    float best = static_cast<float>(ideal);
    double best_err = std::abs(partial_sq + double(best) * best - 1.0);
    for (float c : {std::nextafter(best, 0.0f), std::nextafter(best, 2.0f)}) {
        const double err = std::abs(partial_sq + double(c) * c - 1.0);
        if (err < best_err) {
            best = c;
            best_err = err;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Mask corpus: 166 filler images then the 15 reference masks, so image_index values
// match the published table. One model, dim 4, poles on the first two basis vectors.

inline constexpr std::size_t kMaskFillers = 166;
inline const char* kMaskModel = "openai-clip-vit-l14";

inline fs::path build_mask_corpus(const fs::path& dir) {
    fs::create_directories(dir);
    const auto refs = reference_rows();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.05, 0.2);

    lev::CorpusManifest m;
    m.corpus_id = "mask-fixture";
    std::vector<float> values;
    auto push_row = [&](double cl, double cr) {
        const float a = static_cast<float>(cl), b = static_cast<float>(cr);
        const double partial = double(a) * a + double(b) * b;
        const float c = closing_component(partial);
        values.insert(values.end(), {a, b, c, 0.0f});
    };
    for (std::size_t i = 0; i < kMaskFillers; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "filler_%03zu.jpg", i);
        m.image_ids.push_back(name);
        push_row(u(rng), u(rng));
    }
    for (const auto& r : refs) {
        m.image_ids.push_back(r.image_relpth);
        push_row(r.cos_left, r.cos_right);
    }
    lev::write_matrix_file(dir / "openai.levs", m.image_ids.size(), 4, values);

    lev::TextBank bank;
    bank.model_id = kMaskModel;
    bank.dim = 4;
    bank.entries["apolitical neutral"] = {1, 0, 0, 0};
    bank.entries["political engaged"] = {0, 1, 0, 0};
    lev::write_text_bank(bank, dir / "openai.levt");

    m.models.push_back({kMaskModel, 4, "openai.levs", "openai.levt", {}});
    lev::write_manifest(m, dir / "manifest.json");
    return dir / "manifest.json";
}

// ---------------------------------------------------------------------------
// Synthetic multi-model corpus with text banks covering the given axes.

inline fs::path build_synthetic_corpus(const fs::path& dir, const std::vector<std::string>& models, std::size_t n,
                                       const std::vector<std::size_t>& dims, const std::vector<lev::AxisSpec>& axes,
                                       std::uint64_t seed = 1, bool write_axes_file = false) {
    fs::create_directories(dir);
    std::mt19937_64 rng(seed);
    lev::CorpusManifest m;
    m.corpus_id = "synthetic";
    for (std::size_t i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "art_%04zu.jpg", i);
        m.image_ids.push_back(name);
    }
    const auto phrases = all_phrases(axes);
    for (std::size_t k = 0; k < models.size(); ++k) {
        const std::size_t dim = dims[k % dims.size()];
        std::vector<float> values;
        for (std::size_t i = 0; i < n; ++i)
            for (double x : random_unit(rng, dim)) values.push_back(static_cast<float>(x * 3.0)); // un-normalized on disk
        lev::write_matrix_file(dir / (models[k] + ".levs"), n, dim, values);
        lev::write_text_bank(random_bank(rng, phrases, dim, models[k]), dir / (models[k] + ".levt"));
        m.models.push_back({models[k], dim, models[k] + ".levs", models[k] + ".levt", {}});
    }
    if (write_axes_file) {
        write_file(dir / "axes.json", lev::axes_to_json(axes).dump(2));
        m.axes_file = "axes.json";
    }
    lev::write_manifest(m, dir / "manifest.json");
    return dir / "manifest.json";
}

/// Three well-separated Gaussian clusters in `dim` dimensions, rows unit-normalized.
inline lev::EmbeddingMatrix cluster_fixture(std::size_t per_cluster, std::size_t dim, std::vector<int>& labels,
                                            std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    lev::EmbeddingMatrix m;
    m.corpus_id = "clusters";
    m.model_id = "m";
    m.dim = dim;
    labels.clear();
    for (int c = 0; c < 3; ++c) {
        std::vector<double> centre(dim, 0.0);
        centre[static_cast<std::size_t>(c)] = 1.0;
        for (std::size_t i = 0; i < per_cluster; ++i) {
            std::vector<double> v(dim);
            double s = 0;
            for (std::size_t d = 0; d < dim; ++d) {
                v[d] = centre[d] + noise(rng);
                s += v[d] * v[d];
            }
            for (auto& x : v) x /= std::sqrt(s);
            m.values.insert(m.values.end(), v.begin(), v.end());
            m.image_ids.push_back("c" + std::to_string(c) + "_" + std::to_string(i) + ".jpg");
            labels.push_back(c);
        }
    }
    m.raw_norms.assign(m.image_ids.size(), 1.0);
    return m;
}

} // namespace fixture

#pragma once

// On-disk corpus: a JSON manifest plus little-endian binary embedding files.
//
// Matrix file (LEVS):   "LEVS" | u16 version=1 | u32 rows | u32 dim | rows*dim f32, row-major
// Text bank (LEVT):     "LEVT" | u16 version=1 | u32 count | u32 dim |
//                       count * ( u32 byte_length | UTF-8 phrase | dim f32 )
//
// All integers and floats are little-endian. Rows are unit-normalized when loaded,
// never when written.

#include "lev/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lev {

namespace fs = std::filesystem;

inline constexpr char kMatrixMagic[4] = {'L', 'E', 'V', 'S'};
inline constexpr char kTextBankMagic[4] = {'L', 'E', 'V', 'T'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 14;

/// Rows whose L2 norm is already this close to 1 are kept bit-for-bit.
/// Covers any float32-rounded unit vector, which keeps normalization idempotent
/// and lets write(load(f)) reproduce f exactly.
inline constexpr double kUnitSlack = 1e-7;

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on " + path.string());
    return bytes;
}

inline void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
    if (path.empty()) throw IoError("empty output path");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on " + path.string());
}

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string source)
        : bytes_(bytes), source_(std::move(source)) {}

    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::span<const std::uint8_t> take(std::size_t n) {
        if (remaining() < n) throw FormatError(source_ + ": truncated at byte " + std::to_string(pos_));
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint16_t u16() {
        auto b = take(2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32() {
        auto b = take(4);
        return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
               (std::uint32_t{b[3]} << 24);
    }

    float f32() { return std::bit_cast<float>(u32()); }

private:
    std::span<const std::uint8_t> bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

class ByteWriter {
public:
    void raw(std::span<const char> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    void u16(std::uint16_t v) {
        bytes_.push_back(static_cast<std::uint8_t>(v & 0xff));
        bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8) bytes_.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xffffffffu) throw FormatError(std::string(what) + " exceeds u32 range");
    return static_cast<std::uint32_t>(v);
}

inline int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Normalizes in place; returns the norm before normalization. Throws on NaN/Inf or zero norm.
inline double normalize_in_place(std::span<double> v, const std::string& label) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError("non-finite component in " + label);
    const double norm = l2_norm(v);
    if (!(norm > 0.0)) throw NumericError("zero-norm vector for " + label);
    if (std::abs(norm - 1.0) > kUnitSlack)
        for (double& x : v) x /= norm;
    return norm;
}

} // namespace detail

struct ModelEntry {
    std::string model_id;
    std::size_t dim = 0;
    std::string image_matrix_file;
    std::optional<std::string> text_bank_file;
    nlohmann::json provenance; // free-form; recorded by the extractor, echoed in reports
};

struct CorpusManifest {
    std::string corpus_id;
    std::vector<std::string> image_ids; // canonical order: image_index = position
    std::vector<ModelEntry> models;
    std::optional<std::string> axes_file;
    fs::path base_dir; // relative file names resolve against this

    std::size_t size() const { return image_ids.size(); }

    fs::path resolve(const std::string& file) const {
        fs::path p(file);
        return p.is_absolute() ? p : base_dir / p;
    }

    const ModelEntry* find_model(std::string_view model_id) const {
        auto it = std::find_if(models.begin(), models.end(), [&](const ModelEntry& m) { return m.model_id == model_id; });
        return it == models.end() ? nullptr : &*it;
    }

    std::vector<std::string> model_ids() const {
        std::vector<std::string> out;
        for (const auto& m : models) out.push_back(m.model_id);
        return out;
    }
};

/// Unit-normalized image embeddings of one model, rows in manifest order.
struct EmbeddingMatrix {
    std::string corpus_id;
    std::string model_id;
    std::size_t dim = 0;
    std::vector<std::string> image_ids;
    std::vector<double> values;    // rows() * dim, row-major
    std::vector<double> raw_norms; // norm of each row as stored on disk

    std::size_t rows() const { return image_ids.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) { return {values.data() + i * dim, dim}; }
};

struct TextBank {
    std::string model_id;
    std::size_t dim = 0;
    std::map<std::string, std::vector<double>, std::less<>> entries;

    const std::vector<double>* find(std::string_view phrase) const {
        auto it = entries.find(phrase);
        return it == entries.end() ? nullptr : &it->second;
    }
};

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json manifest_to_json(const CorpusManifest& m) {
    nlohmann::json j;
    j["corpus_id"] = m.corpus_id;
    j["image_ids"] = m.image_ids;
    j["models"] = nlohmann::json::array();
    for (const auto& e : m.models) {
        nlohmann::json je{{"model_id", e.model_id}, {"dim", e.dim}, {"image_matrix_file", e.image_matrix_file}};
        if (e.text_bank_file) je["text_bank_file"] = *e.text_bank_file;
        if (!e.provenance.is_null()) je["provenance"] = e.provenance;
        j["models"].push_back(std::move(je));
    }
    if (m.axes_file) j["axes_file"] = *m.axes_file;
    return j;
}

inline void write_manifest(const CorpusManifest& m, const fs::path& path) {
    const std::string text = manifest_to_json(m).dump(2) + "\n";
    detail::write_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

/// Parses and validates a manifest. Every validation problem found is listed in the
/// ValidationError message, one per line.
inline CorpusManifest load_manifest(const fs::path& path) {
    nlohmann::json j;
    {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open manifest " + path.string());
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }

    CorpusManifest m;
    m.base_dir = path.parent_path();
    std::vector<std::string> problems;
    try {
        if (!j.is_object()) throw ParseError(path.string() + ": manifest must be a JSON object");
        m.corpus_id = j.at("corpus_id").get<std::string>();
        m.image_ids = j.at("image_ids").get<std::vector<std::string>>();
        if (j.contains("axes_file") && !j["axes_file"].is_null()) m.axes_file = j["axes_file"].get<std::string>();
        for (const auto& jm : j.at("models")) {
            ModelEntry e;
            e.model_id = jm.at("model_id").get<std::string>();
            const auto dim = jm.at("dim").get<std::int64_t>();
            if (dim <= 0) {
                problems.push_back("model " + e.model_id + ": dim must be positive, got " + std::to_string(dim));
            } else {
                e.dim = static_cast<std::size_t>(dim);
            }
            e.image_matrix_file = jm.at("image_matrix_file").get<std::string>();
            if (jm.contains("text_bank_file") && !jm["text_bank_file"].is_null())
                e.text_bank_file = jm["text_bank_file"].get<std::string>();
            if (jm.contains("provenance")) e.provenance = jm["provenance"];
            m.models.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }

    std::set<std::string_view> seen;
    for (const auto& id : m.image_ids) {
        if (id.empty()) problems.push_back("empty image id");
        else if (!seen.insert(id).second) problems.push_back("duplicate image id: " + id);
    }
    if (m.image_ids.empty()) problems.push_back("manifest lists no images");
    if (m.models.empty()) problems.push_back("manifest lists no models");

    std::set<std::string_view> seen_models;
    for (const auto& e : m.models) {
        if (e.model_id.empty()) problems.push_back("empty model id");
        else if (!seen_models.insert(e.model_id).second) problems.push_back("duplicate model id: " + e.model_id);
        if (auto p = m.resolve(e.image_matrix_file); !fs::is_regular_file(p))
            problems.push_back("model " + e.model_id + ": missing matrix file " + p.string());
        if (e.text_bank_file)
            if (auto p = m.resolve(*e.text_bank_file); !fs::is_regular_file(p))
                problems.push_back("model " + e.model_id + ": missing text bank file " + p.string());
    }
    if (m.axes_file)
        if (auto p = m.resolve(*m.axes_file); !fs::is_regular_file(p)) problems.push_back("missing axes file " + p.string());

    if (!problems.empty()) {
        std::string msg = path.string() + ": invalid manifest";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Matrix files

struct RawMatrix {
    std::uint32_t rows = 0;
    std::uint32_t dim = 0;
    std::vector<float> values;
};

inline RawMatrix read_matrix_file(const fs::path& path) {
    const auto bytes = detail::read_bytes(path);
    detail::ByteReader r(bytes, path.string());
    auto magic = r.take(4);
    if (!std::equal(magic.begin(), magic.end(), kMatrixMagic))
        throw FormatError(path.string() + ": bad magic (expected LEVS)");
    if (auto v = r.u16(); v != kFormatVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(v));
    RawMatrix m;
    m.rows = r.u32();
    m.dim = r.u32();
    const std::size_t expected = std::size_t{m.rows} * m.dim * 4;
    if (r.remaining() != expected)
        throw FormatError(path.string() + ": payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                          std::to_string(expected));
    m.values.resize(std::size_t{m.rows} * m.dim);
    for (auto& v : m.values) v = r.f32();
    return m;
}

inline void write_matrix_file(const fs::path& path, std::size_t rows, std::size_t dim, std::span<const float> values) {
    if (values.size() != rows * dim) throw FormatError("matrix payload does not match rows*dim");
    detail::ByteWriter w;
    w.raw(kMatrixMagic);
    w.u16(kFormatVersion);
    w.u32(detail::checked_u32(rows, "rows"));
    w.u32(detail::checked_u32(dim, "dim"));
    for (float v : values) w.f32(v);
    detail::write_bytes(path, w.bytes());
}

/// Writes the matrix as float32; the inverse of load_embeddings for already-unit rows.
inline void write_matrix(const EmbeddingMatrix& m, const fs::path& path) {
    std::vector<float> values(m.values.begin(), m.values.end());
    write_matrix_file(path, m.rows(), m.dim, values);
}

/// Unit-normalizes every row in place. Already-unit rows (within kUnitSlack) are untouched.
inline void normalize_rows(EmbeddingMatrix& m) {
    m.raw_norms.resize(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        m.raw_norms[i] = detail::normalize_in_place(m.row(i), "image " + m.image_ids[i] + " (model " + m.model_id + ")");
}

inline EmbeddingMatrix load_embeddings(const CorpusManifest& manifest, std::string_view model_id) {
    const ModelEntry* entry = manifest.find_model(model_id);
    if (!entry) throw PreconditionError("model not in manifest: " + std::string(model_id));
    const fs::path path = manifest.resolve(entry->image_matrix_file);
    RawMatrix raw = read_matrix_file(path);
    if (raw.rows != manifest.size())
        throw FormatError(path.string() + ": " + std::to_string(raw.rows) + " rows, manifest lists " +
                          std::to_string(manifest.size()) + " images");
    if (raw.dim != entry->dim)
        throw FormatError(path.string() + ": dim " + std::to_string(raw.dim) + ", manifest declares " +
                          std::to_string(entry->dim));

    EmbeddingMatrix m;
    m.corpus_id = manifest.corpus_id;
    m.model_id = entry->model_id;
    m.dim = entry->dim;
    m.image_ids = manifest.image_ids;
    m.values.assign(raw.values.begin(), raw.values.end());
    normalize_rows(m);
    return m;
}

// ---------------------------------------------------------------------------
// Text banks

inline TextBank read_text_bank_file(const fs::path& path, std::string model_id) {
    const auto bytes = detail::read_bytes(path);
    detail::ByteReader r(bytes, path.string());
    auto magic = r.take(4);
    if (!std::equal(magic.begin(), magic.end(), kTextBankMagic))
        throw FormatError(path.string() + ": bad magic (expected LEVT)");
    if (auto v = r.u16(); v != kFormatVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(v));
    const std::uint32_t count = r.u32();
    TextBank bank;
    bank.model_id = std::move(model_id);
    bank.dim = r.u32();
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint32_t len = r.u32();
        auto text = r.take(len);
        std::string phrase(text.begin(), text.end());
        std::vector<double> vec(bank.dim);
        for (auto& x : vec) x = r.f32();
        detail::normalize_in_place(vec, "phrase \"" + phrase + "\" (model " + bank.model_id + ")");
        if (!bank.entries.emplace(phrase, std::move(vec)).second)
            throw FormatError(path.string() + ": duplicate phrase \"" + phrase + "\"");
    }
    if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes after last entry");
    return bank;
}

inline void write_text_bank(const TextBank& bank, const fs::path& path) {
    detail::ByteWriter w;
    w.raw(kTextBankMagic);
    w.u16(kFormatVersion);
    w.u32(detail::checked_u32(bank.entries.size(), "entry count"));
    w.u32(detail::checked_u32(bank.dim, "dim"));
    for (const auto& [phrase, vec] : bank.entries) {
        if (vec.size() != bank.dim) throw FormatError("phrase \"" + phrase + "\" has wrong dimension");
        w.u32(detail::checked_u32(phrase.size(), "phrase length"));
        w.raw(std::span<const char>(phrase.data(), phrase.size()));
        for (double x : vec) w.f32(static_cast<float>(x));
    }
    detail::write_bytes(path, w.bytes());
}

inline TextBank load_text_bank(const CorpusManifest& manifest, std::string_view model_id) {
    const ModelEntry* entry = manifest.find_model(model_id);
    if (!entry) throw PreconditionError("model not in manifest: " + std::string(model_id));
    if (!entry->text_bank_file) throw ValidationError("model " + entry->model_id + " has no text bank file");
    const fs::path path = manifest.resolve(*entry->text_bank_file);
    TextBank bank = read_text_bank_file(path, entry->model_id);
    if (bank.dim != entry->dim)
        throw FormatError(path.string() + ": dim " + std::to_string(bank.dim) + ", manifest declares " +
                          std::to_string(entry->dim));
    return bank;
}

// ---------------------------------------------------------------------------
// Alignment

/// Read-only view of several models' embeddings over one corpus, indexed by image.
class AlignedCorpus {
public:
    std::size_t size() const { return image_ids_.size(); }
    std::size_t model_count() const { return models_.size(); }
    const std::string& corpus_id() const { return models_.front().corpus_id; }
    const std::string& image_id(std::size_t i) const { return image_ids_[i]; }
    const std::vector<std::string>& image_ids() const { return image_ids_; }
    const EmbeddingMatrix& model(std::size_t k) const { return models_[k]; }
    const std::vector<EmbeddingMatrix>& models() const { return models_; }

    /// Row of image `i` from every model, in model order.
    std::vector<std::span<const double>> rows_at(std::size_t i) const {
        std::vector<std::span<const double>> out;
        out.reserve(models_.size());
        for (const auto& m : models_) out.push_back(m.row(i));
        return out;
    }

private:
    friend AlignedCorpus align(std::vector<EmbeddingMatrix> models);
    std::vector<EmbeddingMatrix> models_;
    std::vector<std::string> image_ids_;
};

inline AlignedCorpus align(std::vector<EmbeddingMatrix> models) {
    if (models.size() < 2) throw PreconditionError("align needs at least two embedding matrices");
    const auto& ref = models.front();
    for (const auto& m : models) {
        if (m.corpus_id != ref.corpus_id)
            throw AlignmentError("corpus mismatch: " + ref.model_id + " is from '" + ref.corpus_id + "', " +
                                 m.model_id + " is from '" + m.corpus_id + "'");
        if (m.image_ids != ref.image_ids)
            throw AlignmentError("image id lists differ between " + ref.model_id + " and " + m.model_id);
    }
    AlignedCorpus out;
    out.image_ids_ = ref.image_ids;
    out.models_ = std::move(models);
    return out;
}

} // namespace lev

#pragma once

#include "siimil/types.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace siimil {

static_assert(std::endian::native == std::endian::little,
              "SIIB/SIIM file I/O assumes a little-endian host");

class IoError : public Error {
public:
    enum class Kind {
        open_failed,
        bad_magic,
        bad_version,
        truncated,
        trailing_bytes,
        non_finite,
        bad_manifest,
        shape_mismatch,
    };

    IoError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T value;
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw IoError(IoError::Kind::truncated, std::string("unexpected end of file reading ") + what);
    return value;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline constexpr std::uint32_t kSiibVersion = 1;
inline constexpr std::uint32_t kSiibFlagCoords = 1u << 0;
inline constexpr std::uint32_t kSiibFlagLabels = 1u << 1;

// SIIB layout (little-endian): magic "SIIB", version u32, D u32, n u32,
// flags u32; then n*D f32 values instance-major (instance i's D components
// contiguous); then n*2 i32 coords if flag bit 0; then n u8 labels if bit 1.
inline void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    m.validate();
    // f32 is the storage precision; reject values that do not stay finite there
    for (Index j = 0; j < m.count(); ++j)
        for (Index i = 0; i < m.dim(); ++i)
            if (!std::isfinite(static_cast<float>(m.values(i, j))))
                throw IoError(IoError::Kind::non_finite, "embedding value not finite in f32 storage");

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(IoError::Kind::open_failed, "cannot open for writing: " + path.string());

    os.write("SIIB", 4);
    detail::write_pod<std::uint32_t>(os, kSiibVersion);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.dim()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.count()));
    std::uint32_t flags = 0;
    if (m.coords) flags |= kSiibFlagCoords;
    if (m.instance_labels) flags |= kSiibFlagLabels;
    detail::write_pod<std::uint32_t>(os, flags);

    for (Index j = 0; j < m.count(); ++j)
        for (Index i = 0; i < m.dim(); ++i)
            detail::write_pod<float>(os, static_cast<float>(m.values(i, j)));

    if (m.coords)
        for (const auto& rc : *m.coords) {
            detail::write_pod<std::int32_t>(os, rc[0]);
            detail::write_pod<std::int32_t>(os, rc[1]);
        }
    if (m.instance_labels)
        for (std::uint8_t l : *m.instance_labels) detail::write_pod<std::uint8_t>(os, l);

    os.flush();
    if (!os) throw IoError(IoError::Kind::open_failed, "write failed: " + path.string());
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Kind::open_failed, "cannot open: " + path.string());

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SIIB", 4) != 0)
        throw IoError(IoError::Kind::bad_magic, "not a SIIB file: " + path.string());
    const auto version = detail::read_pod<std::uint32_t>(is, "version");
    if (version != kSiibVersion)
        throw IoError(IoError::Kind::bad_version,
                      "unsupported SIIB version " + std::to_string(version));
    const auto dim = detail::read_pod<std::uint32_t>(is, "dim");
    const auto count = detail::read_pod<std::uint32_t>(is, "count");
    const auto flags = detail::read_pod<std::uint32_t>(is, "flags");
    if (dim == 0) throw IoError(IoError::Kind::bad_magic, "SIIB header has dim 0");

    EmbeddingMatrix m;
    m.values.resize(static_cast<Index>(dim), static_cast<Index>(count));
    for (std::uint32_t j = 0; j < count; ++j)
        for (std::uint32_t i = 0; i < dim; ++i) {
            const float v = detail::read_pod<float>(is, "embedding payload");
            if (!std::isfinite(v))
                throw IoError(IoError::Kind::non_finite, "non-finite embedding value in " + path.string());
            m.values(static_cast<Index>(i), static_cast<Index>(j)) = static_cast<double>(v);
        }

    if (flags & kSiibFlagCoords) {
        std::vector<std::array<std::int32_t, 2>> coords(count);
        for (auto& rc : coords) {
            rc[0] = detail::read_pod<std::int32_t>(is, "coords");
            rc[1] = detail::read_pod<std::int32_t>(is, "coords");
        }
        m.coords = std::move(coords);
    }
    if (flags & kSiibFlagLabels) {
        std::vector<std::uint8_t> labels(count);
        for (auto& l : labels) {
            l = detail::read_pod<std::uint8_t>(is, "instance labels");
            if (l > 1) throw IoError(IoError::Kind::bad_manifest, "instance label outside {0,1}");
        }
        m.instance_labels = std::move(labels);
    }

    if (is.peek() != std::char_traits<char>::eof())
        throw IoError(IoError::Kind::trailing_bytes, "trailing bytes after SIIB payload: " + path.string());
    return m;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

// Manifest CSV: header `bag_id,label,path`; relative paths resolve against
// the manifest's own directory.
inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError(IoError::Kind::open_failed, "cannot open manifest: " + path.string());

    std::string line;
    if (!std::getline(is, line))
        throw IoError(IoError::Kind::bad_manifest, "empty manifest: " + path.string());
    const auto header = detail::split_csv_line(line);
    if (header != std::vector<std::string>{"bag_id", "label", "path"})
        throw IoError(IoError::Kind::bad_manifest,
                      "manifest header must be `bag_id,label,path`: " + path.string());

    const auto base = path.parent_path();
    Manifest manifest;
    std::set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 3)
            throw IoError(IoError::Kind::bad_manifest,
                          "manifest line " + std::to_string(line_no) + ": expected 3 columns, got " +
                              std::to_string(fields.size()));
        BagRecord rec;
        rec.bag_id = fields[0];
        if (rec.bag_id.empty())
            throw IoError(IoError::Kind::bad_manifest,
                          "manifest line " + std::to_string(line_no) + ": empty bag_id");
        if (!seen.insert(rec.bag_id).second)
            throw IoError(IoError::Kind::bad_manifest, "duplicate bag_id: " + rec.bag_id);
        if (fields[1] == "0")
            rec.label = 0;
        else if (fields[1] == "1")
            rec.label = 1;
        else
            throw IoError(IoError::Kind::bad_manifest,
                          "manifest line " + std::to_string(line_no) + ": label must be 0 or 1, got `" +
                              fields[1] + "`");
        std::filesystem::path p = fields[2];
        rec.embedding_path = p.is_absolute() ? p : base / p;
        if (!std::filesystem::exists(rec.embedding_path))
            throw IoError(IoError::Kind::bad_manifest,
                          "manifest references missing file: " + rec.embedding_path.string());
        manifest.records.push_back(std::move(rec));
    }
    if (manifest.records.empty())
        throw IoError(IoError::Kind::bad_manifest, "manifest has no records: " + path.string());
    return manifest;
}

// Paths are written as given (synth and make-bags emit bare filenames so a
// dataset directory can be relocated or byte-compared across runs).
inline void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError(IoError::Kind::open_failed, "cannot open for writing: " + path.string());
    os << "bag_id,label,path\n";
    for (const auto& rec : manifest.records)
        os << rec.bag_id << ',' << rec.label << ',' << rec.embedding_path.generic_string() << '\n';
    os.flush();
    if (!os) throw IoError(IoError::Kind::open_failed, "write failed: " + path.string());
}

inline std::vector<LabeledEmbeddingBag> load_dataset(const std::filesystem::path& manifest_path) {
    const Manifest manifest = read_manifest(manifest_path);
    std::vector<LabeledEmbeddingBag> bags;
    bags.reserve(manifest.records.size());
    for (const auto& rec : manifest.records)
        bags.push_back({rec.bag_id, rec.label, read_embeddings(rec.embedding_path)});
    return bags;
}

}  // namespace siimil

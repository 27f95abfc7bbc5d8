#include "lag/store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace lag {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kOrthonormalTolerance = 1e-4;

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
    return v;
}

void check_id(const std::string& id) {
    if (id.empty() || id.find('/') != std::string::npos || id.find('\\') != std::string::npos ||
        id.front() == '.') {
        throw UsageError(fmt::format("adapter id '{}' cannot be used as a file name", id));
    }
}

std::string blob_name(const std::string& id, const char* role) {
    return fmt::format("blobs/{}.{}.f32", id, role);
}

void write_blob(const fs::path& path, const MatrixF& m) {
    std::string bytes(static_cast<std::size_t>(m.size()) * 4, '\0');
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(m.data()[i]);
        bits = to_little(bits);
        std::memcpy(bytes.data() + 4 * i, &bits, 4);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

MatrixF read_blob(const fs::path& dir, const std::string& rel, Eigen::Index rows, Eigen::Index cols,
                  const std::string& entry) {
    const fs::path rel_path(rel);
    bool escapes = rel_path.is_absolute();
    for (const auto& part : rel_path) escapes = escapes || part == "..";
    if (escapes) {
        throw LoadError(entry, fmt::format("blob path '{}' escapes the library directory", rel));
    }
    const fs::path path = dir / rel_path;
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw LoadError(entry, fmt::format("missing blob {}", rel));
    const auto expected = static_cast<std::uintmax_t>(rows * cols) * 4;
    if (size != expected) {
        throw LoadError(entry, fmt::format("blob {} has {} bytes, expected {} ({}x{} float32)", rel,
                                           size, expected, rows, cols));
    }
    std::ifstream in(path, std::ios::binary);
    std::string bytes(static_cast<std::size_t>(expected), '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw LoadError(entry, fmt::format("cannot read blob {}", rel));
    MatrixF m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, bytes.data() + 4 * i, 4);
        m.data()[i] = std::bit_cast<float>(to_little(bits));
    }
    if (!m.allFinite()) throw LoadError(entry, fmt::format("blob {} has non-finite values", rel));
    return m;
}

void write_manifest(const fs::path& dir, const json& manifest) {
    // nlohmann::json keeps object keys sorted.
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

json base_manifest(LibraryTag tag, bool aligned) {
    json j;
    j["format_version"] = kFormatVersion;
    j["tag"] = std::string(to_string(tag));
    j["aligned"] = aligned;
    j["entries"] = json::array();
    return j;
}

fs::path prepare(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir / "blobs", ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", (dir / "blobs").string(), ec.message()));
    return dir;
}

template <typename T>
T field(const json& e, const char* key, const std::string& entry) {
    if (!e.contains(key)) throw LoadError(entry, fmt::format("missing field '{}'", key));
    try {
        return e.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw LoadError(entry, fmt::format("field '{}': {}", key, ex.what()));
    }
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot open {} for writing", tmp.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError(fmt::format("write failed for {}", tmp.string()));
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError(fmt::format("cannot rename {} to {}: {}", tmp.string(), path.string(), ec.message()));
}

fs::path save_library(const AdapterLibrary& lib, const fs::path& dir) {
    prepare(dir);
    json manifest = base_manifest(lib.tag(), true);
    for (const auto& [layer_id, layer] : lib.layers()) {
        for (const auto& a : layer.adapters) {
            check_id(a.id);
            json e;
            e["id"] = a.id;
            e["layer"] = a.layer;
            e["m"] = a.m();
            e["n"] = a.n();
            e["r"] = a.r_eff();
            e["aligned"] = true;
            e["degenerate"] = false;
            e["singular_values"] = a.singular_values;
            e["blobs"] = {{"A_star", blob_name(a.id, "A_star")}, {"B_star", blob_name(a.id, "B_star")}};
            write_blob(dir / blob_name(a.id, "A_star"), a.A_star);
            write_blob(dir / blob_name(a.id, "B_star"), a.B_star);
            manifest["entries"].push_back(std::move(e));
        }
    }
    for (const auto& s : lib.skipped()) {
        json e;
        e["id"] = s.id;
        e["layer"] = s.layer;
        e["m"] = 0;
        e["n"] = 0;
        e["r"] = 0;
        e["aligned"] = true;
        e["degenerate"] = true;
        e["reason"] = s.reason;
        e["singular_values"] = json::array();
        e["blobs"] = json::object();
        manifest["entries"].push_back(std::move(e));
    }
    write_manifest(dir, manifest);
    return dir / "manifest.json";
}

fs::path save_library(const RawLibrary& lib, const fs::path& dir) {
    prepare(dir);
    json manifest = base_manifest(lib.tag, false);
    for (const auto& a : lib.adapters) {
        check_id(a.id);
        a.validate();
        const Dims d = a.dims();
        json e;
        e["id"] = a.id;
        e["layer"] = a.layer;
        e["m"] = d.m;
        e["n"] = d.n;
        e["r"] = d.r;
        e["aligned"] = false;
        e["degenerate"] = false;
        e["blobs"] = {{"A", blob_name(a.id, "A")}, {"B", blob_name(a.id, "B")}};
        write_blob(dir / blob_name(a.id, "A"), a.A);
        write_blob(dir / blob_name(a.id, "B"), a.B);
        manifest["entries"].push_back(std::move(e));
    }
    write_manifest(dir, manifest);
    return dir / "manifest.json";
}

std::variant<RawLibrary, AdapterLibrary> load_library(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError(fmt::format("cannot read {}", manifest_path.string()));
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& ex) {
        throw LoadError("", fmt::format("manifest is not valid JSON: {}", ex.what()));
    }

    const int version = field<int>(manifest, "format_version", "");
    if (version != kFormatVersion) {
        throw LoadError("", fmt::format("unsupported format_version {}", version));
    }
    LibraryTag tag;
    try {
        tag = parse_library_tag(field<std::string>(manifest, "tag", ""));
    } catch (const UsageError& ex) {
        throw LoadError("", ex.what());
    }
    const bool aligned = field<bool>(manifest, "aligned", "");
    if (!manifest.contains("entries") || !manifest["entries"].is_array()) {
        throw LoadError("", "manifest has no entries array");
    }

    std::set<std::string> ids;
    RawLibrary raw{tag, {}};
    std::vector<AlignedAdapter> kept;
    std::vector<SkippedAdapter> skipped;

    for (const auto& e : manifest["entries"]) {
        const auto id = field<std::string>(e, "id", "<unnamed>");
        if (!ids.insert(id).second) throw LoadError(id, "duplicate id");
        const auto layer = field<std::string>(e, "layer", id);
        const auto entry_aligned = field<bool>(e, "aligned", id);
        const auto degenerate = field<bool>(e, "degenerate", id);
        const auto m = field<std::int64_t>(e, "m", id);
        const auto n = field<std::int64_t>(e, "n", id);
        const auto r = field<std::int64_t>(e, "r", id);
        if (entry_aligned != aligned) throw LoadError(id, "aligned flag differs from the library's");

        if (degenerate) {
            if (!aligned) throw LoadError(id, "raw libraries cannot contain degenerate entries");
            skipped.push_back({id, layer, e.value("reason", std::string("degenerate"))});
            continue;
        }
        if (m < 1 || n < 1 || r < 1 || r > std::min(m, n)) {
            throw LoadError(id, fmt::format("invalid shape m={} n={} r={}", m, n, r));
        }
        if (!e.contains("blobs") || !e["blobs"].is_object()) throw LoadError(id, "missing blobs");
        const auto& blobs = e["blobs"];

        if (!aligned) {
            RawAdapter a;
            a.id = id;
            a.layer = layer;
            a.library_tag = tag;
            a.A = read_blob(dir, field<std::string>(blobs, "A", id), r, n, id);
            a.B = read_blob(dir, field<std::string>(blobs, "B", id), m, r, id);
            raw.adapters.push_back(std::move(a));
            continue;
        }

        AlignedAdapter a;
        a.id = id;
        a.layer = layer;
        a.library_tag = tag;
        a.A_star = read_blob(dir, field<std::string>(blobs, "A_star", id), r, n, id);
        a.B_star = read_blob(dir, field<std::string>(blobs, "B_star", id), m, r, id);
        a.singular_values = field<std::vector<float>>(e, "singular_values", id);
        if (a.singular_values.size() != static_cast<std::size_t>(r)) {
            throw LoadError(id, fmt::format("{} singular values for rank {}", a.singular_values.size(), r));
        }
        for (std::size_t j = 0; j < a.singular_values.size(); ++j) {
            const float s = a.singular_values[j];
            if (!(s > 0.0f) || !std::isfinite(s) || (j > 0 && s > a.singular_values[j - 1])) {
                throw LoadError(id, "singular values must be positive and descending");
            }
        }
        const Eigen::MatrixXd As = a.A_star.cast<double>();
        const Eigen::MatrixXd gram = As * As.transpose();
        const double dev = (gram - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff();
        if (dev > kOrthonormalTolerance) {
            throw LoadError(id, fmt::format("A_star rows are not orthonormal (max Gram deviation {:.3g})", dev));
        }
        kept.push_back(std::move(a));
    }

    if (!aligned) return raw;
    try {
        return AdapterLibrary::build(tag, std::move(kept), std::move(skipped));
    } catch (const Error& ex) {
        throw LoadError("", ex.what());
    }
}

RawLibrary load_raw_library(const fs::path& dir) {
    auto lib = load_library(dir);
    if (auto* raw = std::get_if<RawLibrary>(&lib)) return std::move(*raw);
    throw UsageError(fmt::format("{} holds an aligned library, expected raw adapters", dir.string()));
}

AdapterLibrary load_aligned_library(const fs::path& dir) {
    auto lib = load_library(dir);
    if (auto* aligned = std::get_if<AdapterLibrary>(&lib)) return std::move(*aligned);
    throw UsageError(fmt::format("{} holds a raw library, expected an aligned one", dir.string()));
}

}  // namespace lag

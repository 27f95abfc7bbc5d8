#pragma once
//
// On-disk adapter libraries.
//
//   <dir>/manifest.json                       canonical JSON, sorted keys
//   <dir>/blobs/<id>.<A|B|A_star|B_star>.f32  raw little-endian float32, row-major
//
// Manifest (format_version 1):
//   {"aligned": bool, "entries": [...], "format_version": 1, "tag": "task"|"knowledge"}
// Each entry:
//   {"aligned": bool, "blobs": {"A": path, "B": path} | {"A_star": path, "B_star": path} | {},
//    "degenerate": bool, "id": str, "layer": str, "m": int, "n": int, "r": int,
//    "singular_values": [float...]   (aligned entries only)}
// For aligned entries r is the effective rank; degenerate entries carry r = 0
// and no blobs.
//

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "lag/core.hpp"

namespace lag {

inline constexpr int kFormatVersion = 1;

struct RawLibrary {
    LibraryTag tag = LibraryTag::task;
    std::vector<RawAdapter> adapters;
};

// Load failure attributed to one manifest entry (empty entry for
// manifest-level problems).
class LoadError : public Error {
public:
    LoadError(std::string entry, const std::string& what)
        : Error(entry.empty() ? what : "entry '" + entry + "': " + what), entry_(std::move(entry)) {}
    const std::string& entry() const noexcept { return entry_; }

private:
    std::string entry_;
};

std::filesystem::path save_library(const AdapterLibrary& lib, const std::filesystem::path& dir);
std::filesystem::path save_library(const RawLibrary& lib, const std::filesystem::path& dir);

// Validates shapes, blob sizes and (for aligned entries) row orthonormality
// within 1e-4 before returning. Throws IoError when the manifest cannot be
// read and LoadError for invalid content.
std::variant<RawLibrary, AdapterLibrary> load_library(const std::filesystem::path& dir);

RawLibrary load_raw_library(const std::filesystem::path& dir);
AdapterLibrary load_aligned_library(const std::filesystem::path& dir);

// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace lag

#include "lag/core.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

namespace lag {

std::string_view to_string(LibraryTag tag) noexcept {
    switch (tag) {
    case LibraryTag::task:
        return "task";
    case LibraryTag::knowledge:
        return "knowledge";
    }
    return "task";
}

LibraryTag parse_library_tag(std::string_view s) {
    if (s == "task") return LibraryTag::task;
    if (s == "knowledge") return LibraryTag::knowledge;
    throw UsageError(fmt::format("unknown library tag '{}' (expected task or knowledge)", s));
}

void Dims::validate() const {
    if (m < 1 || n < 1 || r < 1) {
        throw ShapeError(fmt::format("dimensions must be >= 1 (m={}, n={}, r={})", m, n, r));
    }
    if (r > std::min(m, n)) {
        throw ShapeError(fmt::format("rank {} exceeds min(m, n) = {}", r, std::min(m, n)));
    }
}

bool all_finite(const MatrixF& m) noexcept { return m.allFinite(); }
bool all_finite(const VectorF& v) noexcept { return v.allFinite(); }

void RawAdapter::validate() const {
    if (A.rows() != B.cols()) {
        throw ShapeError(fmt::format("adapter '{}': A has {} rows but B has {} columns", id,
                                     A.rows(), B.cols()));
    }
    dims().validate();
    if (!all_finite(A) || !all_finite(B)) {
        throw NumericInputError(fmt::format("adapter '{}': non-finite factor entries", id));
    }
}

void RoutingConfig::validate() const {
    if (k < 1) throw UsageError("k must be >= 1");
    if (!(svd_tolerance >= 0.0)) throw UsageError("svd tolerance must be >= 0");
}

AdapterLibrary AdapterLibrary::build(LibraryTag tag, std::vector<AlignedAdapter> adapters,
                                     std::vector<SkippedAdapter> skipped) {
    AdapterLibrary lib(tag);
    std::unordered_set<std::string> ids;
    for (const auto& s : skipped) ids.insert(s.id);
    for (auto& a : adapters) {
        if (a.library_tag != tag) {
            throw UsageError(fmt::format("adapter '{}' is tagged {} but library is {}", a.id,
                                         to_string(a.library_tag), to_string(tag)));
        }
        if (a.degenerate()) {
            throw UsageError(fmt::format("adapter '{}' is degenerate and cannot be routed", a.id));
        }
        if (!ids.insert(a.id).second) {
            throw UsageError(fmt::format("duplicate adapter id '{}'", a.id));
        }
        auto& layer = lib.layers_[a.layer];
        if (!layer.adapters.empty() && layer.adapters.front().n() != a.n()) {
            throw ShapeError(fmt::format("adapter '{}' has n={} but layer '{}' uses n={}", a.id,
                                         a.n(), a.layer, layer.adapters.front().n()));
        }
        layer.adapters.push_back(std::move(a));
    }
    for (auto& [name, layer] : lib.layers_) {
        const auto n = static_cast<Eigen::Index>(layer.adapters.front().n());
        layer.arrows.resize(static_cast<Eigen::Index>(layer.adapters.size()), n);
        for (std::size_t i = 0; i < layer.adapters.size(); ++i) {
            layer.arrows.row(static_cast<Eigen::Index>(i)) = layer.adapters[i].arrow();
        }
    }
    lib.skipped_ = std::move(skipped);
    return lib;
}

const LayerLibrary* AdapterLibrary::find(std::string_view layer) const {
    auto it = layers_.find(layer);
    return it == layers_.end() ? nullptr : &it->second;
}

std::size_t AdapterLibrary::adapter_count() const noexcept {
    std::size_t total = 0;
    for (const auto& [_, layer] : layers_) total += layer.size();
    return total;
}

}  // namespace lag

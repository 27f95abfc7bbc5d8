#pragma once
//
// Per-token, per-layer routing: arrow top-k filter, SpectR rerank over the
// candidates, then additive application of one adapter per library.
//

#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <tuple>

#include "lag/arrow_index.hpp"
#include "lag/core.hpp"
#include "lag/spectral.hpp"

namespace lag {

// Instrumented FLOPs (a multiply-add counts as 2).
struct FlopCount {
    std::uint64_t arrow = 0;
    std::uint64_t spectral = 0;
    std::uint64_t apply = 0;

    std::uint64_t total() const noexcept { return arrow + spectral + apply; }
    FlopCount& operator+=(const FlopCount& o) noexcept {
        arrow += o.arrow;
        spectral += o.spectral;
        apply += o.apply;
        return *this;
    }
    bool operator==(const FlopCount&) const = default;
};

// Non-owning view of the libraries available to the router.
struct Libraries {
    const AdapterLibrary* task = nullptr;
    const AdapterLibrary* knowledge = nullptr;
};

struct LibraryRoute {
    LibraryTag tag = LibraryTag::task;
    std::string adapter_id;
    CandidateSet candidates;
    Selection selection;
    std::vector<double> arrow_scores;  // only when requested
    FlopCount flops;
};

// One entry per library covering the layer; empty means the base layer
// passes through unmodified.
struct TokenRoute {
    std::vector<LibraryRoute> routes;

    bool passthrough() const noexcept { return routes.empty(); }
    FlopCount flops() const noexcept;
};

TokenRoute route_token(const TokenVector& x, std::string_view layer, const Libraries& libs,
                       const RoutingConfig& cfg, bool keep_arrow_scores = false);

// h = W·x + sum over routes of B_star·projected. Adds the application cost
// to `flops` when given.
VectorF apply(const TokenVector& x, const MatrixF& W, const TokenRoute& route,
              std::string_view layer, const Libraries& libs, FlopCount* flops = nullptr);

// Plain Arrow routing: argmax of |arrow·x|, lowest index on ties.
std::size_t arrow_select(const TokenVector& x, const LayerLibrary& layer);

// Exhaustive SpectR over the whole layer library.
Selection spectr_select(const TokenVector& x, const LayerLibrary& layer);

struct TraceEntry {
    std::size_t token = 0;
    std::string layer;
    LibraryTag tag = LibraryTag::task;
    std::vector<double> arrow_scores;
    CandidateSet candidates;
    std::vector<double> spectral_scores;
    std::size_t selected_index = 0;
    std::string selected_id;
    FlopCount flops;
};

// Ordered by (token, layer, tag). append() may be called concurrently;
// readers must not run concurrently with writers.
class RouteTrace {
public:
    using Key = std::tuple<std::size_t, std::string, int>;

    RouteTrace();

    void append(TraceEntry entry);
    const std::map<Key, TraceEntry>& entries() const noexcept { return entries_; }
    const TraceEntry* find(std::size_t token, std::string_view layer, LibraryTag tag) const;
    std::size_t size() const noexcept { return entries_.size(); }
    FlopCount total_flops() const noexcept;

    // Distinct adapters selected across the sequence for one (layer, library).
    std::set<std::string> selected_working_set(std::string_view layer, LibraryTag tag) const;
    // Distinct adapters that entered a candidate set, i.e. had to be resident.
    std::set<std::size_t> loaded_working_set(std::string_view layer, LibraryTag tag) const;

private:
    std::unique_ptr<std::mutex> mutex_;
    std::map<Key, TraceEntry> entries_;
};

struct SequenceOptions {
    std::size_t threads = 0;  // 0 = hardware concurrency
    bool keep_arrow_scores = false;
};

struct SequenceResult {
    std::vector<std::vector<VectorF>> outputs;  // [token][layer]
    RouteTrace trace;
};

// Routes every token at every layer independently. `inputs[t][l]` is the
// input of token t to layers[l]. Arrow scores are computed batched per
// layer; decisions equal the per-token route_token loop.
SequenceResult route_sequence(const std::vector<std::vector<TokenVector>>& inputs,
                              std::span<const LayerSpec> layers, const Libraries& libs,
                              const RoutingConfig& cfg, const SequenceOptions& options = {});

}  // namespace lag

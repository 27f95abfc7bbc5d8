#pragma once
//
// Synthetic planted-subspace benchmark. Every adapter owns a known row
// subspace; every token is generated from a known owner, so routing ground
// truth is exact.
//

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lag/core.hpp"
#include "lag/router.hpp"
#include "lag/store.hpp"

namespace lag {

enum class PlantingMode {
    orthogonal,  // mutually orthogonal subspaces, needs n_adapters·r <= hidden
    random,      // independent random subspaces, any library size
};

enum class Method { arrow, spectr, lag };

std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view s);
std::string_view to_string(PlantingMode mode) noexcept;
PlantingMode parse_planting_mode(std::string_view s);

struct BenchmarkParams {
    std::size_t n_adapters = 100;
    std::size_t hidden = 64;
    std::size_t task_rank = 8;
    std::size_t knowledge_rank = 6;
    std::size_t layers = 2;  // even layers take task adapters, odd layers knowledge adapters
    std::size_t tokens = 128;
    double epsilon = 0.0;          // fraction of token energy outside the owner's subspace
    double spectrum_decay = 0.5;   // planted singular values are decay^i
    PlantingMode mode = PlantingMode::random;
    std::uint64_t seed = 1;

    void validate() const;
};

struct PlantedBenchmark {
    BenchmarkParams params;
    std::vector<LayerSpec> layers;
    RawLibrary task_raw;
    RawLibrary knowledge_raw;
    AdapterLibrary task;
    AdapterLibrary knowledge;
    // planted_basis[layer][adapter]: hidden x r orthonormal basis of the row subspace
    std::vector<std::vector<Eigen::MatrixXd>> planted_basis;
    std::vector<std::vector<TokenVector>> inputs;  // [token][layer]
    std::vector<std::size_t> task_owner;           // per token
    std::vector<std::size_t> knowledge_owner;      // per token

    Libraries libraries() const noexcept { return {&task, &knowledge}; }
    LibraryTag layer_library(std::size_t layer) const noexcept;
    std::size_t layer_rank(std::size_t layer) const noexcept;
    std::size_t ground_truth(std::size_t token, std::size_t layer) const noexcept;
};

// Deterministic under params.seed. Throws CapacityError when orthogonal
// planting cannot fit n_adapters subspaces.
PlantedBenchmark generate_benchmark(const BenchmarkParams& params);

struct EvalOptions {
    std::size_t spectr_budget = 256;  // exhaustive SpectR refused above this library size
    bool allow_large_spectr = false;
    std::size_t threads = 0;
};

struct GroupResult {
    std::string layer;
    LibraryTag tag = LibraryTag::task;
    std::size_t rank = 0;
    std::size_t decisions = 0;
    std::size_t correct = 0;
    std::size_t contained = 0;
    double accuracy = 0.0;
    double containment = 0.0;  // ground truth inside the candidate set
    std::uint64_t flops_per_token = 0;
    std::vector<std::size_t> selected;  // per token
};

struct EvalResult {
    Method method = Method::lag;
    std::size_t k = 1;
    std::vector<GroupResult> groups;  // one per layer
    double accuracy = 0.0;
    double containment = 0.0;
    std::uint64_t flops_per_token = 0;  // summed over layers
};

EvalResult evaluate(const PlantedBenchmark& bench, Method method, const RoutingConfig& cfg,
                    const EvalOptions& options = {});

// LAG evaluated at each k.
std::vector<EvalResult> sweep_k(const PlantedBenchmark& bench, std::span<const std::size_t> k_values,
                                const RoutingConfig& cfg, const EvalOptions& options = {});

// CSV columns: method,k,epsilon,n_adapters,seed,layer,library,accuracy,containment,flops_per_token
// One row per layer plus an aggregate row (layer = library = "all").
std::string csv_header();
std::string csv_rows(const PlantedBenchmark& bench, const EvalResult& result);

}  // namespace lag

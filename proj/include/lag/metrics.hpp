#pragma once
//
// Normalized task scores and the closed-form storage / FLOP cost model.
//

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lag/router.hpp"

namespace lag {

// One dataset's score for a model M next to the reference (oracle) model R.
struct DatasetScore {
    std::string model;  // optional grouping column, may be empty
    std::string dataset;
    std::string task;
    std::uint64_t size = 0;
    double score = 0.0;
    double reference = 0.0;
};

// S_T = sum_D (|D| / |T|) · f_D(M) / f_D(R), as a percentage, with |T| the
// total number of samples across the task's datasets.
double normalized_task_score(std::span<const DatasetScore> scores);

struct TaskScore {
    std::string task;
    double score = 0.0;
    std::uint64_t samples = 0;
};

struct ModelScores {
    std::string model;
    std::vector<TaskScore> tasks;  // first-appearance order
    double average = 0.0;          // unweighted mean over tasks
    double weighted_average = 0.0; // weighted by task sample count
};

std::vector<ModelScores> score_table(std::span<const DatasetScore> scores);

// Columns: dataset, task, size, score, reference, and optionally model.
std::vector<DatasetScore> read_scores_csv(std::istream& in);
std::string format_score_table(const std::vector<ModelScores>& table);

struct MethodCost {
    std::uint64_t arrow = 0;
    std::uint64_t spectr = 0;
    std::uint64_t lag = 0;
};

// Parameters and FLOPs for a library of n rank-r adapters on a layer of
// hidden size h with top-k filtering.
struct CostReport {
    std::uint64_t n = 0;
    std::uint64_t h = 0;
    std::uint64_t r = 0;
    std::uint64_t k = 0;
    std::uint64_t requested_k = 0;
    bool k_clamped = false;
    MethodCost disk;
    MethodCost gpu_best;
    MethodCost flops;

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

// k > n is clamped to n (k_clamped is set).
CostReport cost_model(std::uint64_t n, std::uint64_t h, std::uint64_t r, std::uint64_t k);

// Exact FLOPs the router counts for one token on one library: arrow scoring
// (skipped when k >= n_adapters), k projections of rank r, one application.
std::uint64_t predicted_route_flops(std::uint64_t n_adapters, std::uint64_t n, std::uint64_t m,
                                    std::uint64_t r, std::uint64_t k);

struct CostDims {
    std::uint64_t n_adapters = 0;
    std::uint64_t h = 0;
    std::uint64_t r = 0;
    std::uint64_t k = 0;
};

struct FlopCheck {
    std::size_t entries = 0;
    double counted_per_entry = 0.0;
    double arrow_per_entry = 0.0;
    double spectral_per_entry = 0.0;
    double apply_per_entry = 0.0;
    std::uint64_t expected = 0;
    std::string formula;
    double relative_deviation = 0.0;
    bool ok = false;

    std::string report() const;
};

// Compares the trace's mean per-(token, layer, library) FLOPs against the
// closed form: 2h(n + rk), or 2nhr once k covers the whole library.
FlopCheck measured_flops_check(const RouteTrace& trace, const CostDims& dims,
                               double tolerance = 0.05);

}  // namespace lag

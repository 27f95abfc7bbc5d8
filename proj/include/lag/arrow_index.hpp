#pragma once

#include <span>

#include "lag/core.hpp"

namespace lag {

// Result of the arrow filter: library indices in descending arrow-score
// order. When the filter is bypassed (k covers the whole layer) `filtered`
// is false, indices are 0..N-1 and `scores` is empty.
struct CandidateSet {
    std::vector<std::size_t> indices;
    std::vector<double> scores;
    bool filtered = true;

    std::size_t size() const noexcept { return indices.size(); }
    bool empty() const noexcept { return indices.empty(); }
    bool contains(std::size_t index) const noexcept;
};

// |arrow_i · x| for every row of the packed arrow matrix.
std::vector<double> arrow_scores(const TokenVector& x, const MatrixF& arrows);

// Scores for many tokens at once; row t equals arrow_scores(xs[t], arrows)
// bit for bit.
std::vector<std::vector<double>> arrow_scores_batched(std::span<const TokenVector> xs,
                                                      const MatrixF& arrows);

// The min(k, size) largest scores, ties broken by lowest index.
CandidateSet topk(std::span<const double> scores, std::size_t k,
                  TieBreak tie_break = TieBreak::lowest_index);

// Arrow storage cost of one layer, in parameters.
inline std::size_t arrow_parameter_count(const LayerLibrary& layer) noexcept {
    return static_cast<std::size_t>(layer.arrows.size());
}

}  // namespace lag

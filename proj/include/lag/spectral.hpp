#pragma once

#include <span>

#include "lag/arrow_index.hpp"
#include "lag/core.hpp"

namespace lag {

struct SpectralScore {
    double score = 0.0;   // ||A_star·x||_2
    VectorD projected;    // A_star·x, length r_eff
};

// Winner of the rerank stage. `projected` is kept so the adapter can be
// applied without recomputing A_star·x.
struct Selection {
    std::size_t adapter_index = 0;
    double spectr_score = 0.0;
    VectorD projected;
    std::vector<double> candidate_scores;  // aligned with the candidate set order
};

SpectralScore spectr_score(const AlignedAdapter& adapter, const TokenVector& x);

// Throws RoutingError on an empty candidate set.
Selection rerank(const CandidateSet& candidates, std::span<const AlignedAdapter> layer_adapters,
                 const TokenVector& x, TieBreak tie_break = TieBreak::lowest_index);

}  // namespace lag

#include "lag/spectral.hpp"

#include <cmath>

#include <fmt/format.h>

#include "detail/kernels.hpp"

namespace lag {

SpectralScore spectr_score(const AlignedAdapter& adapter, const TokenVector& x) {
    if (static_cast<std::size_t>(x.size()) != adapter.n()) {
        throw ShapeError(fmt::format("adapter '{}' expects length {} but token has {}", adapter.id,
                                     adapter.n(), x.size()));
    }
    const auto r = static_cast<Eigen::Index>(adapter.r_eff());
    const auto n = adapter.n();
    SpectralScore out;
    out.projected.resize(r);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
        const double p = detail::dot_f64(adapter.A_star.row(i).data(), x.data(), n);
        out.projected(i) = p;
        sq += p * p;
    }
    out.score = std::sqrt(sq);
    return out;
}

Selection rerank(const CandidateSet& candidates, std::span<const AlignedAdapter> layer_adapters,
                 const TokenVector& x, TieBreak) {
    if (candidates.empty()) {
        throw RoutingError("empty candidate set (library empty or fully degenerate)");
    }
    Selection best;
    best.candidate_scores.reserve(candidates.size());
    bool have = false;
    for (const auto index : candidates.indices) {
        if (index >= layer_adapters.size()) {
            throw RoutingError(fmt::format("candidate index {} outside library of {}", index,
                                           layer_adapters.size()));
        }
        SpectralScore s = spectr_score(layer_adapters[index], x);
        best.candidate_scores.push_back(s.score);
        if (!have || s.score > best.spectr_score ||
            (s.score == best.spectr_score && index < best.adapter_index)) {
            best.adapter_index = index;
            best.spectr_score = s.score;
            best.projected = std::move(s.projected);
            have = true;
        }
    }
    return best;
}

}  // namespace lag

#pragma once

#include <optional>
#include <span>

#include "lag/core.hpp"

namespace lag {

// Thin SVD of a low-rank product, truncated to singular values above
// tol·sigma_1. Columns of U and V are orthonormal.
struct SvdResult {
    Eigen::MatrixXd U;  // m x r_eff
    Eigen::VectorXd S;  // r_eff, descending, positive
    Eigen::MatrixXd V;  // n x r_eff

    std::size_t r_eff() const noexcept { return static_cast<std::size_t>(S.size()); }
};

// SVD of B·A (B: m x r, A: r x n) without forming the m x n product: QR of
// B and A^T, then a dense SVD of the r x r core R_B·R_A^T.
SvdResult svd_rank_r(const MatrixF& B, const MatrixF& A, double tol);

// Rewrites (B, A) as (U·S, V^T). Each A_star row is signed so that its
// largest-magnitude entry is positive. A zero product yields a degenerate
// adapter (r_eff = 0) rather than an error.
AlignedAdapter align(const RawAdapter& adapter, const RoutingConfig& cfg);

// Aligns a whole library. Degenerate adapters are dropped and listed in the
// library's skip report. `tag` names the library when `adapters` is empty.
AdapterLibrary align_library(std::span<const RawAdapter> adapters, const RoutingConfig& cfg,
                             std::optional<LibraryTag> tag = std::nullopt,
                             std::size_t threads = 0);

}  // namespace lag

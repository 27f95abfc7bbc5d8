#include "lag/arrow_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "detail/kernels.hpp"

namespace lag {

bool CandidateSet::contains(std::size_t index) const noexcept {
    return std::find(indices.begin(), indices.end(), index) != indices.end();
}

namespace {

void check_width(const TokenVector& x, const MatrixF& arrows) {
    if (x.size() != arrows.cols()) {
        throw ShapeError(fmt::format("token has length {} but arrows have width {}", x.size(),
                                     arrows.cols()));
    }
}

constexpr Eigen::Index kRowBlock = 64;

}  // namespace

std::vector<double> arrow_scores(const TokenVector& x, const MatrixF& arrows) {
    check_width(x, arrows);
    const auto n = static_cast<std::size_t>(arrows.cols());
    std::vector<double> out(static_cast<std::size_t>(arrows.rows()));
    for (Eigen::Index i = 0; i < arrows.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = std::abs(detail::dot_f64(arrows.row(i).data(), x.data(), n));
    }
    return out;
}

std::vector<std::vector<double>> arrow_scores_batched(std::span<const TokenVector> xs,
                                                      const MatrixF& arrows) {
    for (const auto& x : xs) check_width(x, arrows);
    const auto n = static_cast<std::size_t>(arrows.cols());
    const auto rows = arrows.rows();
    std::vector<std::vector<double>> out(xs.size(), std::vector<double>(static_cast<std::size_t>(rows)));
    // Block over arrow rows so each block stays in cache across tokens.
    for (Eigen::Index begin = 0; begin < rows; begin += kRowBlock) {
        const Eigen::Index end = std::min(rows, begin + kRowBlock);
        for (std::size_t t = 0; t < xs.size(); ++t) {
            const float* x = xs[t].data();
            auto& dst = out[t];
            for (Eigen::Index i = begin; i < end; ++i) {
                dst[static_cast<std::size_t>(i)] = std::abs(detail::dot_f64(arrows.row(i).data(), x, n));
            }
        }
    }
    return out;
}

CandidateSet topk(std::span<const double> scores, std::size_t k, TieBreak) {
    if (k < 1) throw UsageError("k must be >= 1");
    const std::size_t take = std::min(k, scores.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    if (scores.size() > 4 * take) {
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                         order.end(), better);
        std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), better);
    } else {
        std::sort(order.begin(), order.end(), better);
    }
    order.resize(take);

    CandidateSet out;
    out.indices = std::move(order);
    out.scores.reserve(take);
    for (auto i : out.indices) out.scores.push_back(scores[i]);
    return out;
}

}  // namespace lag

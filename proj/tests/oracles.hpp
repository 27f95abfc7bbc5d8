#pragma once
//
// Independent reference computations for the test suites. Nothing here
// calls into the routing engine's numeric paths.
//

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lag/core.hpp"

namespace lag::oracle {

inline Eigen::MatrixXd product(const MatrixF& B, const MatrixF& A) {
    return B.cast<double>() * A.cast<double>();
}

struct DenseSvd {
    Eigen::MatrixXd U;
    Eigen::VectorXd S;
    Eigen::MatrixXd V;
};

// Full divide-and-conquer SVD of the materialized product.
inline DenseSvd dense_svd(const Eigen::MatrixXd& M) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

// Largest principal angle between the column spans of two orthonormal bases.
inline double max_principal_angle(const Eigen::MatrixXd& Q1, const Eigen::MatrixXd& Q2) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Q1.transpose() * Q2);
    const double c = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
    return std::acos(c);
}

inline double relative_frobenius(const Eigen::MatrixXd& approx, const Eigen::MatrixXd& exact) {
    return (approx - exact).norm() / exact.norm();
}

inline double row_gram_deviation(const MatrixF& rows) {
    const Eigen::MatrixXd R = rows.cast<double>();
    return (R * R.transpose() - Eigen::MatrixXd::Identity(R.rows(), R.rows())).cwiseAbs().maxCoeff();
}

inline double arrow_score(const Eigen::Ref<const Eigen::RowVectorXf>& arrow, const TokenVector& x) {
    return std::abs(arrow.cast<double>().dot(x.cast<double>().transpose()));
}

// Full stable sort by score descending; equal scores keep index order.
inline std::vector<std::size_t> sorted_indices(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    return idx;
}

inline double spectral_norm_of_projection(const AlignedAdapter& a, const TokenVector& x) {
    return (a.A_star.cast<double>() * x.cast<double>()).norm();
}

// Exhaustive SpectR restricted to `indices`; strict improvement keeps the
// earliest maximum in ascending index order.
inline std::size_t exhaustive_spectr(const std::vector<AlignedAdapter>& adapters,
                                     std::vector<std::size_t> indices, const TokenVector& x) {
    std::sort(indices.begin(), indices.end());
    std::size_t best = indices.front();
    double best_score = -1.0;
    for (auto i : indices) {
        const auto& a = adapters[i];
        double sq = 0.0;
        for (Eigen::Index row = 0; row < a.A_star.rows(); ++row) {
            double p = 0.0;
            for (Eigen::Index j = 0; j < a.A_star.cols(); ++j) {
                p += static_cast<double>(a.A_star(row, j)) * static_cast<double>(x(j));
            }
            sq += p * p;
        }
        const double s = std::sqrt(sq);
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

inline MatrixF gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                               double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    MatrixF m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<float>(normal(rng));
    return m;
}

inline TokenVector gaussian_vector(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    TokenVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = static_cast<float>(normal(rng));
    return v;
}

inline Eigen::VectorXd unit_vector(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v.normalized();
}

inline RawAdapter random_adapter(std::mt19937_64& rng, std::string id, std::string layer,
                                 Eigen::Index m, Eigen::Index n, Eigen::Index r,
                                 LibraryTag tag = LibraryTag::task) {
    RawAdapter a;
    a.id = std::move(id);
    a.layer = std::move(layer);
    a.library_tag = tag;
    a.B = gaussian_matrix(rng, m, r, 1.0 / std::sqrt(static_cast<double>(m)));
    a.A = gaussian_matrix(rng, r, n, 1.0 / std::sqrt(static_cast<double>(n)));
    return a;
}

}  // namespace lag::oracle

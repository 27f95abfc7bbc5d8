#include "lag/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "detail/kernels.hpp"

namespace lag {

namespace {

struct ThinQr {
    Eigen::MatrixXd Q;  // rows x cols
    Eigen::MatrixXd R;  // cols x cols, upper triangular
};

ThinQr thin_qr(const Eigen::MatrixXd& M) {
    const auto rows = M.rows();
    const auto cols = M.cols();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    ThinQr out;
    out.Q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    out.R = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    return out;
}

}  // namespace

SvdResult svd_rank_r(const MatrixF& B, const MatrixF& A, double tol) {
    if (!(tol >= 0.0)) throw UsageError("svd tolerance must be >= 0");
    if (B.cols() != A.rows()) {
        throw ShapeError(fmt::format("B is {}x{} but A is {}x{}", B.rows(), B.cols(), A.rows(),
                                     A.cols()));
    }
    const auto m = B.rows();
    const auto n = A.cols();
    const auto r = A.rows();
    if (r < 1 || m < 1 || n < 1 || r > std::min(m, n)) {
        throw ShapeError(fmt::format("rank {} invalid for a {}x{} product", r, m, n));
    }
    if (!B.allFinite() || !A.allFinite()) {
        throw NumericInputError("non-finite entries in adapter factors");
    }

    const ThinQr qb = thin_qr(B.cast<double>());
    const ThinQr qa = thin_qr(A.transpose().cast<double>());
    const Eigen::MatrixXd core = qb.R * qa.R.transpose();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd& sigma = svd.singularValues();

    Eigen::Index keep = 0;
    const double sigma1 = sigma.size() > 0 ? sigma(0) : 0.0;
    if (sigma1 > 0.0) {
        const double cutoff = tol * sigma1;
        while (keep < sigma.size() && sigma(keep) > cutoff && sigma(keep) > 0.0) ++keep;
    }

    SvdResult out;
    out.S = sigma.head(keep);
    out.U = qb.Q * svd.matrixU().leftCols(keep);
    out.V = qa.Q * svd.matrixV().leftCols(keep);
    return out;
}

AlignedAdapter align(const RawAdapter& adapter, const RoutingConfig& cfg) {
    adapter.validate();
    SvdResult svd = svd_rank_r(adapter.B, adapter.A, cfg.svd_tolerance);

    const auto r_eff = static_cast<Eigen::Index>(svd.r_eff());
    for (Eigen::Index j = 0; j < r_eff; ++j) {
        Eigen::Index pivot = 0;
        svd.V.col(j).cwiseAbs().maxCoeff(&pivot);
        if (svd.V(pivot, j) < 0.0) {
            svd.V.col(j) = -svd.V.col(j);
            svd.U.col(j) = -svd.U.col(j);
        }
    }

    AlignedAdapter out;
    out.id = adapter.id;
    out.layer = adapter.layer;
    out.library_tag = adapter.library_tag;
    out.A_star = svd.V.transpose().cast<float>();
    out.B_star = (svd.U * svd.S.asDiagonal()).cast<float>();
    out.singular_values.resize(static_cast<std::size_t>(r_eff));
    for (Eigen::Index j = 0; j < r_eff; ++j) {
        out.singular_values[static_cast<std::size_t>(j)] = static_cast<float>(svd.S(j));
    }
    if (r_eff == 0) {
        out.A_star.resize(0, adapter.A.cols());
        out.B_star.resize(adapter.B.rows(), 0);
    }
    return out;
}

AdapterLibrary align_library(std::span<const RawAdapter> adapters, const RoutingConfig& cfg,
                             std::optional<LibraryTag> tag, std::size_t threads) {
    cfg.validate();
    if (adapters.empty()) return AdapterLibrary(tag.value_or(LibraryTag::task));

    const LibraryTag lib_tag = tag.value_or(adapters.front().library_tag);
    std::set<std::string, std::less<>> ids;
    std::map<std::string, std::size_t, std::less<>> layer_n;
    for (const auto& a : adapters) {
        if (a.library_tag != lib_tag) {
            throw UsageError(fmt::format("adapter '{}' is tagged {} in a {} library", a.id,
                                         to_string(a.library_tag), to_string(lib_tag)));
        }
        if (!ids.insert(a.id).second) {
            throw UsageError(fmt::format("duplicate adapter id '{}'", a.id));
        }
        const auto n = static_cast<std::size_t>(a.A.cols());
        auto [it, inserted] = layer_n.emplace(a.layer, n);
        if (!inserted && it->second != n) {
            throw ShapeError(fmt::format("adapter '{}' has n={} but layer '{}' uses n={}", a.id, n,
                                         a.layer, it->second));
        }
    }

    std::vector<AlignedAdapter> aligned(adapters.size());
    detail::parallel_for(adapters.size(), threads == 0 ? detail::default_threads() : threads,
                         [&](std::size_t i) { aligned[i] = align(adapters[i], cfg); });

    std::vector<AlignedAdapter> kept;
    std::vector<SkippedAdapter> skipped;
    kept.reserve(aligned.size());
    for (auto& a : aligned) {
        if (a.degenerate()) {
            skipped.push_back({a.id, a.layer, "zero product (no singular value above tolerance)"});
        } else {
            kept.push_back(std::move(a));
        }
    }
    return AdapterLibrary::build(lib_tag, std::move(kept), std::move(skipped));
}

}  // namespace lag

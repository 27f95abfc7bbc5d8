#pragma once
//
// Shared domain types for the adapter routing engine.
//
// Matrices are stored row-major in 32-bit floats. Adapter shapes follow
// A: r x n (input side), B: m x r (output side), so B·A is m x n and acts
// on an input vector x of length n.
//

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace lag {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;
using VectorD = Eigen::VectorXd;

// A single position's input representation to one layer.
using TokenVector = VectorF;

// ---------------------------------------------------------------------------
// errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericInputError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class RoutingError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class InternalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    CapacityError(const std::string& what, std::size_t feasible_max)
        : Error(what), feasible_max_(feasible_max) {}
    std::size_t feasible_max() const noexcept { return feasible_max_; }

private:
    std::size_t feasible_max_;
};

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

enum class LibraryTag { task, knowledge };

std::string_view to_string(LibraryTag tag) noexcept;
LibraryTag parse_library_tag(std::string_view s);

enum class TieBreak { lowest_index };

struct Dims {
    std::size_t m = 0;  // output dimension, rows of B
    std::size_t n = 0;  // input dimension, columns of A
    std::size_t r = 0;  // adapter rank

    bool square() const noexcept { return m == n; }
    // hidden size of a square layer
    std::size_t h() const noexcept { return n; }

    void validate() const;
};

struct RawAdapter {
    std::string id;
    std::string layer;
    LibraryTag library_tag = LibraryTag::task;
    MatrixF A;  // r x n
    MatrixF B;  // m x r

    Dims dims() const noexcept {
        return {static_cast<std::size_t>(B.rows()), static_cast<std::size_t>(A.cols()),
                static_cast<std::size_t>(A.rows())};
    }

    // Throws ShapeError on inconsistent factors, NumericInputError on NaN/Inf.
    void validate() const;
};

// Spectrally aligned adapter: B_star = U·S, A_star = V^T. The arrow vector
// is row 0 of A_star and is never stored separately.
struct AlignedAdapter {
    std::string id;
    std::string layer;
    LibraryTag library_tag = LibraryTag::task;
    MatrixF A_star;                     // r_eff x n, orthonormal rows
    MatrixF B_star;                     // m x r_eff
    std::vector<float> singular_values; // r_eff, descending

    std::size_t r_eff() const noexcept { return static_cast<std::size_t>(A_star.rows()); }
    std::size_t n() const noexcept { return static_cast<std::size_t>(A_star.cols()); }
    std::size_t m() const noexcept { return static_cast<std::size_t>(B_star.rows()); }
    bool degenerate() const noexcept { return r_eff() == 0; }

    auto arrow() const { return A_star.row(0); }
};

struct SkippedAdapter {
    std::string id;
    std::string layer;
    std::string reason;

    bool operator==(const SkippedAdapter&) const = default;
};

// All aligned adapters of one library attached to a single layer, plus the
// packed arrow matrix whose row i is adapter i's arrow.
struct LayerLibrary {
    std::vector<AlignedAdapter> adapters;
    MatrixF arrows;  // n_adapters x n

    std::size_t size() const noexcept { return adapters.size(); }
    std::size_t n() const noexcept { return static_cast<std::size_t>(arrows.cols()); }
};

using LayerMap = std::map<std::string, LayerLibrary, std::less<>>;

class AdapterLibrary {
public:
    AdapterLibrary() = default;
    explicit AdapterLibrary(LibraryTag tag) : tag_(tag) {}

    // Groups adapters by layer, preserving their order, and packs the arrow
    // matrices. Degenerate adapters must already be filtered out.
    static AdapterLibrary build(LibraryTag tag, std::vector<AlignedAdapter> adapters,
                                std::vector<SkippedAdapter> skipped = {});

    LibraryTag tag() const noexcept { return tag_; }
    const LayerMap& layers() const noexcept { return layers_; }
    const LayerLibrary* find(std::string_view layer) const;
    const std::vector<SkippedAdapter>& skipped() const noexcept { return skipped_; }

    std::size_t adapter_count() const noexcept;
    bool empty() const noexcept { return layers_.empty(); }

private:
    LibraryTag tag_ = LibraryTag::task;
    LayerMap layers_;
    std::vector<SkippedAdapter> skipped_;
};

struct RoutingConfig {
    std::size_t k = 20;
    TieBreak tie_break = TieBreak::lowest_index;
    double svd_tolerance = 1e-7;  // relative to sigma_1

    void validate() const;
};

// A frozen linear layer together with the libraries that target it.
struct LayerSpec {
    std::string id;
    MatrixF W;  // m x n
    bool task = false;
    bool knowledge = false;
};

bool all_finite(const MatrixF& m) noexcept;
bool all_finite(const VectorF& v) noexcept;

}  // namespace lag

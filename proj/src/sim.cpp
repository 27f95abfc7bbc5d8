#include "lag/sim.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "lag/linalg.hpp"
#include "lag/metrics.hpp"

namespace lag {

namespace {

using Rng = std::mt19937_64;

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

// Haar-ish random orthonormal columns.
Eigen::MatrixXd random_orthonormal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(rng, rows, cols));
    return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

std::string layer_name(std::size_t l, LibraryTag tag) {
    return fmt::format("layer{:02}.{}", l, tag == LibraryTag::task ? "attn" : "ffn");
}

// unique within a library even when several layers share it
std::string adapter_name(LibraryTag tag, std::size_t layer, std::size_t j) {
    return fmt::format("{}-{:02}-{:04}", tag == LibraryTag::task ? "task" : "know", layer, j);
}

}  // namespace

std::string_view to_string(Method method) noexcept {
    switch (method) {
    case Method::arrow:
        return "arrow";
    case Method::spectr:
        return "spectr";
    case Method::lag:
        return "lag";
    }
    return "lag";
}

Method parse_method(std::string_view s) {
    if (s == "arrow") return Method::arrow;
    if (s == "spectr") return Method::spectr;
    if (s == "lag") return Method::lag;
    throw UsageError(fmt::format("unknown method '{}' (expected arrow, spectr or lag)", s));
}

std::string_view to_string(PlantingMode mode) noexcept {
    return mode == PlantingMode::orthogonal ? "orthogonal" : "random";
}

PlantingMode parse_planting_mode(std::string_view s) {
    if (s == "orthogonal") return PlantingMode::orthogonal;
    if (s == "random") return PlantingMode::random;
    throw UsageError(fmt::format("unknown planting mode '{}' (expected orthogonal or random)", s));
}

void BenchmarkParams::validate() const {
    if (n_adapters < 1) throw UsageError("n_adapters must be >= 1");
    if (layers < 1) throw UsageError("layers must be >= 1");
    if (tokens < 1) throw UsageError("tokens must be >= 1");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw UsageError("epsilon must lie in [0, 1)");
    if (!(spectrum_decay > 0.0 && spectrum_decay <= 1.0)) {
        throw UsageError("spectrum decay must lie in (0, 1]");
    }
    const bool uses_knowledge = layers > 1;
    for (const auto r : {task_rank, uses_knowledge ? knowledge_rank : task_rank}) {
        Dims{hidden, hidden, r}.validate();
        if (mode == PlantingMode::orthogonal && n_adapters * r > hidden) {
            throw CapacityError(
                fmt::format("orthogonal planting of {} rank-{} subspaces needs hidden >= {} (have {}); "
                            "at most {} adapters fit",
                            n_adapters, r, n_adapters * r, hidden, hidden / r),
                hidden / r);
        }
    }
}

LibraryTag PlantedBenchmark::layer_library(std::size_t layer) const noexcept {
    return layer % 2 == 0 ? LibraryTag::task : LibraryTag::knowledge;
}

std::size_t PlantedBenchmark::layer_rank(std::size_t layer) const noexcept {
    return layer_library(layer) == LibraryTag::task ? params.task_rank : params.knowledge_rank;
}

std::size_t PlantedBenchmark::ground_truth(std::size_t token, std::size_t layer) const noexcept {
    return layer_library(layer) == LibraryTag::task ? task_owner[token] : knowledge_owner[token];
}

PlantedBenchmark generate_benchmark(const BenchmarkParams& params) {
    params.validate();
    PlantedBenchmark b;
    b.params = params;
    b.task_raw.tag = LibraryTag::task;
    b.knowledge_raw.tag = LibraryTag::knowledge;

    Rng rng(params.seed);
    std::uniform_real_distribution<double> log_scale(-1.0, 1.0);
    const auto h = static_cast<Eigen::Index>(params.hidden);
    const std::size_t N = params.n_adapters;

    for (std::size_t l = 0; l < params.layers; ++l) {
        const LibraryTag tag = b.layer_library(l);
        const auto r = static_cast<Eigen::Index>(b.layer_rank(l));

        LayerSpec spec;
        spec.id = layer_name(l, tag);
        spec.W = (gaussian(rng, h, h) / std::sqrt(static_cast<double>(h))).cast<float>();
        spec.task = tag == LibraryTag::task;
        spec.knowledge = tag == LibraryTag::knowledge;

        Eigen::VectorXd sigma(r);
        for (Eigen::Index i = 0; i < r; ++i) sigma(i) = std::pow(params.spectrum_decay, static_cast<double>(i));

        Eigen::MatrixXd shared;
        if (params.mode == PlantingMode::orthogonal) shared = random_orthonormal(rng, h, h);

        auto& bases = b.planted_basis.emplace_back();
        auto& raw = tag == LibraryTag::task ? b.task_raw : b.knowledge_raw;
        for (std::size_t j = 0; j < N; ++j) {
            Eigen::MatrixXd V = params.mode == PlantingMode::orthogonal
                                    ? Eigen::MatrixXd(shared.middleCols(static_cast<Eigen::Index>(j) * r, r))
                                    : random_orthonormal(rng, h, r);
            const Eigen::MatrixXd U = random_orthonormal(rng, h, r);
            // Hide the aligned form behind a random rotation and rescaling;
            // B·A = U·diag(sigma)·V^T either way.
            const Eigen::MatrixXd mix = random_orthonormal(rng, r, r);
            const double c = std::exp(log_scale(rng));

            RawAdapter a;
            a.id = adapter_name(tag, l, j);
            a.layer = spec.id;
            a.library_tag = tag;
            a.B = (U * sigma.asDiagonal() * mix.transpose() / c).cast<float>();
            a.A = (c * mix * V.transpose()).cast<float>();
            raw.adapters.push_back(std::move(a));
            bases.push_back(std::move(V));
        }
        b.layers.push_back(std::move(spec));
    }

    RoutingConfig cfg;
    b.task = align_library(b.task_raw.adapters, cfg, LibraryTag::task);
    b.knowledge = align_library(b.knowledge_raw.adapters, cfg, LibraryTag::knowledge);

    std::uniform_int_distribution<std::size_t> owner(0, N - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double in_weight = std::sqrt(1.0 - params.epsilon);
    const double out_weight = std::sqrt(params.epsilon);
    b.inputs.resize(params.tokens);
    for (std::size_t t = 0; t < params.tokens; ++t) {
        b.task_owner.push_back(owner(rng));
        b.knowledge_owner.push_back(owner(rng));
        for (std::size_t l = 0; l < params.layers; ++l) {
            const Eigen::MatrixXd& V = b.planted_basis[l][b.ground_truth(t, l)];
            const auto r = V.cols();
            // Coefficients follow the planted spectrum, like inputs the
            // adapter was fit on.
            Eigen::VectorXd coef(r);
            for (Eigen::Index i = 0; i < r; ++i) coef(i) = normal(rng) * std::pow(params.spectrum_decay, static_cast<double>(i));
            Eigen::VectorXd x_in = V * coef;
            x_in.normalize();

            Eigen::VectorXd g = gaussian(rng, h, 1);
            g -= V * (V.transpose() * g);
            g.normalize();

            const Eigen::VectorXd x = params.epsilon == 0.0 ? x_in : Eigen::VectorXd(in_weight * x_in + out_weight * g);
            b.inputs[t].push_back(x.cast<float>());
        }
    }
    return b;
}

EvalResult evaluate(const PlantedBenchmark& bench, Method method, const RoutingConfig& cfg,
                    const EvalOptions& options) {
    cfg.validate();
    const std::size_t N = bench.params.n_adapters;
    if (method == Method::spectr && N > options.spectr_budget && !options.allow_large_spectr) {
        throw UsageError(fmt::format(
            "exhaustive SpectR over {} adapters exceeds the budget of {}; pass the override to run it",
            N, options.spectr_budget));
    }

    EvalResult out;
    out.method = method;
    out.k = method == Method::arrow ? 1 : method == Method::spectr ? N : std::min(cfg.k, N);

    const Libraries libs = bench.libraries();
    std::optional<SequenceResult> routed;
    if (method == Method::lag) {
        SequenceOptions so;
        so.threads = options.threads;
        routed = route_sequence(bench.inputs, bench.layers, libs, cfg, so);
    }

    const std::size_t T = bench.inputs.size();
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t contained = 0;
    for (std::size_t l = 0; l < bench.layers.size(); ++l) {
        const LayerSpec& spec = bench.layers[l];
        const LibraryTag tag = bench.layer_library(l);
        const AdapterLibrary& lib = tag == LibraryTag::task ? bench.task : bench.knowledge;
        const LayerLibrary* layer = lib.find(spec.id);
        if (!layer) throw RoutingError(fmt::format("no adapters for layer '{}'", spec.id));

        GroupResult g;
        g.layer = spec.id;
        g.tag = tag;
        g.rank = bench.layer_rank(l);
        g.selected.resize(T);
        for (std::size_t t = 0; t < T; ++t) {
            const TokenVector& x = bench.inputs[t][l];
            const std::size_t truth = bench.ground_truth(t, l);
            bool in_candidates = false;
            switch (method) {
            case Method::arrow:
                g.selected[t] = arrow_select(x, *layer);
                in_candidates = g.selected[t] == truth;
                break;
            case Method::spectr:
                g.selected[t] = spectr_select(x, *layer).adapter_index;
                in_candidates = true;
                break;
            case Method::lag: {
                const TraceEntry* e = routed->trace.find(t, spec.id, tag);
                g.selected[t] = e->selected_index;
                in_candidates = e->candidates.contains(truth);
                break;
            }
            }
            g.correct += g.selected[t] == truth ? 1 : 0;
            g.contained += in_candidates ? 1 : 0;
        }
        g.decisions = T;
        g.accuracy = static_cast<double>(g.correct) / static_cast<double>(T);
        g.containment = static_cast<double>(g.contained) / static_cast<double>(T);

        const CostReport cost = cost_model(N, bench.params.hidden, g.rank, out.k);
        switch (method) {
        case Method::arrow:
            g.flops_per_token = cost.flops.arrow;
            break;
        case Method::spectr:
            g.flops_per_token = cost.flops.spectr;
            break;
        case Method::lag:
            g.flops_per_token = cost.k >= N ? cost.flops.spectr : cost.flops.lag;
            break;
        }

        total += g.decisions;
        correct += g.correct;
        contained += g.contained;
        out.flops_per_token += g.flops_per_token;
        out.groups.push_back(std::move(g));
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    out.containment = static_cast<double>(contained) / static_cast<double>(total);
    return out;
}

std::vector<EvalResult> sweep_k(const PlantedBenchmark& bench, std::span<const std::size_t> k_values,
                                const RoutingConfig& cfg, const EvalOptions& options) {
    for (const auto k : k_values) {
        if (k < 1 || k > bench.params.n_adapters) {
            throw UsageError(fmt::format("k = {} outside [1, {}]", k, bench.params.n_adapters));
        }
    }
    std::vector<EvalResult> out;
    for (const auto k : k_values) {
        RoutingConfig c = cfg;
        c.k = k;
        out.push_back(evaluate(bench, Method::lag, c, options));
    }
    return out;
}

std::string csv_header() {
    return "method,k,epsilon,n_adapters,seed,layer,library,accuracy,containment,flops_per_token\n";
}

std::string csv_rows(const PlantedBenchmark& bench, const EvalResult& result) {
    const auto& p = bench.params;
    std::string out;
    const auto row = [&](std::string_view layer, std::string_view library, double acc, double cont,
                         std::uint64_t flops) {
        out += fmt::format("{},{},{:.6g},{},{},{},{},{:.6g},{:.6g},{}\n", to_string(result.method),
                           result.k, p.epsilon, p.n_adapters, p.seed, layer, library, acc, cont, flops);
    };
    for (const auto& g : result.groups) {
        row(g.layer, to_string(g.tag), g.accuracy, g.containment, g.flops_per_token);
    }
    row("all", "all", result.accuracy, result.containment, result.flops_per_token);
    return out;
}

}  // namespace lag

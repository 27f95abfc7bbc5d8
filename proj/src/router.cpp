#include "lag/router.hpp"

#include <cmath>

#include <fmt/format.h>

#include "detail/kernels.hpp"

namespace lag {

namespace {

const AdapterLibrary* library_for(const Libraries& libs, LibraryTag tag) {
    return tag == LibraryTag::task ? libs.task : libs.knowledge;
}

constexpr LibraryTag kRouteOrder[] = {LibraryTag::task, LibraryTag::knowledge};

void check_token(const TokenVector& x) {
    if (!all_finite(x)) throw NumericInputError("token vector has non-finite entries");
}

// k covering the whole layer bypasses the arrow stage: no filtering occurs.
bool filters(const LayerLibrary& layer, const RoutingConfig& cfg) {
    return cfg.k < layer.size();
}

LibraryRoute route_library(const LayerLibrary& layer, LibraryTag tag, const TokenVector& x,
                           const RoutingConfig& cfg, const std::vector<double>* precomputed,
                           bool keep_arrow_scores) {
    if (layer.size() == 0) throw RoutingError("layer library has no routable adapters");
    if (static_cast<std::size_t>(x.size()) != layer.n()) {
        throw ShapeError(fmt::format("token has length {} but layer expects {}", x.size(), layer.n()));
    }
    LibraryRoute out;
    out.tag = tag;
    const auto n = static_cast<std::uint64_t>(layer.n());
    if (filters(layer, cfg)) {
        std::vector<double> scores = precomputed ? *precomputed : arrow_scores(x, layer.arrows);
        out.flops.arrow = 2 * static_cast<std::uint64_t>(layer.size()) * n;
        out.candidates = topk(scores, cfg.k, cfg.tie_break);
        if (keep_arrow_scores) out.arrow_scores = std::move(scores);
    } else {
        out.candidates.filtered = false;
        out.candidates.indices.resize(layer.size());
        for (std::size_t i = 0; i < layer.size(); ++i) out.candidates.indices[i] = i;
    }
    out.selection = rerank(out.candidates, layer.adapters, x, cfg.tie_break);
    for (const auto i : out.candidates.indices) {
        out.flops.spectral += 2 * static_cast<std::uint64_t>(layer.adapters[i].r_eff()) * n;
    }
    out.adapter_id = layer.adapters[out.selection.adapter_index].id;
    return out;
}

}  // namespace

FlopCount TokenRoute::flops() const noexcept {
    FlopCount total;
    for (const auto& r : routes) total += r.flops;
    return total;
}

TokenRoute route_token(const TokenVector& x, std::string_view layer, const Libraries& libs,
                       const RoutingConfig& cfg, bool keep_arrow_scores) {
    cfg.validate();
    check_token(x);
    TokenRoute out;
    for (const auto tag : kRouteOrder) {
        const AdapterLibrary* lib = library_for(libs, tag);
        if (!lib) continue;
        const LayerLibrary* layer_lib = lib->find(layer);
        if (!layer_lib) continue;
        out.routes.push_back(route_library(*layer_lib, tag, x, cfg, nullptr, keep_arrow_scores));
    }
    return out;
}

VectorF apply(const TokenVector& x, const MatrixF& W, const TokenRoute& route,
              std::string_view layer, const Libraries& libs, FlopCount* flops) {
    if (W.cols() != x.size()) {
        throw ShapeError(fmt::format("W is {}x{} but token has length {}", W.rows(), W.cols(), x.size()));
    }
    const auto m = static_cast<std::size_t>(W.rows());
    const auto n = static_cast<std::size_t>(W.cols());

    std::vector<const AlignedAdapter*> winners;
    for (const auto& r : route.routes) {
        const AdapterLibrary* lib = library_for(libs, r.tag);
        const LayerLibrary* layer_lib = lib ? lib->find(layer) : nullptr;
        if (!layer_lib || r.selection.adapter_index >= layer_lib->size()) {
            throw InternalError(fmt::format("route for '{}' does not match library state", layer));
        }
        const AlignedAdapter& a = layer_lib->adapters[r.selection.adapter_index];
        if (static_cast<std::size_t>(r.selection.projected.size()) != a.r_eff() || a.m() != m) {
            throw InternalError(fmt::format("stale projection for adapter '{}': {} values, rank {}",
                                            a.id, r.selection.projected.size(), a.r_eff()));
        }
        winners.push_back(&a);
    }

    VectorF h(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        double acc = detail::dot_f64(W.row(row).data(), x.data(), n);
        for (std::size_t w = 0; w < winners.size(); ++w) {
            acc += detail::dot_f64(winners[w]->B_star.row(row).data(),
                                   route.routes[w].selection.projected.data(), winners[w]->r_eff());
        }
        h(row) = static_cast<float>(acc);
    }
    if (flops) {
        for (const auto* a : winners) flops->apply += 2 * static_cast<std::uint64_t>(m * a->r_eff());
    }
    return h;
}

std::size_t arrow_select(const TokenVector& x, const LayerLibrary& layer) {
    if (layer.size() == 0) throw RoutingError("layer library has no routable adapters");
    const auto scores = arrow_scores(x, layer.arrows);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

Selection spectr_select(const TokenVector& x, const LayerLibrary& layer) {
    if (layer.size() == 0) throw RoutingError("layer library has no routable adapters");
    Selection best;
    for (std::size_t i = 0; i < layer.size(); ++i) {
        SpectralScore s = spectr_score(layer.adapters[i], x);
        best.candidate_scores.push_back(s.score);
        if (i == 0 || s.score > best.spectr_score) {
            best.adapter_index = i;
            best.spectr_score = s.score;
            best.projected = std::move(s.projected);
        }
    }
    return best;
}

RouteTrace::RouteTrace() : mutex_(std::make_unique<std::mutex>()) {}

void RouteTrace::append(TraceEntry entry) {
    Key key{entry.token, entry.layer, static_cast<int>(entry.tag)};
    std::lock_guard lock(*mutex_);
    entries_.insert_or_assign(std::move(key), std::move(entry));
}

const TraceEntry* RouteTrace::find(std::size_t token, std::string_view layer, LibraryTag tag) const {
    auto it = entries_.find(Key{token, std::string(layer), static_cast<int>(tag)});
    return it == entries_.end() ? nullptr : &it->second;
}

FlopCount RouteTrace::total_flops() const noexcept {
    FlopCount total;
    for (const auto& [_, e] : entries_) total += e.flops;
    return total;
}

std::set<std::string> RouteTrace::selected_working_set(std::string_view layer, LibraryTag tag) const {
    std::set<std::string> out;
    for (const auto& [_, e] : entries_) {
        if (e.layer == layer && e.tag == tag) out.insert(e.selected_id);
    }
    return out;
}

std::set<std::size_t> RouteTrace::loaded_working_set(std::string_view layer, LibraryTag tag) const {
    std::set<std::size_t> out;
    for (const auto& [_, e] : entries_) {
        if (e.layer == layer && e.tag == tag) out.insert(e.candidates.indices.begin(), e.candidates.indices.end());
    }
    return out;
}

SequenceResult route_sequence(const std::vector<std::vector<TokenVector>>& inputs,
                              std::span<const LayerSpec> layers, const Libraries& libs,
                              const RoutingConfig& cfg, const SequenceOptions& options) {
    cfg.validate();
    const std::size_t tokens = inputs.size();
    for (std::size_t t = 0; t < tokens; ++t) {
        if (inputs[t].size() != layers.size()) {
            throw ShapeError(fmt::format("token {} has {} layer inputs, expected {}", t,
                                         inputs[t].size(), layers.size()));
        }
        for (const auto& x : inputs[t]) check_token(x);
    }
    const std::size_t threads = options.threads == 0 ? detail::default_threads() : options.threads;

    SequenceResult result;
    result.outputs.assign(tokens, std::vector<VectorF>(layers.size()));

    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerSpec& spec = layers[l];

        struct Active {
            LibraryTag tag;
            const LayerLibrary* layer;
            std::vector<std::vector<double>> scores;  // [token], empty when unfiltered
        };
        std::vector<Active> active;
        for (const auto tag : kRouteOrder) {
            const AdapterLibrary* lib = library_for(libs, tag);
            const LayerLibrary* layer_lib = lib ? lib->find(spec.id) : nullptr;
            if (!layer_lib) continue;
            Active a{tag, layer_lib, {}};
            if (filters(*layer_lib, cfg)) {
                std::vector<TokenVector> column;
                column.reserve(tokens);
                for (std::size_t t = 0; t < tokens; ++t) column.push_back(inputs[t][l]);
                a.scores = arrow_scores_batched(column, layer_lib->arrows);
            }
            active.push_back(std::move(a));
        }

        detail::parallel_for(tokens, threads, [&](std::size_t t) {
            const TokenVector& x = inputs[t][l];
            TokenRoute route;
            for (const auto& a : active) {
                const std::vector<double>* pre = a.scores.empty() ? nullptr : &a.scores[t];
                route.routes.push_back(
                    route_library(*a.layer, a.tag, x, cfg, pre, options.keep_arrow_scores));
            }
            result.outputs[t][l] = apply(x, spec.W, route, spec.id, libs);
            for (std::size_t i = 0; i < route.routes.size(); ++i) {
                auto& r = route.routes[i];
                const auto& winner = active[i].layer->adapters[r.selection.adapter_index];
                r.flops.apply = 2 * static_cast<std::uint64_t>(winner.m() * winner.r_eff());

                TraceEntry e;
                e.token = t;
                e.layer = spec.id;
                e.tag = r.tag;
                e.arrow_scores = std::move(r.arrow_scores);
                e.spectral_scores = r.selection.candidate_scores;
                e.candidates = std::move(r.candidates);
                e.selected_index = r.selection.adapter_index;
                e.selected_id = r.adapter_id;
                e.flops = r.flops;
                result.trace.append(std::move(e));
            }
        });
    }
    return result;
}

}  // namespace lag

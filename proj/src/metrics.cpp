#include "lag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace lag {

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(a, b, &out)) throw DomainError("cost model overflow");
    return out;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out = 0;
    if (__builtin_add_overflow(a, b, &out)) throw DomainError("cost model overflow");
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

double normalized_task_score(std::span<const DatasetScore> scores) {
    if (scores.empty()) throw DomainError("no datasets for task");
    const std::string& task = scores.front().task;
    std::uint64_t total = 0;
    for (const auto& d : scores) {
        if (d.task != task) {
            throw DomainError(fmt::format("dataset '{}' belongs to task '{}', not '{}'", d.dataset,
                                          d.task, task));
        }
        if (d.size < 1) throw DomainError(fmt::format("dataset '{}' has size 0", d.dataset));
        if (!(d.reference > 0.0)) {
            throw DomainError(fmt::format("dataset '{}' has non-positive reference score", d.dataset));
        }
        total += d.size;
    }
    double s = 0.0;
    for (const auto& d : scores) {
        s += (static_cast<double>(d.size) / static_cast<double>(total)) * (d.score / d.reference);
    }
    return 100.0 * s;
}

std::vector<ModelScores> score_table(std::span<const DatasetScore> scores) {
    std::vector<std::string> model_order;
    std::map<std::string, std::vector<std::string>> task_order;
    std::map<std::pair<std::string, std::string>, std::vector<DatasetScore>> groups;
    for (const auto& d : scores) {
        if (std::find(model_order.begin(), model_order.end(), d.model) == model_order.end()) {
            model_order.push_back(d.model);
        }
        auto& tasks = task_order[d.model];
        if (std::find(tasks.begin(), tasks.end(), d.task) == tasks.end()) tasks.push_back(d.task);
        groups[{d.model, d.task}].push_back(d);
    }

    std::vector<ModelScores> out;
    for (const auto& model : model_order) {
        ModelScores ms;
        ms.model = model;
        std::uint64_t samples = 0;
        double weighted = 0.0;
        for (const auto& task : task_order[model]) {
            const auto& g = groups[{model, task}];
            TaskScore ts{task, normalized_task_score(g), 0};
            for (const auto& d : g) ts.samples += d.size;
            ms.average += ts.score;
            weighted += ts.score * static_cast<double>(ts.samples);
            samples += ts.samples;
            ms.tasks.push_back(std::move(ts));
        }
        ms.average /= static_cast<double>(ms.tasks.size());
        ms.weighted_average = weighted / static_cast<double>(samples);
        out.push_back(std::move(ms));
    }
    return out;
}

std::vector<DatasetScore> read_scores_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw UsageError("score CSV is empty");
    const auto header = split_csv(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"dataset", "task", "size", "score", "reference"}) {
        if (!col.contains(required)) {
            throw UsageError(fmt::format("score CSV is missing column '{}'", required));
        }
    }
    const bool has_model = col.contains("model");

    std::vector<DatasetScore> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw UsageError(fmt::format("score CSV line {}: expected {} fields, got {}", line_no,
                                         header.size(), cells.size()));
        }
        DatasetScore d;
        try {
            if (has_model) d.model = cells[col["model"]];
            d.dataset = cells[col["dataset"]];
            d.task = cells[col["task"]];
            const long long size = std::stoll(cells[col["size"]]);
            if (size < 1) throw DomainError("size must be >= 1");
            d.size = static_cast<std::uint64_t>(size);
            d.score = std::stod(cells[col["score"]]);
            d.reference = std::stod(cells[col["reference"]]);
        } catch (const std::logic_error& e) {
            throw UsageError(fmt::format("score CSV line {}: {}", line_no, e.what()));
        } catch (const DomainError& e) {
            throw UsageError(fmt::format("score CSV line {}: {}", line_no, e.what()));
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::string format_score_table(const std::vector<ModelScores>& table) {
    std::string out;
    for (const auto& ms : table) {
        out += fmt::format("{:<10}", ms.model.empty() ? "-" : ms.model);
        for (const auto& t : ms.tasks) out += fmt::format(" {:>8}", t.task);
        out += fmt::format(" {:>8} {:>8}\n", "AVG", "wAVG");
        out += fmt::format("{:<10}", "");
        for (const auto& t : ms.tasks) out += fmt::format(" {:>8.1f}", t.score);
        out += fmt::format(" {:>8.1f} {:>8.1f}\n", ms.average, ms.weighted_average);
    }
    return out;
}

CostReport cost_model(std::uint64_t n, std::uint64_t h, std::uint64_t r, std::uint64_t k) {
    if (n < 1 || h < 1 || r < 1 || k < 1) {
        throw DomainError(fmt::format("cost model needs positive n, h, r, k (got {}, {}, {}, {})",
                                      n, h, r, k));
    }
    CostReport c;
    c.n = n;
    c.h = h;
    c.r = r;
    c.requested_k = k;
    c.k_clamped = k > n;
    c.k = std::min(k, n);

    const std::uint64_t lora = mul(2, mul(n, mul(h, r)));  // 2nhr
    const std::uint64_t arrows = mul(n, h);                 // nh
    const std::uint64_t resident = mul(2, mul(c.k, mul(h, r)));

    c.disk = {add(lora, arrows), lora, lora};
    c.gpu_best = {add(resident, arrows), lora, add(resident, arrows)};
    // k = n skips the arrow pass, same as the router
    const std::uint64_t lag_flops = c.k == n ? lora : mul(2, mul(h, add(n, mul(r, c.k))));
    c.flops = {mul(2, arrows), lora, lag_flops};
    return c;
}

nlohmann::ordered_json CostReport::to_json() const {
    nlohmann::ordered_json j;
    j["n"] = n;
    j["h"] = h;
    j["r"] = r;
    j["k"] = k;
    if (k_clamped) {
        j["requested_k"] = requested_k;
        j["warning"] = "k exceeds library size; clamped to n";
    }
    const auto row = [](const MethodCost& m) {
        nlohmann::ordered_json o;
        o["arrow"] = m.arrow;
        o["spectr"] = m.spectr;
        o["lag"] = m.lag;
        return o;
    };
    j["disk_params"] = row(disk);
    j["gpu_best_params"] = row(gpu_best);
    j["flops_per_token"] = row(flops);
    return j;
}

std::string CostReport::to_table() const {
    std::string out = fmt::format("n={} h={} r={} k={}{}\n", n, h, r, k,
                                  k_clamped ? " (clamped)" : "");
    out += fmt::format("{:<16} {:>20} {:>20} {:>20}\n", "", "arrow", "spectr", "lag");
    const auto line = [&](const char* name, const MethodCost& m) {
        out += fmt::format("{:<16} {:>20} {:>20} {:>20}\n", name, m.arrow, m.spectr, m.lag);
    };
    line("disk params", disk);
    line("gpu best params", gpu_best);
    line("flops/token", flops);
    return out;
}

std::uint64_t predicted_route_flops(std::uint64_t n_adapters, std::uint64_t n, std::uint64_t m,
                                    std::uint64_t r, std::uint64_t k) {
    const bool filtered = k < n_adapters;
    const std::uint64_t candidates = filtered ? k : n_adapters;
    const std::uint64_t arrow = filtered ? 2 * n_adapters * n : 0;
    return arrow + 2 * candidates * r * n + 2 * m * r;
}

FlopCheck measured_flops_check(const RouteTrace& trace, const CostDims& dims, double tolerance) {
    if (trace.size() == 0) throw UsageError("trace has no routed entries");
    FlopCheck c;
    c.entries = trace.size();
    const FlopCount total = trace.total_flops();
    const auto per = [&](std::uint64_t v) { return static_cast<double>(v) / static_cast<double>(c.entries); };
    c.counted_per_entry = per(total.total());
    c.arrow_per_entry = per(total.arrow);
    c.spectral_per_entry = per(total.spectral);
    c.apply_per_entry = per(total.apply);

    const CostReport cost = cost_model(dims.n_adapters, dims.h, dims.r, dims.k);
    if (cost.k >= dims.n_adapters) {
        c.expected = cost.flops.lag;
        c.formula = "2nhr";
    } else {
        c.expected = cost.flops.lag;
        c.formula = "2h(n+rk)";
    }
    c.relative_deviation = std::abs(c.counted_per_entry - static_cast<double>(c.expected)) /
                           static_cast<double>(c.expected);
    c.ok = c.relative_deviation <= tolerance;
    return c;
}

std::string FlopCheck::report() const {
    return fmt::format(
        "{} entries: counted {:.1f} FLOPs/entry (arrow {:.1f}, spectral {:.1f}, apply {:.1f}) vs "
        "{} = {} -> deviation {:.2f}% [{}]",
        entries, counted_per_entry, arrow_per_entry, spectral_per_entry, apply_per_entry, formula,
        expected, 100.0 * relative_deviation, ok ? "ok" : "DISCREPANCY");
}

}  // namespace lag

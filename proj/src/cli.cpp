#include "lag/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lag/linalg.hpp"
#include "lag/metrics.hpp"
#include "lag/sim.hpp"
#include "lag/store.hpp"

namespace lag::cli {

namespace {

namespace fs = std::filesystem;

struct BenchFlags {
    std::size_t n_adapters = 100;
    std::size_t hidden = 64;
    std::size_t rank = 0;
    std::size_t task_rank = 8;
    std::size_t knowledge_rank = 6;
    std::size_t layers = 2;
    std::size_t tokens = 128;
    double epsilon = 0.0;
    double decay = 0.5;
    std::string mode = "random";
    std::uint64_t seed = 1;
    std::size_t seeds = 1;
    std::size_t k = 20;
    std::string method = "lag";
    std::vector<std::size_t> k_values;
    bool allow_large_spectr = false;
    std::size_t spectr_budget = 256;
    std::size_t threads = 0;
    std::string out;
};

void add_benchmark_flags(CLI::App* cmd, BenchFlags& f) {
    cmd->add_option("--n-adapters", f.n_adapters, "Adapters per library (count)")->capture_default_str();
    cmd->add_option("--hidden", f.hidden, "Hidden size h of every square layer")->capture_default_str();
    cmd->add_option("--rank", f.rank, "Rank for both libraries; overrides --task-rank/--knowledge-rank");
    cmd->add_option("--task-rank", f.task_rank, "Rank of task adapters")->capture_default_str();
    cmd->add_option("--knowledge-rank", f.knowledge_rank, "Rank of knowledge adapters")->capture_default_str();
    cmd->add_option("--layers", f.layers,
                    "Number of layers; even layers take task adapters, odd layers knowledge adapters")
        ->capture_default_str();
    cmd->add_option("--tokens", f.tokens, "Tokens per benchmark")->capture_default_str();
    cmd->add_option("--epsilon", f.epsilon, "Token energy fraction outside the owner's subspace, in [0, 1)")
        ->capture_default_str();
    cmd->add_option("--decay", f.decay, "Planted singular-value decay per index, in (0, 1]")->capture_default_str();
    cmd->add_option("--mode", f.mode, "Planting mode: random or orthogonal")->capture_default_str();
    cmd->add_option("--seed", f.seed, "First RNG seed")->capture_default_str();
    cmd->add_option("--seeds", f.seeds, "Number of consecutive seeds to run")->capture_default_str();
    cmd->add_flag("--allow-large-spectr", f.allow_large_spectr,
                  "Run exhaustive SpectR even above --spectr-budget adapters");
    cmd->add_option("--spectr-budget", f.spectr_budget, "Largest library exhaustive SpectR may scan")
        ->capture_default_str();
    cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)")->capture_default_str();
    cmd->add_option("--out", f.out, "Output CSV path (default: stdout)");
}

BenchmarkParams to_params(const BenchFlags& f, std::uint64_t seed) {
    BenchmarkParams p;
    p.n_adapters = f.n_adapters;
    p.hidden = f.hidden;
    p.task_rank = f.rank ? f.rank : f.task_rank;
    p.knowledge_rank = f.rank ? f.rank : f.knowledge_rank;
    p.layers = f.layers;
    p.tokens = f.tokens;
    p.epsilon = f.epsilon;
    p.spectrum_decay = f.decay;
    p.mode = parse_planting_mode(f.mode);
    p.seed = seed;
    return p;
}

EvalOptions to_eval_options(const BenchFlags& f) {
    EvalOptions o;
    o.spectr_budget = f.spectr_budget;
    o.allow_large_spectr = f.allow_large_spectr;
    o.threads = f.threads;
    return o;
}

void emit(const std::string& content, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << content;
    } else {
        write_file_atomic(path, content);
    }
}

int cmd_align(const std::string& in_dir, const std::string& out_dir, double tol, std::ostream& out,
              std::ostream& err) {
    auto loaded = load_library(in_dir);
    if (std::holds_alternative<AdapterLibrary>(loaded)) {
        err << "error: " << in_dir << " is already aligned (manifest aligned = true); nothing to do\n";
        return kExitValidation;
    }
    const RawLibrary& raw = std::get<RawLibrary>(loaded);
    RoutingConfig cfg;
    cfg.svd_tolerance = tol;
    const AdapterLibrary lib = align_library(raw.adapters, cfg, raw.tag);
    save_library(lib, out_dir);
    out << fmt::format("aligned {} of {} {} adapters into {}\n", lib.adapter_count(), raw.adapters.size(),
                       to_string(raw.tag), out_dir);
    out << fmt::format("skipped {}\n", lib.skipped().size());
    for (const auto& s : lib.skipped()) {
        out << fmt::format("  {} ({}): {}\n", s.id, s.layer, s.reason);
    }
    return kExitOk;
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
    const Method method = parse_method(f.method);
    RoutingConfig cfg;
    cfg.k = f.k;
    std::string csv = csv_header();
    for (std::size_t s = 0; s < f.seeds; ++s) {
        const auto bench = generate_benchmark(to_params(f, f.seed + s));
        csv += csv_rows(bench, evaluate(bench, method, cfg, to_eval_options(f)));
    }
    emit(csv, f.out, out);
    return kExitOk;
}

int cmd_sweep(const BenchFlags& f, std::ostream& out) {
    if (f.k_values.empty()) throw UsageError("--k-values is required");
    std::string csv = csv_header();
    for (std::size_t s = 0; s < f.seeds; ++s) {
        const auto bench = generate_benchmark(to_params(f, f.seed + s));
        for (const auto& r : sweep_k(bench, f.k_values, RoutingConfig{}, to_eval_options(f))) {
            csv += csv_rows(bench, r);
        }
    }
    emit(csv, f.out, out);
    return kExitOk;
}

int cmd_score(const std::string& csv_path, const std::string& out_path, std::ostream& out) {
    std::ifstream in(csv_path);
    if (!in) throw IoError(fmt::format("cannot read {}", csv_path));
    const auto scores = read_scores_csv(in);
    emit(format_score_table(score_table(scores)), out_path, out);
    return kExitOk;
}

int cmd_accounting(const std::vector<std::uint64_t>& nhrk, const std::string& format,
                   const std::string& out_path, std::ostream& out, std::ostream& err) {
    const CostReport report = cost_model(nhrk[0], nhrk[1], nhrk[2], nhrk[3]);
    if (report.k_clamped) {
        err << fmt::format("warning: k = {} exceeds n = {}; clamped\n", report.requested_k, report.n);
    }
    const std::string content = format == "table" ? report.to_table() : report.to_json().dump(2) + "\n";
    emit(content, out_path, out);
    return kExitOk;
}

int cmd_synth(const BenchFlags& f, const std::string& out_dir, std::ostream& out) {
    const auto bench = generate_benchmark(to_params(f, f.seed));
    save_library(bench.task_raw, fs::path(out_dir) / "task");
    if (!bench.knowledge_raw.adapters.empty()) save_library(bench.knowledge_raw, fs::path(out_dir) / "knowledge");
    out << fmt::format("wrote {} task and {} knowledge raw adapters under {}\n", bench.task_raw.adapters.size(),
                       bench.knowledge_raw.adapters.size(), out_dir);
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Routing engine for large LoRA adapter libraries (arrow filter + spectral rerank)", "lag"};
    app.require_subcommand(1);

    std::string in_dir, out_dir;
    double tol = 1e-7;
    auto* align = app.add_subcommand("align", "Spectrally align a raw adapter library");
    align->add_option("input", in_dir, "Raw library directory (contains manifest.json)")->required();
    align->add_option("output", out_dir, "Directory for the aligned library")->required();
    align->add_option("--tol", tol, "Singular values at or below tol * sigma_1 are truncated")->capture_default_str();

    BenchFlags bench_flags;
    auto* bench = app.add_subcommand("bench", "Evaluate one routing method on the planted-subspace benchmark (CSV)");
    add_benchmark_flags(bench, bench_flags);
    bench->add_option("--method", bench_flags.method, "arrow, spectr or lag")->capture_default_str();
    bench->add_option("--k", bench_flags.k, "Arrow filter width for lag (adapters)")->capture_default_str();

    BenchFlags sweep_flags;
    auto* sweep = app.add_subcommand("sweep-k", "LAG accuracy and FLOPs per token across filter widths (CSV)");
    add_benchmark_flags(sweep, sweep_flags);
    sweep->add_option("--k-values", sweep_flags.k_values, "Comma-separated filter widths, each in [1, n-adapters]")
        ->delimiter(',')
        ->required();

    std::string score_csv, score_out;
    auto* score = app.add_subcommand("score", "Normalized task scores (percent of reference) from a dataset CSV");
    score->add_option("csv", score_csv, "CSV with columns dataset,task,size,score,reference[,model]")->required();
    score->add_option("--out", score_out, "Output path (default: stdout)");

    std::vector<std::uint64_t> nhrk;
    std::string format = "json";
    std::string accounting_out;
    auto* accounting = app.add_subcommand("accounting", "Storage (parameters) and FLOPs per token for n, h, r, k");
    accounting->add_option("nhrk", nhrk, "n (library size) h (hidden size) r (rank) k (filter width)")
        ->expected(4)
        ->required();
    accounting->add_option("--format", format, "json or table")->check(CLI::IsMember({"json", "table"}))->capture_default_str();
    accounting->add_option("--out", accounting_out, "Output path (default: stdout)");

    BenchFlags synth_flags;
    std::string synth_dir;
    auto* synth = app.add_subcommand("synth", "Write the planted benchmark's raw libraries to <dir>/task and <dir>/knowledge");
    add_benchmark_flags(synth, synth_flags);
    synth->add_option("dir", synth_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitValidation;
    }

    try {
        if (*align) return cmd_align(in_dir, out_dir, tol, out, err);
        if (*bench) return cmd_bench(bench_flags, out);
        if (*sweep) return cmd_sweep(sweep_flags, out);
        if (*score) return cmd_score(score_csv, score_out, out);
        if (*accounting) return cmd_accounting(nhrk, format, accounting_out, out, err);
        if (*synth) return cmd_synth(synth_flags, synth_dir, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitValidation;
}

}  // namespace lag::cli

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "lag/metrics.hpp"
#include "lag/router.hpp"

using namespace lag;

namespace {

std::vector<DatasetScore> load_fixture() {
    std::ifstream in(LAG_TEST_DATA_DIR "/kilt_scores.csv");
    REQUIRE(in);
    return read_scores_csv(in);
}

double task_score(const std::vector<ModelScores>& table, const std::string& model, const std::string& task) {
    for (const auto& m : table) {
        if (m.model != model) continue;
        for (const auto& t : m.tasks) {
            if (t.task == task) return t.score;
        }
    }
    FAIL("missing " << model << "/" << task);
    return 0.0;
}

}  // namespace

TEST_CASE("normalized_task_score: reference model scores 100") {
    const std::vector<DatasetScore> s{{"", "a", "T", 10, 3.5, 3.5}, {"", "b", "T", 7, 42.0, 42.0}};
    CHECK(normalized_task_score(s) == doctest::Approx(100.0));
}

TEST_CASE("normalized_task_score: published QA and Slot rows") {
    const std::vector<DatasetScore> qa{{"", "NQ", "QA", 3855, 27.0, 38.8}, {"", "TQA", "QA", 4583, 50.8, 50.8}};
    const double s_qa = normalized_task_score(qa);
    CHECK(s_qa == doctest::Approx(86.105).epsilon(1e-4));
    CHECK(std::abs(s_qa - 86.0) <= 0.15);

    const std::vector<DatasetScore> slot{{"", "zsRE", "Slot", 116, 24.1, 49.1}, {"", "T-REx", "Slot", 280, 18.9, 53.6}};
    CHECK(std::abs(normalized_task_score(slot) - 39.4) <= 0.15);
}

TEST_CASE("normalized_task_score: properties") {
    const std::vector<DatasetScore> base{{"", "a", "T", 100, 30.0, 60.0}, {"", "b", "T", 50, 20.0, 25.0}};
    // splitting a dataset into halves with identical scores changes nothing
    const std::vector<DatasetScore> split{{"", "a1", "T", 50, 30.0, 60.0}, {"", "a2", "T", 50, 30.0, 60.0},
                                          {"", "b", "T", 50, 20.0, 25.0}};
    CHECK(normalized_task_score(split) == doctest::Approx(normalized_task_score(base)));

    // linear in each score
    auto doubled = base;
    doubled[1].score *= 2.0;
    const double delta = normalized_task_score(doubled) - normalized_task_score(base);
    CHECK(delta == doctest::Approx(100.0 * (50.0 / 150.0) * (20.0 / 25.0)));

    auto bad = base;
    bad[0].reference = 0.0;
    CHECK_THROWS_AS(normalized_task_score(bad), DomainError);
    auto mixed = base;
    mixed[1].task = "U";
    CHECK_THROWS_AS(normalized_task_score(mixed), DomainError);
    CHECK_THROWS_AS(normalized_task_score(std::vector<DatasetScore>{}), DomainError);
}

TEST_CASE("score_table: Instr row from the fixture") {
    const auto table = score_table(load_fixture());
    REQUIRE(table.size() == 3);
    CHECK(std::abs(task_score(table, "Instr", "QA") - 86.0) <= 0.15);
    CHECK(std::abs(task_score(table, "Instr", "Slot") - 39.4) <= 0.15);
    CHECK(std::abs(task_score(table, "Instr", "Link") - 29.8) <= 0.15);
    CHECK(std::abs(task_score(table, "Instr", "Fact") - 73.2) <= 0.15);
    CHECK(table[0].tasks.size() == 5);
    CHECK(table[0].average == doctest::Approx((task_score(table, "Instr", "Chat") + task_score(table, "Instr", "Fact") +
                                               task_score(table, "Instr", "Link") + task_score(table, "Instr", "Slot") +
                                               task_score(table, "Instr", "QA")) / 5.0));
    CHECK(format_score_table(table).find("86.1") != std::string::npos);
}

TEST_CASE("read_scores_csv: malformed input") {
    std::istringstream missing("dataset,task,size,score\nNQ,QA,1,2\n");
    CHECK_THROWS_AS(read_scores_csv(missing), UsageError);
    std::istringstream ragged("dataset,task,size,score,reference\nNQ,QA,1,2\n");
    CHECK_THROWS_AS(read_scores_csv(ragged), UsageError);
    std::istringstream junk("dataset,task,size,score,reference\nNQ,QA,x,2,3\n");
    CHECK_THROWS_AS(read_scores_csv(junk), UsageError);
    std::istringstream ok("dataset,task,size,score,reference\n NQ , QA ,3855,27.0,38.8\n\n");
    const auto rows = read_scores_csv(ok);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].dataset == "NQ");
    CHECK(rows[0].model.empty());
}

TEST_CASE("cost_model: storage footnote and formulas") {
    const CostReport c = cost_model(1'000'000, 4096, 6, 20);
    CHECK(c.gpu_best.spectr == 49'152'000'000ull);
    CHECK(c.gpu_best.lag == 4'096'983'040ull);
    CHECK(c.gpu_best.arrow == c.gpu_best.lag);
    CHECK(c.disk.arrow == 2ull * 1'000'000 * 4096 * 6 + 1'000'000ull * 4096);
    CHECK(c.disk.spectr == c.disk.lag);
    CHECK(std::llround(c.gpu_best.spectr / 1e9) == 49);
    CHECK(std::llround(c.gpu_best.lag / 1e9) == 4);

    CHECK(cost_model(1000, 64, 8, 20).flops.lag == 148'480ull);

    // SpectR vs LAG FLOPs ~ r·n / (n + r·k) for rank-8 libraries
    const CostReport r8 = cost_model(1000, 3072, 8, 20);
    const double ratio = static_cast<double>(r8.flops.spectr) / static_cast<double>(r8.flops.lag);
    CHECK(ratio == doctest::Approx(8.0 * 1000 / (1000 + 160)));
    const CostReport huge = cost_model(1'000'000, 3072, 8, 20);
    CHECK(static_cast<double>(huge.flops.spectr) / static_cast<double>(huge.flops.lag) == doctest::Approx(8.0).epsilon(1e-3));
}

TEST_CASE("cost_model: properties, clamping and errors") {
    // 2h(n+rk) <= 2nhr holds for k <= n(r-1)/r; above that the filter costs more than it saves
    for (std::uint64_t k = 1; k <= 50 * 3 / 4; ++k) {
        CHECK(cost_model(50, 32, 4, k).flops.lag <= cost_model(50, 32, 4, k).flops.spectr);
    }
    CHECK(cost_model(50, 32, 4, 40).flops.lag > cost_model(50, 32, 4, 40).flops.spectr);
    CHECK(cost_model(50, 32, 4, 50).flops.lag == cost_model(50, 32, 4, 50).flops.spectr);
    const CostReport full = cost_model(50, 32, 4, 80);
    CHECK(full.k_clamped);
    CHECK(full.k == 50);
    CHECK(full.to_json().contains("warning"));
    CHECK_THROWS_AS(cost_model(0, 1, 1, 1), DomainError);
    CHECK_THROWS_AS(cost_model(1ull << 40, 1ull << 40, 8, 1), DomainError);
    CHECK(cost_model(10, 4, 2, 3).to_table().find("flops/token") != std::string::npos);
}

TEST_CASE("measured_flops_check: instrumented counts against the closed form") {
    std::mt19937_64 rng(1);
    const auto build = [&](std::size_t n_adapters, Eigen::Index h, Eigen::Index r) {
        std::vector<AlignedAdapter> adapters;
        std::normal_distribution<float> normal;
        for (std::size_t i = 0; i < n_adapters; ++i) {
            Eigen::MatrixXf g(h, r);
            for (Eigen::Index a = 0; a < h; ++a)
                for (Eigen::Index b = 0; b < r; ++b) g(a, b) = normal(rng);
            Eigen::HouseholderQR<Eigen::MatrixXf> qr(g);
            const Eigen::MatrixXf q = qr.householderQ() * Eigen::MatrixXf::Identity(h, r);
            AlignedAdapter a;
            a.id = "a" + std::to_string(i);
            a.layer = "L0";
            a.A_star = q.transpose();
            a.B_star = q;
            a.singular_values.assign(static_cast<std::size_t>(r), 1.0f);
            adapters.push_back(std::move(a));
        }
        return AdapterLibrary::build(LibraryTag::task, std::move(adapters));
    };
    const AdapterLibrary lib = build(100, 32, 4);
    const std::vector<LayerSpec> layers{{"L0", MatrixF::Zero(32, 32), true, false}};
    std::vector<std::vector<TokenVector>> one{{TokenVector::Random(32)}};

    const auto check = [&](std::size_t k) {
        RoutingConfig cfg;
        cfg.k = k;
        const auto seq = route_sequence(one, layers, {&lib, nullptr}, cfg);
        return measured_flops_check(seq.trace, {100, 32, 4, k});
    };
    const FlopCheck k5 = check(5);
    CHECK(k5.ok);
    CHECK(k5.expected == 7680);
    CHECK(k5.counted_per_entry == doctest::Approx(6400 + 5 * 256 + 256));
    CHECK(k5.report().find("ok") != std::string::npos);

    const FlopCheck kn = check(100);
    CHECK(kn.ok);
    CHECK(kn.formula == "2nhr");
    CHECK(kn.expected == cost_model(100, 32, 4, 100).flops.spectr);

    const FlopCheck k1 = check(1);
    CHECK(k1.ok);
    CHECK(k1.expected == cost_model(100, 32, 4, 1).flops.arrow + 2 * 32 * 4);

    // a tight tolerance surfaces the dropped lower-order terms as a discrepancy
    RoutingConfig cfg;
    cfg.k = 5;
    const auto seq = route_sequence(one, layers, {&lib, nullptr}, cfg);
    const FlopCheck strict = measured_flops_check(seq.trace, {100, 32, 4, 5}, 0.001);
    CHECK_FALSE(strict.ok);
    CHECK(strict.report().find("DISCREPANCY") != std::string::npos);
}

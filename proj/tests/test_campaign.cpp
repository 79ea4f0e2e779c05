#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "simmerge/campaign.hpp"
#include "test_util.hpp"

using namespace simmerge;
using simmerge::test::TempDir;

namespace {

OfflineCampaignConfig small_offline_cfg(std::uint64_t seed) {
    OfflineCampaignConfig cfg;
    cfg.n_train_pairs = 30;
    cfg.n_test_pairs = 10;
    cfg.seed = seed;
    cfg.selector.max_epochs = 60;
    cfg.selector.seed = seed;
    cfg.task_encoding_ablation = true;
    return cfg;
}

} // namespace

TEST_CASE("aggregate_outcomes: macro average is the unweighted task mean") {
    ReportBundle bundle;
    auto add = [&](const std::string& method, const std::string& task, double score) {
        MergeOutcome o;
        o.plan.task_id = task;
        o.plan.model_ids = {"a", "b"};
        o.plan.operators = {MergeOperator::linear()};
        o.method = method;
        o.score = score;
        o.s_expert = -1.0;
        o.s_aux = -3.0;
        bundle.outcomes.push_back(std::move(o));
    };
    // two tasks with different case counts: macro must weight tasks equally
    add("simmerge", "t0", -1.0);
    add("simmerge", "t0", -3.0);
    add("simmerge", "t0", -2.0);
    add("simmerge", "t1", -1.0);

    aggregate_outcomes(bundle);
    // t0 mean gap: scores -1,-3,-2 -> gaps 100,0,50 -> 50; t1 gap: 100. macro = 75.
    CHECK(bundle.per_task.at("simmerge").at("t0").mean_gap_closed == doctest::Approx(50.0));
    CHECK(bundle.per_task.at("simmerge").at("t1").mean_gap_closed == doctest::Approx(100.0));
    CHECK(bundle.macro.at("simmerge").mean_gap_closed == doctest::Approx(75.0));
    CHECK(bundle.macro.at("simmerge").n == 4);

    // permutation invariance over tasks: relabeling tasks preserves the macro
    ReportBundle swapped;
    swapped.outcomes = bundle.outcomes;
    for (auto& o : swapped.outcomes) {
        o.plan.task_id = o.plan.task_id == "t0" ? "t1" : "t0";
    }
    aggregate_outcomes(swapped);
    CHECK(swapped.macro.at("simmerge").mean_gap_closed == doctest::Approx(75.0));
}

TEST_CASE("offline campaign: internal consistency and row counts") {
    const Catalog catalog = generate_catalog(ArchConfig{}, 4, 4, 6, 16, 91);
    const ReportBundle bundle = run_offline_campaign(catalog, small_offline_cfg(91));

    // held-out pair count x methods (3 fixed + simmerge)
    CHECK(bundle.outcomes.size() == 10 * 4);

    // simmerge outcomes equal the executed score of the predicted operator:
    // each simmerge score must match one of the case's fixed-operator scores
    // on the same pair.
    std::map<std::string, std::array<double, 3>> fixed_by_pair;
    for (const auto& o : bundle.outcomes) {
        const std::string key = o.plan.model_ids[0] + "|" + o.plan.model_ids[1] + "|" + o.plan.task_id;
        if (o.method == "fixed-linear") {
            fixed_by_pair[key][0] = o.score;
        } else if (o.method == "fixed-slerp") {
            fixed_by_pair[key][1] = o.score;
        } else if (o.method == "fixed-ties") {
            fixed_by_pair[key][2] = o.score;
        }
    }
    for (const auto& o : bundle.outcomes) {
        if (o.method != "simmerge") {
            continue;
        }
        const std::string key = o.plan.model_ids[0] + "|" + o.plan.model_ids[1] + "|" + o.plan.task_id;
        const auto& fixed = fixed_by_pair.at(key);
        const int op = operator_index(o.plan.operators[0].kind);
        CHECK(o.score == fixed[static_cast<std::size_t>(op)]);
    }

    CHECK(bundle.confusion_with_encoding.has_value());
    CHECK(bundle.confusion_without_encoding.has_value());
    CHECK(bundle.confusion_with_encoding->n == 10);

    int balance_total = 0;
    for (int o = 0; o < kOperatorCount; ++o) {
        balance_total += bundle.label_balance[static_cast<std::size_t>(o)];
    }
    CHECK(balance_total == 40); // train 30 incl val + test 10

    CHECK(!bundle.correlation_cells.empty());
    CHECK(!bundle.tail_cells.empty());
    for (const auto& cell : bundle.correlation_cells) {
        if (cell.pearson) {
            CHECK(*cell.pearson >= -1.0);
            CHECK(*cell.pearson <= 1.0);
        }
    }
}

TEST_CASE("offline campaign is reproducible from (catalog seed, config)") {
    const Catalog c1 = generate_catalog(ArchConfig{}, 4, 4, 6, 16, 93);
    const Catalog c2 = generate_catalog(ArchConfig{}, 4, 4, 6, 16, 93);
    const ReportBundle b1 = run_offline_campaign(c1, small_offline_cfg(93));
    const ReportBundle b2 = run_offline_campaign(c2, small_offline_cfg(93));
    REQUIRE(b1.outcomes.size() == b2.outcomes.size());
    for (std::size_t i = 0; i < b1.outcomes.size(); ++i) {
        CHECK(b1.outcomes[i].method == b2.outcomes[i].method);
        CHECK(b1.outcomes[i].score == b2.outcomes[i].score);
    }
    CHECK(b1.macro.at("simmerge").mean_gap_closed == b2.macro.at("simmerge").mean_gap_closed);
}

TEST_CASE("multiway campaign: instance structure and order ablation") {
    const Catalog catalog = generate_catalog(ArchConfig{}, 4, 3, 6, 16, 95);
    MultiwayCampaignConfig cfg;
    cfg.n_instances = 6;
    cfg.n_train_pairs = 24;
    cfg.seed = 95;
    cfg.selector.max_epochs = 60;
    cfg.selector.seed = 95;
    const ReportBundle bundle = run_multiway_campaign(catalog, 3, cfg);

    // 6 instances x (3 fixed + simmerge + random-order)
    CHECK(bundle.outcomes.size() == 6 * 5);
    int sim = 0, rnd = 0;
    for (const auto& o : bundle.outcomes) {
        CHECK(o.plan.model_ids.size() == 3);
        CHECK(o.plan.operators.size() == 2);
        if (o.method == "simmerge") {
            ++sim;
            CHECK(catalog.is_designated_expert(o.plan.model_ids[0]) +
                      catalog.is_designated_expert(o.plan.model_ids[1]) +
                      catalog.is_designated_expert(o.plan.model_ids[2]) >=
                  1);
        }
        if (o.method == "random-order") {
            ++rnd;
        }
    }
    CHECK(sim == 6);
    CHECK(rnd == 6);
    CHECK(bundle.macro.count("simmerge") == 1);
    CHECK(bundle.macro.count("random-order") == 1);
}

TEST_CASE("bandit campaign produces regret traces for each policy") {
    const Catalog catalog = generate_catalog(ArchConfig{}, 4, 3, 4, 12, 97);
    BanditCampaignConfig cfg;
    cfg.rounds = 8;
    cfg.n_train_pairs = 16;
    cfg.seed = 97;
    cfg.encoder.max_epochs = 30;
    cfg.encoder.seed = 97;
    cfg.policies = {Policy::Oracle, Policy::Uniform, Policy::LinTS};
    const ReportBundle bundle = run_bandit_campaign(catalog, cfg);

    CHECK(bundle.regret_traces.size() == 3);
    CHECK(bundle.regret_traces.at("oracle").back() == 0.0);
    CHECK(bundle.regret_traces.at("uniform").size() == 8);
    CHECK(bundle.outcomes.size() == 3 * 8);
    for (const auto& o : bundle.outcomes) {
        CHECK(o.method.rfind("bandit-", 0) == 0);
        CHECK(o.plan.task_id != catalog.tasks.back().task_id); // shift task is never the target
    }
}

TEST_CASE("report bundle round trip: files, hashes, rendering") {
    TempDir tmp;
    const Catalog catalog = generate_catalog(ArchConfig{}, 4, 4, 6, 16, 99);
    const ReportBundle bundle = run_offline_campaign(catalog, small_offline_cfg(99));
    write_report_bundle(bundle, tmp.path.string(), "{\"test\":true}");

    for (const char* name : {"manifest.json", "outcomes.csv", "per_task.json", "macro.json", "stats.json",
                             "correlations.csv", "tail_effects.csv"}) {
        CHECK(std::filesystem::exists(tmp.path / name));
    }

    // manifest hashes match the written artifacts
    std::ifstream min(tmp.path / "manifest.json");
    nlohmann::json manifest;
    min >> manifest;
    for (const auto& [name, hash] : manifest.at("artifact_hashes").items()) {
        std::stringstream expected;
        expected << std::hex << std::setw(16) << std::setfill('0')
                 << file_fnv1a((tmp.path / name).string());
        CHECK(hash.get<std::string>() == expected.str());
    }

    const std::string text = render_report_text(tmp.path.string());
    CHECK(text.find("macro-averages") != std::string::npos);
    CHECK(text.find("simmerge") != std::string::npos);
    CHECK(std::filesystem::exists(tmp.path / "report.txt"));
    CHECK(std::filesystem::exists(tmp.path / "macro.csv"));
    CHECK(std::filesystem::exists(tmp.path / "per_task.csv"));
}

TEST_CASE("case_feature_value averages over ordered pairs") {
    const Catalog catalog = generate_catalog(ArchConfig{}, 3, 2, 4, 8, 101);
    const SimilarityTable table = build_similarity_table(catalog);
    const std::vector<std::string> models = {"ckpt_t0_0", "ckpt_t1_0"};
    const double v = case_feature_value(table, models, "t0", "kl_mean");
    const double ab = table.pair("ckpt_t0_0", "ckpt_t1_0", "t0").raw.at("kl_mean");
    const double ba = table.pair("ckpt_t1_0", "ckpt_t0_0", "t0").raw.at("kl_mean");
    CHECK(v == doctest::Approx(0.5 * (ab + ba)).epsilon(1e-12));
}

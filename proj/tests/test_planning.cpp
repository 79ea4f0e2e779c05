#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "simmerge/planning.hpp"
#include "test_util.hpp"

using namespace simmerge;
using simmerge::test::TempDir;

namespace {

struct Fixture {
    Catalog catalog;
    SimilarityTable table;
    PairwiseDataset dataset;
    SelectorModel model;

    explicit Fixture(std::uint64_t seed)
        : catalog(generate_catalog(ArchConfig{}, 4, 3, 6, 16, seed)), table(build_similarity_table(catalog)) {
        DatasetConfig dc;
        dc.n_test = 0;
        dataset = build_pairwise_dataset(catalog, table, 24, seed, dc);
        SelectorHyperparams hyper;
        hyper.max_epochs = 60;
        hyper.seed = seed;
        model = train_selector(dataset, hyper);
    }
};

} // namespace

TEST_CASE("enumerate_plans: counts and determinism") {
    const std::vector<std::string> three = {"c", "a", "b"};
    const auto orders3 = enumerate_plans(three, EnumerationMode::Exhaustive, 0, 1);
    CHECK(orders3.size() == 6);

    const std::vector<std::string> four = {"d", "c", "a", "b"};
    const auto orders4 = enumerate_plans(four, EnumerationMode::Exhaustive, 0, 1);
    CHECK(orders4.size() == 24);
    // with per-step operator choice the full space is 24 * 27 = 648 plans
    CHECK(orders4.size() * 27 == 648);

    // lexicographic enumeration, no duplicates
    CHECK(orders4.front() == std::vector<std::string>{"a", "b", "c", "d"});
    CHECK(std::set<std::vector<std::string>>(orders4.begin(), orders4.end()).size() == 24);

    const auto s1 = enumerate_plans(four, EnumerationMode::Sampled, 10, 7);
    const auto s2 = enumerate_plans(four, EnumerationMode::Sampled, 10, 7);
    CHECK(s1 == s2);
    CHECK(s1.size() == 10);

    // sampled candidates are a subset of the exhaustive set
    const std::set<std::vector<std::string>> all(orders4.begin(), orders4.end());
    for (const auto& o : s1) {
        CHECK(all.count(o) == 1);
    }

    // sampling more candidates than exist returns exactly the full set
    const auto capped = enumerate_plans(three, EnumerationMode::Sampled, 100, 3);
    CHECK(capped.size() == 6);

    CHECK_THROWS_AS(enumerate_plans({"a"}, EnumerationMode::Exhaustive, 0, 1), SimmergeError);
    CHECK_THROWS_AS(enumerate_plans({"a", "a", "b"}, EnumerationMode::Exhaustive, 0, 1), SimmergeError);
    const std::vector<std::string> many = {"a", "b", "c", "d", "e", "f", "g", "h", "i"};
    CHECK_THROWS_WITH_AS(enumerate_plans(many, EnumerationMode::Exhaustive, 0, 1),
                         doctest::Contains("too large for exhaustive"), SimmergeError);
}

TEST_CASE("score_plan on 2 models reduces to the pairwise selector path") {
    const Fixture fx(31);
    const std::string expert = fx.catalog.tasks[0].expert_id;
    const std::string aux = fx.catalog.tasks[1].expert_id;

    const PlanScore score = score_plan({expert, aux}, fx.table, fx.model, "t0");
    REQUIRE(score.per_step_features.size() == 1);
    REQUIRE(score.per_step_operator_utilities.size() == 1);

    const auto pairwise_x = fx.table.features_with_encoding(expert, aux, "t0");
    CHECK(score.per_step_features[0] == pairwise_x);
    const auto utilities = predict_utilities(fx.model, pairwise_x);
    CHECK(score.per_step_operator_utilities[0] == utilities);
    CHECK(score.plan.operators[0].kind == predict_operator(fx.model, pairwise_x));
    CHECK(score.predicted_utility == *std::max_element(utilities.begin(), utilities.end()));
}

TEST_CASE("score_plan fills one record per fold step") {
    const Fixture fx(33);
    const std::vector<std::string> order = {fx.catalog.tasks[0].expert_id, fx.catalog.tasks[1].expert_id,
                                            fx.catalog.tasks[2].expert_id, fx.catalog.tasks[3].expert_id};
    const PlanScore score = score_plan(order, fx.table, fx.model, "t0");
    CHECK(score.per_step_features.size() == 3);
    CHECK(score.per_step_operator_utilities.size() == 3);
    CHECK(score.plan.operators.size() == 3);
    CHECK(score.plan.model_ids == order);
    CHECK(score.predicted_utility ==
          *std::max_element(score.per_step_operator_utilities[2].begin(),
                            score.per_step_operator_utilities[2].end()));
}

TEST_CASE("select_plan is deterministic and picks the argmax-scored order") {
    const Fixture fx(35);
    const std::vector<std::string> models = {fx.catalog.tasks[0].expert_id, fx.catalog.tasks[1].expert_id,
                                             fx.catalog.tasks[2].expert_id};

    const MergePlan p1 = select_plan(models, fx.table, fx.model, "t0", EnumerationMode::Exhaustive, 0, 5);
    const MergePlan p2 = select_plan(models, fx.table, fx.model, "t0", EnumerationMode::Exhaustive, 0, 5);
    CHECK(p1.model_ids == p2.model_ids);

    double best = -1e300;
    std::vector<std::string> best_order;
    for (const auto& order : enumerate_plans(models, EnumerationMode::Exhaustive, 0, 5)) {
        const PlanScore s = score_plan(order, fx.table, fx.model, "t0");
        if (s.predicted_utility > best) {
            best = s.predicted_utility;
            best_order = order;
        }
    }
    CHECK(p1.model_ids == best_order);

    // k=2: picks the orientation with the higher predicted utility.
    const std::vector<std::string> pair = {models[0], models[1]};
    const MergePlan chosen = select_plan(pair, fx.table, fx.model, "t0", EnumerationMode::Exhaustive, 0, 5);
    const PlanScore fwd = score_plan({models[0], models[1]}, fx.table, fx.model, "t0");
    const PlanScore rev = score_plan({models[1], models[0]}, fx.table, fx.model, "t0");
    if (fwd.predicted_utility >= rev.predicted_utility) {
        CHECK(chosen.model_ids == fwd.plan.model_ids);
    } else {
        CHECK(chosen.model_ids == rev.plan.model_ids);
    }
}

TEST_CASE("scoring never touches checkpoint tensors: a table-only fixture suffices") {
    // Build the table and selector, then drop the catalog entirely; scoring
    // must still work because its interface only sees the table.
    SimilarityTable table;
    SelectorModel model;
    {
        const Fixture fx(37);
        table = fx.table;
        model = fx.model;
    }
    const PlanScore score = score_plan({"ckpt_t0_0", "ckpt_t1_0", "ckpt_t2_0"}, table, model, "t0");
    CHECK(score.per_step_features.size() == 2);
}

TEST_CASE("dump_scored_plans writes sorted JSONL") {
    TempDir tmp;
    const Fixture fx(39);
    const std::vector<std::string> models = {fx.catalog.tasks[0].expert_id, fx.catalog.tasks[1].expert_id,
                                             fx.catalog.tasks[2].expert_id};
    std::vector<PlanScore> scores;
    for (const auto& order : enumerate_plans(models, EnumerationMode::Exhaustive, 0, 5)) {
        scores.push_back(score_plan(order, fx.table, fx.model, "t0"));
    }
    const std::string path = tmp.file("plans.jsonl");
    dump_scored_plans(scores, path);

    std::ifstream in(path);
    std::string line;
    double prev = 1e300;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        const double u = j.at("predicted_utility").get<double>();
        CHECK(u <= prev);
        prev = u;
        ++lines;
    }
    CHECK(lines == 6);
}

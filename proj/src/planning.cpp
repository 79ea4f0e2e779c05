#include "simmerge/planning.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

namespace simmerge {

using nlohmann::json;

namespace {

std::uint64_t factorial(std::size_t n) {
    std::uint64_t f = 1;
    for (std::size_t i = 2; i <= n; ++i) {
        f *= i;
    }
    return f;
}

} // namespace

std::vector<std::vector<std::string>> enumerate_plans(const std::vector<std::string>& model_ids,
                                                      EnumerationMode mode, int max_candidates,
                                                      std::uint64_t seed, int exhaustive_limit) {
    require(model_ids.size() >= 2, "enumerate_plans: need at least 2 models");
    std::set<std::string> unique(model_ids.begin(), model_ids.end());
    require(unique.size() == model_ids.size(), "enumerate_plans: duplicate model ids");

    std::vector<std::string> sorted(model_ids);
    std::sort(sorted.begin(), sorted.end());

    if (mode == EnumerationMode::Exhaustive) {
        require(static_cast<int>(sorted.size()) <= exhaustive_limit,
                "enumerate_plans: k too large for exhaustive mode (k=" + std::to_string(sorted.size()) +
                    ", limit=" + std::to_string(exhaustive_limit) + ")");
        std::vector<std::vector<std::string>> orders;
        orders.reserve(factorial(sorted.size()));
        std::vector<std::string> perm = sorted;
        do {
            orders.push_back(perm);
        } while (std::next_permutation(perm.begin(), perm.end()));
        return orders;
    }

    require(max_candidates >= 1, "enumerate_plans: max_candidates must be positive");
    const std::uint64_t total = factorial(sorted.size());
    const std::uint64_t want = std::min<std::uint64_t>(static_cast<std::uint64_t>(max_candidates), total);

    Rng rng = Rng(seed).split("plan-sampling");
    std::set<std::vector<std::string>> seen;
    std::vector<std::vector<std::string>> orders;
    while (orders.size() < want) {
        std::vector<std::string> perm = sorted;
        rng.shuffle(perm);
        if (seen.insert(perm).second) {
            orders.push_back(std::move(perm));
        }
    }
    return orders;
}

PlanScore score_plan(const std::vector<std::string>& order, const SimilarityTable& table,
                     const SelectorModel& selector, const std::string& task_id, const PlanSearchConfig& cfg) {
    require(order.size() >= 2, "score_plan: need at least 2 models");
    selector.check_valid();
    require(selector.use_task_encoding, "score_plan: selector must use task encoding for table features");

    PlanScore score;
    score.plan.task_id = task_id;
    score.plan.model_ids = order;

    MixtureProxy prefix = singleton_mixture(order[0]);
    double mean_acc = 0.0;
    for (std::size_t j = 1; j < order.size(); ++j) {
        const std::vector<double> x = intermediate_features(prefix, order[j], table, task_id);
        const auto utilities = predict_utilities(selector, x);
        int best = 0;
        for (int o = 1; o < kOperatorCount; ++o) {
            if (utilities[static_cast<std::size_t>(o)] > utilities[static_cast<std::size_t>(best)]) {
                best = o;
            }
        }
        score.plan.operators.push_back(MergeOperator::make(operator_from_index(best), cfg.alpha, cfg.tau));
        score.per_step_features.push_back(x);
        score.per_step_operator_utilities.push_back(utilities);
        score.predicted_utility = utilities[static_cast<std::size_t>(best)];
        mean_acc += utilities[static_cast<std::size_t>(best)];
        prefix = fold_mixture(prefix, order[j], cfg.alpha);
    }
    if (cfg.mean_over_steps) {
        score.predicted_utility = mean_acc / static_cast<double>(order.size() - 1);
    }
    score.plan.validate();
    return score;
}

MergePlan select_plan(const std::vector<std::string>& model_ids, const SimilarityTable& table,
                      const SelectorModel& selector, const std::string& task_id, EnumerationMode mode,
                      int max_candidates, std::uint64_t seed, const PlanSearchConfig& cfg) {
    const auto orders = enumerate_plans(model_ids, mode, max_candidates, seed, cfg.exhaustive_limit);
    require(!orders.empty(), "select_plan: empty candidate list");

    bool have_best = false;
    PlanScore best;
    for (const auto& order : orders) {
        PlanScore s = score_plan(order, table, selector, task_id, cfg);
        // Argmax with ties broken by lexicographic order of the id sequence.
        if (!have_best || s.predicted_utility > best.predicted_utility ||
            (s.predicted_utility == best.predicted_utility && s.plan.model_ids < best.plan.model_ids)) {
            best = std::move(s);
            have_best = true;
        }
    }
    return best.plan;
}

void dump_scored_plans(const std::vector<PlanScore>& scores, const std::string& path) {
    std::vector<const PlanScore*> sorted;
    sorted.reserve(scores.size());
    for (const auto& s : scores) {
        sorted.push_back(&s);
    }
    std::sort(sorted.begin(), sorted.end(), [](const PlanScore* a, const PlanScore* b) {
        if (a->predicted_utility != b->predicted_utility) {
            return a->predicted_utility > b->predicted_utility;
        }
        return a->plan.model_ids < b->plan.model_ids;
    });

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "dump_scored_plans: cannot open '" + path + "'");
    for (const auto* s : sorted) {
        json j;
        j["order"] = s->plan.model_ids;
        json ops = json::array();
        for (const auto& op : s->plan.operators) {
            ops.push_back(operator_name(op.kind));
        }
        j["per_step_ops"] = ops;
        j["per_step_utilities"] = s->per_step_operator_utilities;
        j["predicted_utility"] = s->predicted_utility;
        out << j.dump() << "\n";
    }
    require(out.good(), "dump_scored_plans: write failed");
}

} // namespace simmerge

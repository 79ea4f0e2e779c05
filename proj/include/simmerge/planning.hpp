#pragma once

// Candidate-plan enumeration and selector-based plan scoring. Scoring walks
// the fold left to right, builds (propagated) features for each step, picks
// the argmax operator per step, and takes the final step's selected utility
// as the plan's predicted utility. No checkpoint tensors are touched: the
// scorer sees only the similarity table.

#include <cstdint>
#include <string>
#include <vector>

#include "simmerge/merge.hpp"
#include "simmerge/propagation.hpp"
#include "simmerge/selector.hpp"

namespace simmerge {

struct PlanScore {
    MergePlan plan;
    double predicted_utility = 0.0;
    std::vector<std::vector<double>> per_step_features;
    std::vector<std::array<double, kOperatorCount>> per_step_operator_utilities;
};

enum class EnumerationMode { Exhaustive, Sampled };

struct PlanSearchConfig {
    double alpha = 0.5;
    double tau = 0.05;
    int exhaustive_limit = 7; // k! orders beyond this are refused
    // Plan utility aggregation: final step's selected utility by default;
    // mean over steps available as an ablation.
    bool mean_over_steps = false;
};

// Order-only candidates. Exhaustive mode emits all k! orders in lexicographic
// order; sampled mode draws distinct orders uniformly.
std::vector<std::vector<std::string>> enumerate_plans(const std::vector<std::string>& model_ids,
                                                      EnumerationMode mode, int max_candidates,
                                                      std::uint64_t seed, int exhaustive_limit = 7);

PlanScore score_plan(const std::vector<std::string>& order, const SimilarityTable& table,
                     const SelectorModel& selector, const std::string& task_id,
                     const PlanSearchConfig& cfg = {});

MergePlan select_plan(const std::vector<std::string>& model_ids, const SimilarityTable& table,
                      const SelectorModel& selector, const std::string& task_id, EnumerationMode mode,
                      int max_candidates, std::uint64_t seed, const PlanSearchConfig& cfg = {});

// JSONL dump of scored candidates, sorted by predicted utility descending.
void dump_scored_plans(const std::vector<PlanScore>& scores, const std::string& path);

} // namespace simmerge

#pragma once

// End-to-end experiment campaigns and report persistence.
//
// Campaigns are pure functions of (catalog seed, config): offline pairwise
// evaluation against fixed operators, multiway plan evaluation with an
// order ablation, oracle-grounded plan-scoring studies, and the online
// bandit comparison. Results land in a ReportBundle that can be written to
// a directory as JSON tables and plot-ready CSVs.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "simmerge/bandit.hpp"
#include "simmerge/catalog.hpp"
#include "simmerge/metrics.hpp"
#include "simmerge/planning.hpp"
#include "simmerge/selector.hpp"

namespace simmerge {

struct MergeOutcome {
    MergePlan plan;
    std::string method; // fixed-linear | fixed-slerp | fixed-ties | simmerge | random-order | bandit-<policy>
    double score = 0.0;
    double s_expert = 0.0;
    double s_aux = 0.0; // unweighted mean over the plan's auxiliaries
};

struct MethodStats {
    double mean_score = 0.0;
    double mean_delta_expert = 0.0;
    double mean_delta_aux = 0.0;
    double mean_gap_closed = 0.0;
    int n = 0;
};

struct TailCell {
    std::string feature;
    OperatorKind op = OperatorKind::Linear;
    double dp_win = 0.0;
    int n = 0;
};

struct ReportBundle {
    std::string kind; // offline | multiway | bandit
    std::uint64_t seed = 0;
    std::vector<MergeOutcome> outcomes;
    // method -> task -> stats, and method -> unweighted macro-average.
    std::map<std::string, std::map<std::string, MethodStats>> per_task;
    std::map<std::string, MethodStats> macro;
    std::array<int, kOperatorCount> label_balance{};
    std::optional<ClassifierReport> confusion_with_encoding;
    std::optional<ClassifierReport> confusion_without_encoding;
    std::vector<CorrelationCell> correlation_cells;
    std::vector<TailCell> tail_cells;
    std::map<std::string, std::vector<double>> regret_traces; // policy -> cumulative regret
};

// Grouped aggregation of outcomes into per-task and macro tables.
void aggregate_outcomes(ReportBundle& bundle);

// Feature value representing a merge case: the feature averaged over all
// ordered pairs among the case's models on the case's task.
double case_feature_value(const SimilarityTable& table, const std::vector<std::string>& model_ids,
                          const std::string& task_id, const std::string& feature);

struct OfflineCampaignConfig {
    int n_train_pairs = 240; // includes the validation carve-out
    int n_test_pairs = 60;
    DatasetConfig dataset;
    SelectorHyperparams selector;
    bool task_encoding_ablation = true;
    std::uint64_t seed = 1;
};

ReportBundle run_offline_campaign(const Catalog& catalog, const OfflineCampaignConfig& cfg);

struct MultiwayCampaignConfig {
    int n_instances = 24;
    int n_train_pairs = 120;
    DatasetConfig dataset;
    SelectorHyperparams selector;
    PlanSearchConfig plan_search;
    std::uint64_t seed = 1;
};

ReportBundle run_multiway_campaign(const Catalog& catalog, int k, const MultiwayCampaignConfig& cfg);

// Oracle-grounded plan-scoring study: every instance is scored by the
// selector and brute-forced over all (order, operator-sequence) plans.
struct PlanInstanceResult {
    std::string task_id;
    std::vector<std::string> model_ids;
    MergePlan simmerge_plan;
    double simmerge_utility = 0.0;
    double random_order_utility = 0.0; // same operator sequence, random order
    double best_utility = 0.0;
    double worst_utility = 0.0;
    double rank_fraction = 0.0; // fraction of plans with strictly higher true utility
    std::size_t plan_count = 0;
    double s_expert = 0.0;
    double s_aux = 0.0;
};

struct PlanOracleStudy {
    std::vector<PlanInstanceResult> instances;
    double top30_hit_rate = 0.0;        // fraction of instances with rank_fraction < 0.30
    double simmerge_macro_gap = 0.0;    // macro GapClosed of the selected plans
    double random_macro_gap = 0.0;      // macro GapClosed of the order ablation
};

struct PlanOracleConfig {
    int k = 4; // checkpoints per instance (one expert + k-1 auxiliaries)
    int n_catalogs = 10;
    int instances_per_catalog = 5;
    int experts_per_task = 12;
    int n_tasks = 4;
    int probe_size = 16;
    int eval_size = 64;
    int n_train_pairs = 120;
    DatasetConfig dataset;
    SelectorHyperparams selector;
    PlanSearchConfig plan_search;
    std::uint64_t seed = 1;
};

PlanOracleStudy run_plan_oracle_study(const PlanOracleConfig& cfg);

struct BanditCampaignConfig {
    std::vector<Policy> policies{Policy::Oracle, Policy::LinTS, Policy::LinUCB, Policy::Uniform};
    int rounds = 60;
    std::string shift_task; // empty: last task of the catalog
    int n_train_pairs = 160;
    DatasetConfig dataset;
    SelectorHyperparams encoder;
    BanditConfig bandit;
    std::uint64_t seed = 1;
};

ReportBundle run_bandit_campaign(const Catalog& catalog, const BanditCampaignConfig& cfg);

// ---- persistence ----

std::uint64_t file_fnv1a(const std::string& path);

void write_report_bundle(const ReportBundle& bundle, const std::string& dir,
                         const std::string& config_echo_json = "{}");

// Renders the tables of a written bundle directory to plain text and emits
// plot-ready CSVs next to it.
std::string render_report_text(const std::string& bundle_dir);

} // namespace simmerge

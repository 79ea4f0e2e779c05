#pragma once

// Evaluation metrics and outcome analyses: normalized percentage changes
// against the expert/auxiliary baselines, gap-closed, rank correlations,
// win-probability trends over feature percentiles, and tail effects.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "simmerge/merge.hpp"

namespace simmerge {

// 100 * (score - s_expert) / s_expert.
double delta_expert(double score, double s_expert);
// 100 * (score - s_aux) / s_aux.
double delta_aux(double score, double s_aux);
// 100 * (score - s_aux) / (s_expert - s_aux); 0 at the auxiliary baseline,
// 100 at the expert; may exceed 100 or go negative.
double gap_closed(double score, double s_expert, double s_aux);

// Missing when either series is constant (coefficient undefined).
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

// Average ranks (1-based, ties averaged).
std::vector<double> average_ranks(const std::vector<double>& values);

// One merge case for the feature-conditioned analyses: a feature value and
// the executed score of every operator on that case.
struct OperatorCase {
    std::string case_id;
    double feature_value = 0.0;
    std::array<double, kOperatorCount> scores{};
};

// Winner of a case: highest executed score; exact ties go to the lower
// operator index.
int case_winner(const OperatorCase& c);

// Tail-effect score for one operator and one feature:
//   P(win | case in the top feature quintile) - P(win | bottom quintile).
// Quintile boundaries are taken by feature rank with ties broken by case id.
double tail_effect(const std::vector<OperatorCase>& cases, OperatorKind op);

// Equal-mass percentile bins over the feature; per bin, the win frequency of
// each operator (frequencies in a bin sum to 1).
std::vector<std::array<double, kOperatorCount>> percentile_bin_trends(const std::vector<OperatorCase>& cases,
                                                                      int bins);

struct CorrelationCell {
    std::string feature;
    OperatorKind op = OperatorKind::Linear;
    std::optional<double> pearson;
    std::optional<double> spearman;
    int n = 0;
};

// Per (feature, operator): correlation between the cases' feature values and
// the operator's executed scores. Requires >= 3 cases.
std::vector<CorrelationCell> correlations(const std::vector<OperatorCase>& cases, const std::string& feature);

} // namespace simmerge

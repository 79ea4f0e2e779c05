#pragma once

// Binary merge operators over checkpoints and the sequential plan fold.
//
// All three operators act per parameter tensor:
//   linear : (1-alpha) * a + alpha * b
//   slerp  : spherical interpolation of normalized tensors, rescaled to the
//            average input norm; near-parallel and antipodal tensors fall
//            back to linear interpolation of the normalized inputs
//   ties   : coordinate-wise sign-consistent rule; aligned coordinates above
//            the threshold blend as alpha * a + (1-alpha) * b, conflicts keep
//            the larger-magnitude entry if it clears the threshold, the rest
//            are pruned to zero
//
// Note the deliberate asymmetry: linear weights b by alpha while the ties
// blend weights a by alpha. Both follow their defining formulas verbatim; at
// the default alpha = 0.5 the distinction vanishes.

#include <optional>
#include <string>
#include <vector>

#include "simmerge/catalog.hpp"
#include "simmerge/checkpoint.hpp"

namespace simmerge {

enum class OperatorKind { Linear, Slerp, Ties };

constexpr int kOperatorCount = 3;

std::string operator_name(OperatorKind kind);
OperatorKind operator_from_name(const std::string& name);
OperatorKind operator_from_index(int index);
int operator_index(OperatorKind kind);

struct MergeOperator {
    OperatorKind kind = OperatorKind::Linear;
    double alpha = 0.5;
    std::optional<double> tau; // present iff kind == Ties

    void validate() const;

    static MergeOperator linear(double alpha = 0.5) { return {OperatorKind::Linear, alpha, std::nullopt}; }
    static MergeOperator slerp(double alpha = 0.5) { return {OperatorKind::Slerp, alpha, std::nullopt}; }
    static MergeOperator ties(double alpha = 0.5, double tau = 0.05) { return {OperatorKind::Ties, alpha, tau}; }
    static MergeOperator make(OperatorKind kind, double alpha = 0.5, double tau = 0.05);
};

struct MergePlan {
    std::string task_id;
    std::vector<std::string> model_ids;     // >= 2, no duplicates
    std::vector<MergeOperator> operators;   // operators[j] produces M_{j+2}

    void validate() const;

    std::string to_json_string() const;
    static MergePlan from_json_string(const std::string& text);
};

Checkpoint merge_linear(const Checkpoint& a, const Checkpoint& b, double alpha);
Checkpoint merge_slerp(const Checkpoint& a, const Checkpoint& b, double alpha);
Checkpoint merge_ties(const Checkpoint& a, const Checkpoint& b, double alpha, double tau);

Checkpoint apply_operator(const MergeOperator& op, const Checkpoint& a, const Checkpoint& b);

// Left fold: M_1 = first model, M_j = op_j(M_{j-1}, model_j). Validates that
// the plan references resolvable ids and at most one checkpoint per task.
Checkpoint execute_plan(const MergePlan& plan, const Catalog& catalog);

} // namespace simmerge

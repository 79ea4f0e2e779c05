#pragma once

// Proxy similarity features for hypothetical intermediate merges.
//
// An intermediate produced by equal-weight folds is represented as a weighted
// mixture of raw checkpoints. Channel values between two mixtures are blended
// from the pairwise table: sum_{i,j} w_i v_j * value(P_i, Q_j). For KL this is
// the convexity upper bound, for l2 the triangle-inequality upper bound, and
// for cosines a clipped linear heuristic. Norms of intermediates use the
// weight-averaged component norms.

#include <string>
#include <vector>

#include "simmerge/features.hpp"

namespace simmerge {

struct MixtureComponent {
    std::string id;
    double weight = 0.0;
};

using MixtureProxy = std::vector<MixtureComponent>;

void validate_mixture(const MixtureProxy& mix);

MixtureProxy singleton_mixture(const std::string& id);

// Fold step: prefix weights scale by (1 - alpha), the new model enters with
// weight alpha. With alpha = 1/2 the weights stay dyadic.
MixtureProxy fold_mixture(const MixtureProxy& prefix, const std::string& next_id, double alpha);

enum class CosineChannel { Weight, Attention, Activation };

// sum_{i,j} w_i v_j * kl_mean(P_i, Q_j); orientation-sensitive (left || right).
double propagate_kl(const MixtureProxy& left, const MixtureProxy& right, const SimilarityTable& table,
                    const std::string& task_id);

// sum_{i,j} w_i v_j * weight_l2(theta_i, theta_j); upper-bounds the true
// distance for linear intermediates.
double propagate_l2(const MixtureProxy& left, const MixtureProxy& right, const SimilarityTable& table);

// Linear blend of the channel's mean summary, clipped to [-1, 1].
double propagate_cosine(const MixtureProxy& left, const MixtureProxy& right, const SimilarityTable& table,
                        const std::string& task_id, CosineChannel channel);

// Generic double-mixture blend over a caller-supplied pairwise value. Exposed
// so independent oracles can exercise the same arithmetic on raw inputs.
double double_mixture_blend(const std::vector<double>& left_weights, const std::vector<double>& right_weights,
                            const std::vector<std::vector<double>>& pairwise);

// Full proxy feature vector for the pair (prefix mixture, next checkpoint):
// every summary channel is blended with the double-mixture rule, cosines are
// clipped, norms use weighted component norms; the task one-hot is appended.
// For a singleton prefix this reproduces the exact table features.
std::vector<double> intermediate_features(const MixtureProxy& prefix, const std::string& next_id,
                                          const SimilarityTable& table, const std::string& task_id);

} // namespace simmerge

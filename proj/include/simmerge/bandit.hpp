#pragma once

// Neural-linear contextual bandit over the three merge operators.
//
// A frozen encoder (the selector network's hidden layer) maps similarity
// features to a representation z. Each arm keeps a Bayesian linear model
// N(w_hat, sigma^2 A^{-1}) with A = lambda I + sum z z^T, b = sum r z,
// maintained by rank-one updates (Sherman-Morrison on the inverse, O(d^2)
// per round). Warm start replays the fully-observed pairwise log into every
// arm; online rounds update only the chosen arm.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "simmerge/catalog.hpp"
#include "simmerge/features.hpp"
#include "simmerge/selector.hpp"

namespace simmerge {

struct ContextEncoder {
    SelectorModel net;
    bool frozen = false;

    std::vector<double> encode(const std::vector<double>& x) const {
        require(frozen, "context encoder: encode before freeze");
        return hidden_representation(net, x);
    }
    int dim() const { return net.hidden; }
    std::uint64_t weights_hash() const;
};

class ArmPosterior {
public:
    ArmPosterior() = default;
    ArmPosterior(int dim, double lambda, double noise_var);

    void update(const std::vector<double>& z, double reward);

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& precision() const { return a_; }      // d x d row-major
    const std::vector<double>& precision_inv() const { return a_inv_; }
    const std::vector<double>& response() const { return b_; }
    int dim() const { return dim_; }
    double lambda() const { return lambda_; }
    double noise_var() const { return noise_var_; }
    int update_count() const { return updates_; }

    double mean_reward(const std::vector<double>& z) const;
    // sqrt(z^T A^{-1} z), the LinUCB confidence width.
    double bonus(const std::vector<double>& z) const;
    // Draw w ~ N(mean, scale^2 * A^{-1}).
    std::vector<double> sample_weights(Rng& rng, double scale) const;

    std::uint64_t state_hash() const;

private:
    int dim_ = 0;
    double lambda_ = 1.0;
    double noise_var_ = 0.1;
    int updates_ = 0;
    std::vector<double> a_;     // precision
    std::vector<double> a_inv_; // maintained via Sherman-Morrison
    std::vector<double> b_;
    std::vector<double> mean_;
};

struct BanditConfig {
    double lambda = 1.0;
    double noise_var = 0.1;
    double lints_scale = 0.1; // sigma_TS
    double linucb_beta = 1.0;
};

struct BanditState {
    ContextEncoder encoder;
    std::array<ArmPosterior, kOperatorCount> arms;
    BanditConfig cfg;
};

// Trains the encoder on the logged pairwise data (selector recipe), freezes
// it, then replays every row into every arm's posterior (full information).
BanditState warm_start(const PairwiseDataset& dataset, const SelectorHyperparams& encoder_hyper,
                       const BanditConfig& cfg);

int select_arm_lints(const std::array<ArmPosterior, kOperatorCount>& arms, const std::vector<double>& z,
                     double scale, Rng& rng);
int select_arm_lints(const std::array<ArmPosterior, kOperatorCount>& arms, const std::vector<double>& z,
                     double scale, std::uint64_t seed);

// argmax of mean + beta * bonus; ties go to the lower operator index.
int select_arm_linucb(const std::array<ArmPosterior, kOperatorCount>& arms, const std::vector<double>& z,
                      double beta);

enum class Policy { LinTS, LinUCB, Uniform, Oracle };

std::string policy_name(Policy p);
Policy policy_from_name(const std::string& name);

struct RoundRecord {
    int round = 0;
    std::string context_id;
    std::string task_id;
    int arm = 0;
    double reward = 0.0;
    double oracle_best = 0.0;
    std::array<double, kOperatorCount> all_rewards{}; // oracle bookkeeping only
};

struct BanditLog {
    Policy policy = Policy::LinTS;
    BanditConfig cfg;
    std::uint64_t seed = 0;
    std::string shift_task;
    std::vector<RoundRecord> rounds;
    std::vector<double> cumulative_regret;

    double final_regret() const { return cumulative_regret.empty() ? 0.0 : cumulative_regret.back(); }
};

// Online loop under distribution shift: each round merges a random known-task
// expert with a random checkpoint of the shift task, the learner picks an
// operator, the true merge runs, and only the chosen arm's posterior is
// updated (uniform and oracle policies never update). The other operators'
// rewards are executed purely for regret bookkeeping.
BanditLog run_online(BanditState& state, const Catalog& catalog, const SimilarityTable& table, Policy policy,
                     int rounds, const std::string& shift_task, std::uint64_t seed, double alpha = 0.5,
                     double tau = 0.05);

// JSONL rounds + CSV regret trace + manifest echoing policy and parameters.
void write_bandit_log(const BanditLog& log, const std::string& dir);

} // namespace simmerge

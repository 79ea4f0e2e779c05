#include "simmerge/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "simmerge/merge.hpp"

namespace simmerge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t hash_doubles(const std::vector<double>& v, std::uint64_t h) {
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        h = fnv1a_u64(bits, h);
    }
    return h;
}

// Cholesky factorization of a symmetric positive-definite matrix (row-major).
// Returns false when a non-positive pivot appears.
bool cholesky(const std::vector<double>& a, int n, std::vector<double>& l) {
    l.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k) {
                sum -= l[static_cast<std::size_t>(i) * n + k] * l[static_cast<std::size_t>(j) * n + k];
            }
            if (i == j) {
                if (sum <= 0.0) {
                    return false;
                }
                l[static_cast<std::size_t>(i) * n + j] = std::sqrt(sum);
            } else {
                l[static_cast<std::size_t>(i) * n + j] = sum / l[static_cast<std::size_t>(j) * n + j];
            }
        }
    }
    return true;
}

} // namespace

std::uint64_t ContextEncoder::weights_hash() const {
    std::uint64_t h = kFnvOffset;
    h = hash_doubles(net.w1, h);
    h = hash_doubles(net.b1, h);
    h = hash_doubles(net.w2, h);
    h = hash_doubles(net.b2, h);
    return h;
}

ArmPosterior::ArmPosterior(int dim, double lambda, double noise_var)
    : dim_(dim), lambda_(lambda), noise_var_(noise_var) {
    require(dim > 0, "arm posterior: dimension must be positive");
    require(lambda > 0.0, "arm posterior: lambda must be positive");
    require(noise_var > 0.0, "arm posterior: noise variance must be positive");
    a_.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    a_inv_.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) {
        a_[static_cast<std::size_t>(i) * dim + i] = lambda;
        a_inv_[static_cast<std::size_t>(i) * dim + i] = 1.0 / lambda;
    }
    b_.assign(static_cast<std::size_t>(dim), 0.0);
    mean_.assign(static_cast<std::size_t>(dim), 0.0);
}

void ArmPosterior::update(const std::vector<double>& z, double reward) {
    require(static_cast<int>(z.size()) == dim_, "arm posterior: dimension mismatch");

    // A += z z^T; A^{-1} via Sherman-Morrison in O(d^2).
    std::vector<double> ainv_z(static_cast<std::size_t>(dim_), 0.0);
    for (int i = 0; i < dim_; ++i) {
        const double* row = a_inv_.data() + static_cast<std::size_t>(i) * dim_;
        double acc = 0.0;
        for (int j = 0; j < dim_; ++j) {
            acc += row[j] * z[static_cast<std::size_t>(j)];
        }
        ainv_z[static_cast<std::size_t>(i)] = acc;
    }
    double denom = 1.0;
    for (int i = 0; i < dim_; ++i) {
        denom += z[static_cast<std::size_t>(i)] * ainv_z[static_cast<std::size_t>(i)];
    }
    require(denom > 0.0, "arm posterior: update lost positive definiteness (denominator " +
                             std::to_string(denom) + ")");

    for (int i = 0; i < dim_; ++i) {
        for (int j = 0; j < dim_; ++j) {
            a_[static_cast<std::size_t>(i) * dim_ + j] += z[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(j)];
            a_inv_[static_cast<std::size_t>(i) * dim_ + j] -=
                ainv_z[static_cast<std::size_t>(i)] * ainv_z[static_cast<std::size_t>(j)] / denom;
        }
    }
    for (int i = 0; i < dim_; ++i) {
        b_[static_cast<std::size_t>(i)] += reward * z[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < dim_; ++i) {
        const double* row = a_inv_.data() + static_cast<std::size_t>(i) * dim_;
        double acc = 0.0;
        for (int j = 0; j < dim_; ++j) {
            acc += row[j] * b_[static_cast<std::size_t>(j)];
        }
        mean_[static_cast<std::size_t>(i)] = acc;
    }
    updates_ += 1;
}

double ArmPosterior::mean_reward(const std::vector<double>& z) const {
    require(static_cast<int>(z.size()) == dim_, "arm posterior: dimension mismatch");
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
        acc += mean_[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
    }
    return acc;
}

double ArmPosterior::bonus(const std::vector<double>& z) const {
    require(static_cast<int>(z.size()) == dim_, "arm posterior: dimension mismatch");
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
        double row = 0.0;
        for (int j = 0; j < dim_; ++j) {
            row += a_inv_[static_cast<std::size_t>(i) * dim_ + j] * z[static_cast<std::size_t>(j)];
        }
        acc += z[static_cast<std::size_t>(i)] * row;
    }
    return std::sqrt(std::max(acc, 0.0));
}

std::vector<double> ArmPosterior::sample_weights(Rng& rng, double scale) const {
    // w = mean + scale * C xi with C C^T = A^{-1}.
    std::vector<double> l;
    require(cholesky(a_inv_, dim_, l), "arm posterior: covariance factorization failed");
    std::vector<double> xi(static_cast<std::size_t>(dim_));
    for (auto& x : xi) {
        x = rng.normal();
    }
    std::vector<double> w = mean_;
    for (int i = 0; i < dim_; ++i) {
        double acc = 0.0;
        for (int j = 0; j <= i; ++j) {
            acc += l[static_cast<std::size_t>(i) * dim_ + j] * xi[static_cast<std::size_t>(j)];
        }
        w[static_cast<std::size_t>(i)] += scale * acc;
    }
    return w;
}

std::uint64_t ArmPosterior::state_hash() const {
    std::uint64_t h = kFnvOffset;
    h = hash_doubles(a_, h);
    h = hash_doubles(b_, h);
    h = fnv1a_u64(static_cast<std::uint64_t>(updates_), h);
    return h;
}

BanditState warm_start(const PairwiseDataset& dataset, const SelectorHyperparams& encoder_hyper,
                       const BanditConfig& cfg) {
    require(!dataset.rows.empty(), "warm_start: empty dataset");

    BanditState state;
    state.cfg = cfg;
    state.encoder.net = train_selector(dataset, encoder_hyper);
    state.encoder.frozen = true;

    const int d = state.encoder.dim();
    for (auto& arm : state.arms) {
        arm = ArmPosterior(d, cfg.lambda, cfg.noise_var);
    }

    // Full-information replay: every arm sees every logged context.
    for (const auto& row : dataset.rows) {
        if (row.split == 2) {
            continue; // held-out rows are not part of the log
        }
        const auto z = state.encoder.encode(row.input(state.encoder.net.use_task_encoding));
        for (int o = 0; o < kOperatorCount; ++o) {
            state.arms[static_cast<std::size_t>(o)].update(z, row.utilities[static_cast<std::size_t>(o)]);
        }
    }
    return state;
}

int select_arm_lints(const std::array<ArmPosterior, kOperatorCount>& arms, const std::vector<double>& z,
                     double scale, Rng& rng) {
    int best = 0;
    double best_score = -1e300;
    for (int o = 0; o < kOperatorCount; ++o) {
        const auto w = arms[static_cast<std::size_t>(o)].sample_weights(rng, scale);
        double score = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            score += w[i] * z[i];
        }
        if (score > best_score) {
            best_score = score;
            best = o;
        }
    }
    return best;
}

int select_arm_lints(const std::array<ArmPosterior, kOperatorCount>& arms, const std::vector<double>& z,
                     double scale, std::uint64_t seed) {
    Rng rng(seed);
    return select_arm_lints(arms, z, scale, rng);
}

int select_arm_linucb(const std::array<ArmPosterior, kOperatorCount>& arms, const std::vector<double>& z,
                      double beta) {
    require(beta >= 0.0, "select_arm_linucb: beta must be nonnegative");
    int best = 0;
    double best_score = -1e300;
    for (int o = 0; o < kOperatorCount; ++o) {
        const double score = arms[static_cast<std::size_t>(o)].mean_reward(z) +
                             beta * arms[static_cast<std::size_t>(o)].bonus(z);
        if (score > best_score) {
            best_score = score;
            best = o;
        }
    }
    return best;
}

std::string policy_name(Policy p) {
    switch (p) {
    case Policy::LinTS: return "lints";
    case Policy::LinUCB: return "linucb";
    case Policy::Uniform: return "uniform";
    case Policy::Oracle: return "oracle";
    }
    fail("policy_name: bad policy");
}

Policy policy_from_name(const std::string& name) {
    if (name == "lints") {
        return Policy::LinTS;
    }
    if (name == "linucb") {
        return Policy::LinUCB;
    }
    if (name == "uniform") {
        return Policy::Uniform;
    }
    if (name == "oracle") {
        return Policy::Oracle;
    }
    fail("unknown policy '" + name + "'");
}

BanditLog run_online(BanditState& state, const Catalog& catalog, const SimilarityTable& table, Policy policy,
                     int rounds, const std::string& shift_task, std::uint64_t seed, double alpha, double tau) {
    require(rounds >= 1, "run_online: rounds must be positive");
    require(state.encoder.frozen, "run_online: warm-started state required");
    const TaskEntry& shift = catalog.task(shift_task); // validates the shift spec

    std::vector<const TaskEntry*> known_tasks;
    for (const auto& t : catalog.tasks) {
        if (t.task_id != shift_task) {
            known_tasks.push_back(&t);
        }
    }
    require(!known_tasks.empty(), "run_online: no non-shift tasks");

    BanditLog log;
    log.policy = policy;
    log.cfg = state.cfg;
    log.seed = seed;
    log.shift_task = shift_task;

    Rng instance_rng = Rng(seed).split("online-instances");
    Rng policy_rng = Rng(seed).split("online-policy");

    double cum = 0.0;
    for (int r = 0; r < rounds; ++r) {
        // Merge instance: expert of a random known task + a random shift-task
        // checkpoint as auxiliary, evaluated on the known task.
        const TaskEntry& target = *known_tasks[instance_rng.uniform_int(known_tasks.size())];
        const std::string& aux_id = shift.checkpoint_ids[instance_rng.uniform_int(shift.checkpoint_ids.size())];
        const Checkpoint& expert = catalog.by_id(target.expert_id);
        const Checkpoint& aux = catalog.by_id(aux_id);
        const auto& evals = catalog.evals(target.task_id);

        const auto x = table.features_with_encoding(expert.id(), aux.id(), target.task_id);
        const auto z = state.encoder.encode(x);

        // Oracle bookkeeping: all three rewards, learner only sees its own.
        std::array<double, kOperatorCount> rewards{};
        rewards[0] = evaluate_utility(merge_linear(expert, aux, alpha), evals);
        rewards[1] = evaluate_utility(merge_slerp(expert, aux, alpha), evals);
        rewards[2] = evaluate_utility(merge_ties(expert, aux, alpha, tau), evals);
        const double best = *std::max_element(rewards.begin(), rewards.end());

        int arm = 0;
        switch (policy) {
        case Policy::LinTS:
            arm = select_arm_lints(state.arms, z, state.cfg.lints_scale, policy_rng);
            break;
        case Policy::LinUCB:
            arm = select_arm_linucb(state.arms, z, state.cfg.linucb_beta);
            break;
        case Policy::Uniform:
            arm = static_cast<int>(policy_rng.uniform_int(kOperatorCount));
            break;
        case Policy::Oracle: {
            arm = 0;
            for (int o = 1; o < kOperatorCount; ++o) {
                if (rewards[static_cast<std::size_t>(o)] > rewards[static_cast<std::size_t>(arm)]) {
                    arm = o;
                }
            }
            break;
        }
        }

        const double reward = rewards[static_cast<std::size_t>(arm)];
        if (policy == Policy::LinTS || policy == Policy::LinUCB) {
            state.arms[static_cast<std::size_t>(arm)].update(z, reward);
        }

        RoundRecord rec;
        rec.round = r;
        rec.context_id = expert.id() + "|" + aux.id() + "|" + target.task_id;
        rec.task_id = target.task_id;
        rec.arm = arm;
        rec.reward = reward;
        rec.oracle_best = best;
        rec.all_rewards = rewards;
        log.rounds.push_back(std::move(rec));

        cum += best - reward;
        log.cumulative_regret.push_back(cum);
    }
    return log;
}

void write_bandit_log(const BanditLog& log, const std::string& dir) {
    fs::create_directories(dir);
    const fs::path root(dir);
    const std::string tag = policy_name(log.policy);

    {
        std::ofstream out(root / ("rounds_" + tag + ".jsonl"), std::ios::binary | std::ios::trunc);
        require(out.good(), "write_bandit_log: cannot open rounds file");
        for (const auto& r : log.rounds) {
            json j;
            j["round"] = r.round;
            j["context_id"] = r.context_id;
            j["task_id"] = r.task_id;
            j["arm"] = operator_name(operator_from_index(r.arm));
            j["reward"] = r.reward;
            j["oracle_best"] = r.oracle_best;
            j["all_rewards"] = r.all_rewards;
            out << j.dump() << "\n";
        }
    }
    {
        std::ofstream out(root / ("regret_" + tag + ".csv"), std::ios::binary | std::ios::trunc);
        require(out.good(), "write_bandit_log: cannot open regret file");
        out << "round,cumulative_regret\n";
        out.precision(17);
        for (std::size_t i = 0; i < log.cumulative_regret.size(); ++i) {
            out << i << "," << log.cumulative_regret[i] << "\n";
        }
    }
    {
        json manifest;
        manifest["policy"] = tag;
        manifest["seed"] = log.seed;
        manifest["shift_task"] = log.shift_task;
        manifest["rounds"] = log.rounds.size();
        manifest["final_regret"] = log.final_regret();
        manifest["config"] = json{{"lambda", log.cfg.lambda},
                                  {"noise_var", log.cfg.noise_var},
                                  {"lints_scale", log.cfg.lints_scale},
                                  {"linucb_beta", log.cfg.linucb_beta}};
        std::ofstream out(root / ("run_" + tag + ".json"), std::ios::binary | std::ios::trunc);
        require(out.good(), "write_bandit_log: cannot open manifest");
        out << manifest.dump(2) << "\n";
    }
}

} // namespace simmerge

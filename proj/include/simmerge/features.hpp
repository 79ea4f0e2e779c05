#pragma once

// Pre-merge similarity signals for ordered checkpoint pairs.
//
// Probe-based channels (KL divergence of next-token distributions,
// activation cosine, attention cosine) are summarized to five statistics
// each; weight-space channels (full-vector cosine, l2 distance, both norms)
// are scalars. The fixed feature layout is
//
//   kl_{mean,median,q25,q75,q90}
//   act_cos_{mean,median,q25,q75,q90}
//   attn_cos_{mean,median,q25,q75,q90}
//   weight_cos, weight_l2, norm_a, norm_b
//
// (19 entries). Appending a one-hot task encoding of dimension d_c gives the
// task-conditioned vector of dimension 19 + d_c.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "simmerge/catalog.hpp"
#include "simmerge/transformer.hpp"

namespace simmerge {

constexpr std::size_t kFeatureDim = 19;

// Feature names in vector order; the contract build_feature_vector relies on.
const std::vector<std::string>& feature_names();

struct TaskEncoding {
    std::string task_id;
    std::vector<double> code; // one-hot, dimension = number of tasks

    void validate() const;
};

TaskEncoding make_task_encoding(const std::vector<std::string>& task_ids, const std::string& task_id);

struct PairFeatures {
    std::string id_a;
    std::string id_b;
    std::string task_id;
    std::map<std::string, double> raw; // named summaries, keys = feature_names()
    std::vector<double> x;             // fixed-order vector of dimension kFeatureDim
};

struct WeightMetrics {
    double weight_cos = 0.0;
    double weight_l2 = 0.0;
    double norm_a = 0.0;
    double norm_b = 0.0;
};

// Precomputed per-prompt quantities for fast pairwise post-processing:
// softmax rows, stabilized log-probabilities, per-position entropy terms,
// and hidden/attention norms. Raw hidden states and attention matrices are
// referenced from the owning traces, which must outlive this view.
struct PreparedTraces {
    const std::vector<ForwardTrace>* traces = nullptr;
    std::vector<std::vector<double>> probs;    // per prompt, T x V
    std::vector<std::vector<double>> logp;     // per prompt, log(p + eps)
    std::vector<std::vector<double>> self_ent; // per prompt, T entries of sum_i p*log(p+eps)
    std::vector<std::vector<double>> hidden_norm; // per prompt, per layer
    std::vector<std::vector<double>> attn_norm;   // per prompt, per layer*head
};

PreparedTraces prepare_traces(const std::vector<ForwardTrace>& traces);

// Pointwise KL(p_a || p_b), mean over positions per prompt, summaries over
// prompts. Computed in log space with a 1e-12 additive stabilizer inside the
// logs; per-position values are clamped at zero to absorb stabilizer
// roundoff.
FiveSummary kl_features(const std::vector<ForwardTrace>& traces_a, const std::vector<ForwardTrace>& traces_b);
FiveSummary kl_features(const PreparedTraces& a, const PreparedTraces& b);

// Per (layer, prompt) cosine of flattened hidden states, mean over prompts
// per layer, summaries over layers.
FiveSummary activation_cosine_features(const std::vector<ForwardTrace>& traces_a,
                                       const std::vector<ForwardTrace>& traces_b);
FiveSummary activation_cosine_features(const PreparedTraces& a, const PreparedTraces& b);

// Per (layer, head, prompt) cosine of flattened attention matrices,
// summaries over all values.
FiveSummary attention_cosine_features(const std::vector<ForwardTrace>& traces_a,
                                      const std::vector<ForwardTrace>& traces_b);
FiveSummary attention_cosine_features(const PreparedTraces& a, const PreparedTraces& b);

WeightMetrics weight_metrics(const Checkpoint& a, const Checkpoint& b);

// Fixed-order concatenation of the named summaries, plus the task encoding
// when provided. Throws if a named field is missing.
std::vector<double> build_feature_vector(const std::map<std::string, double>& raw,
                                         const std::optional<TaskEncoding>& encoding);

PairFeatures compute_pair_features(const std::vector<ForwardTrace>& traces_a,
                                   const std::vector<ForwardTrace>& traces_b, const Checkpoint& a,
                                   const Checkpoint& b, const std::string& task_id);

class SimilarityTable {
public:
    struct Stats {
        std::size_t trace_sets_computed = 0; // forward-pass count, one per (checkpoint, task)
        std::size_t pair_entries = 0;
    };

    std::vector<std::string> task_ids;
    std::map<std::string, PairFeatures> entries;            // key: id_a|id_b|task
    std::map<std::string, std::vector<ForwardTrace>> probe_cache; // key: ckpt|task
    Stats stats;

    static std::string pair_key(const std::string& a, const std::string& b, const std::string& task) {
        return a + "|" + b + "|" + task;
    }
    static std::string cache_key(const std::string& ckpt, const std::string& task) { return ckpt + "|" + task; }

    bool has_pair(const std::string& a, const std::string& b, const std::string& task) const;
    const PairFeatures& pair(const std::string& a, const std::string& b, const std::string& task) const;
    const std::vector<ForwardTrace>& traces(const std::string& ckpt, const std::string& task) const;

    TaskEncoding encoding(const std::string& task_id) const { return make_task_encoding(task_ids, task_id); }

    // x-tilde for an ordered pair: pair features plus the task one-hot.
    std::vector<double> features_with_encoding(const std::string& a, const std::string& b,
                                               const std::string& task) const;

    std::size_t encoding_dim() const { return task_ids.size(); }
};

// Runs forward passes once per (checkpoint, task probe set), caches the
// traces, then fills features for every ordered pair (a != b) on every task.
SimilarityTable build_similarity_table(const Catalog& catalog);

// CSV with one row per (id_a, id_b, task_id) and one column per feature,
// plus `<path>.header.json` documenting column order.
void export_similarity_csv(const SimilarityTable& table, const std::string& path);

// Rebuilds table entries (raw maps and vectors) from an exported CSV; the
// probe cache is not part of the CSV contract.
SimilarityTable import_similarity_csv(const std::string& path);

} // namespace simmerge

#include "simmerge/propagation.hpp"

#include <algorithm>
#include <cmath>

namespace simmerge {

void validate_mixture(const MixtureProxy& mix) {
    require(!mix.empty(), "mixture: empty");
    double sum = 0.0;
    for (const auto& c : mix) {
        require(c.weight >= 0.0, "mixture: negative weight");
        sum += c.weight;
    }
    require(std::fabs(sum - 1.0) <= 1e-9, "mixture: weights must sum to 1");
}

MixtureProxy singleton_mixture(const std::string& id) { return {{id, 1.0}}; }

MixtureProxy fold_mixture(const MixtureProxy& prefix, const std::string& next_id, double alpha) {
    validate_mixture(prefix);
    require(alpha >= 0.0 && alpha <= 1.0, "fold_mixture: alpha out of [0,1]");
    MixtureProxy out;
    out.reserve(prefix.size() + 1);
    for (const auto& c : prefix) {
        out.push_back({c.id, c.weight * (1.0 - alpha)});
    }
    out.push_back({next_id, alpha});
    return out;
}

namespace {

// Blend of one named channel across all (left, right) component pairs.
// Diagonal pairs (same id on both sides) take the channel's identity value
// instead of a table lookup.
double blend_channel(const MixtureProxy& left, const MixtureProxy& right, const SimilarityTable& table,
                     const std::string& task_id, const std::string& channel, double identity_value) {
    validate_mixture(left);
    validate_mixture(right);
    double acc = 0.0;
    for (const auto& l : left) {
        for (const auto& r : right) {
            double v = identity_value;
            if (l.id != r.id) {
                const auto& pf = table.pair(l.id, r.id, task_id);
                const auto it = pf.raw.find(channel);
                require(it != pf.raw.end(), "propagation: channel '" + channel + "' missing from table");
                v = it->second;
            }
            acc += l.weight * r.weight * v;
        }
    }
    return acc;
}

} // namespace

double propagate_kl(const MixtureProxy& left, const MixtureProxy& right, const SimilarityTable& table,
                    const std::string& task_id) {
    return blend_channel(left, right, table, task_id, "kl_mean", 0.0);
}

double propagate_l2(const MixtureProxy& left, const MixtureProxy& right, const SimilarityTable& table) {
    require(!table.task_ids.empty(), "propagate_l2: table has no tasks");
    // weight_l2 is task-independent; use the first task's entries.
    return blend_channel(left, right, table, table.task_ids[0], "weight_l2", 0.0);
}

double propagate_cosine(const MixtureProxy& left, const MixtureProxy& right, const SimilarityTable& table,
                        const std::string& task_id, CosineChannel channel) {
    const char* name = channel == CosineChannel::Weight       ? "weight_cos"
                       : channel == CosineChannel::Attention  ? "attn_cos_mean"
                                                              : "act_cos_mean";
    return std::clamp(blend_channel(left, right, table, task_id, name, 1.0), -1.0, 1.0);
}

double double_mixture_blend(const std::vector<double>& left_weights, const std::vector<double>& right_weights,
                            const std::vector<std::vector<double>>& pairwise) {
    require(pairwise.size() == left_weights.size(), "double_mixture_blend: row count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < left_weights.size(); ++i) {
        require(pairwise[i].size() == right_weights.size(), "double_mixture_blend: column count mismatch");
        for (std::size_t j = 0; j < right_weights.size(); ++j) {
            acc += left_weights[i] * right_weights[j] * pairwise[i][j];
        }
    }
    return acc;
}

std::vector<double> intermediate_features(const MixtureProxy& prefix, const std::string& next_id,
                                          const SimilarityTable& table, const std::string& task_id) {
    validate_mixture(prefix);
    const MixtureProxy next = singleton_mixture(next_id);

    std::map<std::string, double> raw;
    for (const auto& name : feature_names()) {
        if (name == "norm_a" || name == "norm_b") {
            continue;
        }
        const bool is_kl = name.rfind("kl_", 0) == 0;
        const bool is_cos = name.find("cos") != std::string::npos;
        const bool is_l2 = name == "weight_l2";
        double identity = 0.0;
        if (is_cos) {
            identity = 1.0;
        }
        double v = blend_channel(prefix, next, table, task_id, name, identity);
        if (is_cos) {
            v = std::clamp(v, -1.0, 1.0);
        }
        if (is_kl || is_l2) {
            v = std::max(v, 0.0);
        }
        raw[name] = v;
    }

    // Norms of an intermediate: weighted mean of component norms (proxy).
    // A component's norm is read off any table row that mentions it.
    auto component_norm = [&](const std::string& id) {
        for (const auto& [key, pf] : table.entries) {
            if (pf.task_id != task_id) {
                continue;
            }
            if (pf.id_a == id) {
                return pf.raw.at("norm_a");
            }
            if (pf.id_b == id) {
                return pf.raw.at("norm_b");
            }
        }
        fail("intermediate_features: no table entry mentions '" + id + "'");
    };
    auto mixture_norm = [&](const MixtureProxy& mix) {
        double acc = 0.0;
        for (const auto& c : mix) {
            acc += c.weight * component_norm(c.id);
        }
        return acc;
    };
    raw["norm_a"] = mixture_norm(prefix);
    raw["norm_b"] = mixture_norm(next);

    return build_feature_vector(raw, table.encoding(task_id));
}

} // namespace simmerge

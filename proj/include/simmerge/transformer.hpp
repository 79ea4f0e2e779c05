#pragma once

// Deterministic forward passes for the toy transformer, plus the signals the
// similarity features consume: teacher-forced logits, post-residual hidden
// states, and per-head attention matrices.

#include <span>
#include <string>
#include <vector>

#include "simmerge/checkpoint.hpp"
#include "simmerge/common.hpp"

namespace simmerge {

struct ForwardTrace {
    std::string prompt_id;
    int t_len = 0;
    int vocab = 0;
    int n_layers = 0;
    int n_heads = 0;
    int d_model = 0;

    std::vector<float> logits;              // T x V, row-major
    std::vector<std::vector<float>> hidden; // per layer, T x d_model (post-residual)
    std::vector<std::vector<float>> attn;   // per (layer*n_heads + head), T x T

    std::span<const float> logits_row(int j) const {
        require(j >= 0 && j < t_len, "trace: position out of range");
        return {logits.data() + static_cast<std::size_t>(j) * vocab, static_cast<std::size_t>(vocab)};
    }
    std::span<const float> attn_matrix(int layer, int head) const {
        return {attn[static_cast<std::size_t>(layer) * n_heads + head]};
    }
};

// Teacher-forced forward pass over the full token sequence.
// Tokens must be valid ids and 1 <= len(tokens) <= max_seq_len.
ForwardTrace forward(const Checkpoint& ckpt, std::span<const int> tokens, std::string prompt_id = "");

// Softmax of logits row j; entries are strictly positive and sum to 1.
std::vector<double> next_token_distribution(const ForwardTrace& trace, int j);

// Mean per-token log-likelihood (natural log) of next tokens under teacher
// forcing, averaged over positions then sequences. This is the ground-truth
// utility U(m, t) of the synthetic harness.
double evaluate_utility(const Checkpoint& ckpt, const std::vector<std::vector<int>>& eval_set);

// Ancestral sampling: first token uniform over the vocabulary, remaining
// tokens drawn from the model's next-token distribution.
std::vector<int> sample_sequence(const Checkpoint& ckpt, int length, Rng& rng);

// Numerically stable softmax of a logits row (double accumulation).
std::vector<double> softmax(std::span<const float> logits);

} // namespace simmerge

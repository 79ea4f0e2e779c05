#include "simmerge/transformer.hpp"

#include <algorithm>
#include <cmath>

namespace simmerge {

namespace {

constexpr double kRmsEps = 1e-5;

// Sinusoidal positional encoding; a fixed architecture constant, not a
// checkpoint parameter.
void positional_encoding(int pos, int d_model, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(d_model));
    for (int i = 0; i < d_model; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / d_model);
        out[static_cast<std::size_t>(i)] = std::sin(pos * freq);
        if (i + 1 < d_model) {
            out[static_cast<std::size_t>(i) + 1] = std::cos(pos * freq);
        }
    }
}

// y[t] = x[t] / rms(x[t]) * scale, rows independent.
void rmsnorm_rows(const std::vector<double>& x, int t_len, int d, std::span<const float> scale,
                  std::vector<double>& y) {
    y.resize(x.size());
    for (int t = 0; t < t_len; ++t) {
        const double* row = x.data() + static_cast<std::size_t>(t) * d;
        double ms = 0.0;
        for (int i = 0; i < d; ++i) {
            ms += row[i] * row[i];
        }
        const double inv = 1.0 / std::sqrt(ms / d + kRmsEps);
        double* out = y.data() + static_cast<std::size_t>(t) * d;
        for (int i = 0; i < d; ++i) {
            out[i] = row[i] * inv * scale[static_cast<std::size_t>(i)];
        }
    }
}

// y[t] = x[t] @ W with W row-major [rows x cols]; x rows have `rows` entries.
void matmul_rows(const std::vector<double>& x, int t_len, int rows, int cols, std::span<const float> w,
                 std::vector<double>& y) {
    y.assign(static_cast<std::size_t>(t_len) * cols, 0.0);
    for (int t = 0; t < t_len; ++t) {
        const double* xin = x.data() + static_cast<std::size_t>(t) * rows;
        double* out = y.data() + static_cast<std::size_t>(t) * cols;
        for (int r = 0; r < rows; ++r) {
            const double xv = xin[r];
            const float* wrow = w.data() + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) {
                out[c] += xv * wrow[c];
            }
        }
    }
}

} // namespace

ForwardTrace forward(const Checkpoint& ckpt, std::span<const int> tokens, std::string prompt_id) {
    const ArchConfig& arch = ckpt.arch();
    const int t_len = static_cast<int>(tokens.size());
    require(t_len >= 1, "forward: empty token sequence");
    require(t_len <= arch.max_seq_len, "forward: sequence longer than max_seq_len");
    for (int tok : tokens) {
        require(tok >= 0 && tok < arch.vocab_size, "forward: invalid token id");
    }

    const int d = arch.d_model;
    const int h = arch.n_heads;
    const int dh = arch.head_dim();
    const int ff = arch.d_ff;
    const int v = arch.vocab_size;

    ForwardTrace trace;
    trace.prompt_id = std::move(prompt_id);
    trace.t_len = t_len;
    trace.vocab = v;
    trace.n_layers = arch.n_layers;
    trace.n_heads = h;
    trace.d_model = d;
    trace.hidden.resize(static_cast<std::size_t>(arch.n_layers));
    trace.attn.resize(static_cast<std::size_t>(arch.n_layers) * h);

    // Residual stream: embedding + positional encoding.
    std::vector<double> x(static_cast<std::size_t>(t_len) * d);
    const auto embed = ckpt.tensor("embed.tok");
    std::vector<double> pe;
    for (int t = 0; t < t_len; ++t) {
        positional_encoding(t, d, pe);
        const float* row = embed.data() + static_cast<std::size_t>(tokens[static_cast<std::size_t>(t)]) * d;
        for (int i = 0; i < d; ++i) {
            x[static_cast<std::size_t>(t) * d + i] = static_cast<double>(row[i]) + pe[static_cast<std::size_t>(i)];
        }
    }

    std::vector<double> u, q, k, vv, attn_out, proj, mlp_h, mlp_o;
    for (int layer = 0; layer < arch.n_layers; ++layer) {
        const std::string p = "layer" + std::to_string(layer) + ".";

        // Attention sublayer.
        rmsnorm_rows(x, t_len, d, ckpt.tensor(p + "attn.norm"), u);
        matmul_rows(u, t_len, d, d, ckpt.tensor(p + "attn.wq"), q);
        matmul_rows(u, t_len, d, d, ckpt.tensor(p + "attn.wk"), k);
        matmul_rows(u, t_len, d, d, ckpt.tensor(p + "attn.wv"), vv);

        attn_out.assign(static_cast<std::size_t>(t_len) * d, 0.0);
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int head = 0; head < h; ++head) {
            const int hs = head * dh;
            auto& a = trace.attn[static_cast<std::size_t>(layer) * h + head];
            a.assign(static_cast<std::size_t>(t_len) * t_len, 0.0f);
            for (int i = 0; i < t_len; ++i) {
                // Causal scores over j <= i, stabilized softmax.
                double max_s = -1e300;
                std::vector<double> scores(static_cast<std::size_t>(i) + 1);
                for (int j = 0; j <= i; ++j) {
                    double s = 0.0;
                    for (int c = 0; c < dh; ++c) {
                        s += q[static_cast<std::size_t>(i) * d + hs + c] * k[static_cast<std::size_t>(j) * d + hs + c];
                    }
                    s *= inv_sqrt;
                    scores[static_cast<std::size_t>(j)] = s;
                    max_s = std::max(max_s, s);
                }
                double sum = 0.0;
                for (int j = 0; j <= i; ++j) {
                    scores[static_cast<std::size_t>(j)] = std::exp(scores[static_cast<std::size_t>(j)] - max_s);
                    sum += scores[static_cast<std::size_t>(j)];
                }
                for (int j = 0; j <= i; ++j) {
                    const double w = scores[static_cast<std::size_t>(j)] / sum;
                    a[static_cast<std::size_t>(i) * t_len + j] = static_cast<float>(w);
                    for (int c = 0; c < dh; ++c) {
                        attn_out[static_cast<std::size_t>(i) * d + hs + c] +=
                            w * vv[static_cast<std::size_t>(j) * d + hs + c];
                    }
                }
            }
        }
        matmul_rows(attn_out, t_len, d, d, ckpt.tensor(p + "attn.wo"), proj);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += proj[i];
        }

        // MLP sublayer.
        rmsnorm_rows(x, t_len, d, ckpt.tensor(p + "mlp.norm"), u);
        matmul_rows(u, t_len, d, ff, ckpt.tensor(p + "mlp.w_in"), mlp_h);
        for (double& val : mlp_h) {
            val = std::max(val, 0.0);
        }
        matmul_rows(mlp_h, t_len, ff, d, ckpt.tensor(p + "mlp.w_out"), mlp_o);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += mlp_o[i];
        }

        auto& hid = trace.hidden[static_cast<std::size_t>(layer)];
        hid.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            hid[i] = static_cast<float>(x[i]);
        }
    }

    std::vector<double> logits;
    matmul_rows(x, t_len, d, v, ckpt.tensor("unembed"), logits);
    trace.logits.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        trace.logits[i] = static_cast<float>(logits[i]);
    }
    return trace;
}

std::vector<double> softmax(std::span<const float> logits) {
    require(!logits.empty(), "softmax: empty logits");
    double max_l = -1e300;
    for (float l : logits) {
        max_l = std::max(max_l, static_cast<double>(l));
    }
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - max_l);
        sum += p[i];
    }
    for (double& v : p) {
        v /= sum;
    }
    return p;
}

std::vector<double> next_token_distribution(const ForwardTrace& trace, int j) {
    return softmax(trace.logits_row(j));
}

double evaluate_utility(const Checkpoint& ckpt, const std::vector<std::vector<int>>& eval_set) {
    require(!eval_set.empty(), "evaluate_utility: empty eval set");
    double total = 0.0;
    for (const auto& seq : eval_set) {
        require(seq.size() >= 2, "evaluate_utility: sequence needs at least 2 tokens");
        const ForwardTrace trace = forward(ckpt, seq);
        double seq_ll = 0.0;
        const int positions = static_cast<int>(seq.size()) - 1;
        for (int j = 0; j < positions; ++j) {
            const auto p = next_token_distribution(trace, j);
            seq_ll += std::log(p[static_cast<std::size_t>(seq[static_cast<std::size_t>(j) + 1])]);
        }
        total += seq_ll / positions;
    }
    return total / static_cast<double>(eval_set.size());
}

std::vector<int> sample_sequence(const Checkpoint& ckpt, int length, Rng& rng) {
    require(length >= 1 && length <= ckpt.arch().max_seq_len, "sample_sequence: invalid length");
    std::vector<int> tokens;
    tokens.reserve(static_cast<std::size_t>(length));
    tokens.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(ckpt.arch().vocab_size))));
    while (static_cast<int>(tokens.size()) < length) {
        const ForwardTrace trace = forward(ckpt, tokens);
        const auto p = next_token_distribution(trace, static_cast<int>(tokens.size()) - 1);
        const double r = rng.uniform();
        double cdf = 0.0;
        int pick = ckpt.arch().vocab_size - 1;
        for (std::size_t i = 0; i < p.size(); ++i) {
            cdf += p[i];
            if (r < cdf) {
                pick = static_cast<int>(i);
                break;
            }
        }
        tokens.push_back(pick);
    }
    return tokens;
}

} // namespace simmerge

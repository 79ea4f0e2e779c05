#include "simmerge/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace simmerge {

using nlohmann::json;

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        const char* summaries[] = {"mean", "median", "q25", "q75", "q90"};
        for (const char* channel : {"kl", "act_cos", "attn_cos"}) {
            for (const char* s : summaries) {
                n.push_back(std::string(channel) + "_" + s);
            }
        }
        n.insert(n.end(), {"weight_cos", "weight_l2", "norm_a", "norm_b"});
        return n;
    }();
    return names;
}

void TaskEncoding::validate() const {
    int ones = 0;
    for (double v : code) {
        require(v == 0.0 || v == 1.0, "task encoding: entries must be 0 or 1");
        if (v == 1.0) {
            ++ones;
        }
    }
    require(ones == 1, "task encoding: exactly one entry must be 1");
}

TaskEncoding make_task_encoding(const std::vector<std::string>& task_ids, const std::string& task_id) {
    TaskEncoding enc;
    enc.task_id = task_id;
    enc.code.assign(task_ids.size(), 0.0);
    const auto it = std::find(task_ids.begin(), task_ids.end(), task_id);
    require(it != task_ids.end(), "task encoding: unknown task '" + task_id + "'");
    enc.code[static_cast<std::size_t>(it - task_ids.begin())] = 1.0;
    return enc;
}

namespace {

constexpr double kKlEps = 1e-12;

void check_same_prompts(const std::vector<ForwardTrace>& a, const std::vector<ForwardTrace>& b) {
    require(a.size() == b.size() && !a.empty(), "features: prompt-set mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a[i].prompt_id == b[i].prompt_id && a[i].t_len == b[i].t_len && a[i].vocab == b[i].vocab,
                "features: prompt-set mismatch");
    }
}

double dot_f(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

double norm_f(std::span<const float> a) { return std::sqrt(dot_f(a, a)); }

} // namespace

PreparedTraces prepare_traces(const std::vector<ForwardTrace>& traces) {
    require(!traces.empty(), "prepare_traces: empty trace set");
    PreparedTraces prep;
    prep.traces = &traces;
    prep.probs.resize(traces.size());
    prep.logp.resize(traces.size());
    prep.self_ent.resize(traces.size());
    prep.hidden_norm.resize(traces.size());
    prep.attn_norm.resize(traces.size());
    for (std::size_t p = 0; p < traces.size(); ++p) {
        const auto& tr = traces[p];
        auto& probs = prep.probs[p];
        auto& logp = prep.logp[p];
        auto& ent = prep.self_ent[p];
        probs.resize(static_cast<std::size_t>(tr.t_len) * tr.vocab);
        logp.resize(probs.size());
        ent.resize(static_cast<std::size_t>(tr.t_len));
        for (int j = 0; j < tr.t_len; ++j) {
            const auto row = softmax(tr.logits_row(j));
            double e = 0.0;
            for (int v = 0; v < tr.vocab; ++v) {
                const std::size_t idx = static_cast<std::size_t>(j) * tr.vocab + v;
                probs[idx] = row[static_cast<std::size_t>(v)];
                logp[idx] = std::log(row[static_cast<std::size_t>(v)] + kKlEps);
                e += probs[idx] * logp[idx];
            }
            ent[static_cast<std::size_t>(j)] = e;
        }
        auto& hn = prep.hidden_norm[p];
        for (const auto& layer : tr.hidden) {
            const double n = norm_f(layer);
            require(n > 0.0, "activation cosine: zero-vector hidden state");
            hn.push_back(n);
        }
        auto& an = prep.attn_norm[p];
        for (const auto& mat : tr.attn) {
            an.push_back(norm_f(mat));
        }
    }
    return prep;
}

FiveSummary kl_features(const PreparedTraces& a, const PreparedTraces& b) {
    check_same_prompts(*a.traces, *b.traces);
    std::vector<double> per_prompt;
    per_prompt.reserve(a.probs.size());
    for (std::size_t p = 0; p < a.probs.size(); ++p) {
        const auto& tr = (*a.traces)[p];
        double acc = 0.0;
        for (int j = 0; j < tr.t_len; ++j) {
            const double* pa = a.probs[p].data() + static_cast<std::size_t>(j) * tr.vocab;
            const double* lb = b.logp[p].data() + static_cast<std::size_t>(j) * tr.vocab;
            double cross = 0.0;
            for (int v = 0; v < tr.vocab; ++v) {
                cross += pa[v] * lb[v];
            }
            acc += std::max(a.self_ent[p][static_cast<std::size_t>(j)] - cross, 0.0);
        }
        per_prompt.push_back(acc / tr.t_len);
    }
    return summarize(std::move(per_prompt));
}

FiveSummary kl_features(const std::vector<ForwardTrace>& traces_a, const std::vector<ForwardTrace>& traces_b) {
    return kl_features(prepare_traces(traces_a), prepare_traces(traces_b));
}

FiveSummary activation_cosine_features(const PreparedTraces& a, const PreparedTraces& b) {
    check_same_prompts(*a.traces, *b.traces);
    const int n_layers = (*a.traces)[0].n_layers;
    std::vector<double> per_layer;
    per_layer.reserve(static_cast<std::size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l) {
        double acc = 0.0;
        for (std::size_t p = 0; p < a.probs.size(); ++p) {
            const auto& ha = (*a.traces)[p].hidden[static_cast<std::size_t>(l)];
            const auto& hb = (*b.traces)[p].hidden[static_cast<std::size_t>(l)];
            const double c = dot_f(ha, hb) / (a.hidden_norm[p][static_cast<std::size_t>(l)] *
                                              b.hidden_norm[p][static_cast<std::size_t>(l)]);
            acc += std::clamp(c, -1.0, 1.0);
        }
        per_layer.push_back(acc / static_cast<double>(a.probs.size()));
    }
    return summarize(std::move(per_layer));
}

FiveSummary activation_cosine_features(const std::vector<ForwardTrace>& traces_a,
                                       const std::vector<ForwardTrace>& traces_b) {
    return activation_cosine_features(prepare_traces(traces_a), prepare_traces(traces_b));
}

FiveSummary attention_cosine_features(const PreparedTraces& a, const PreparedTraces& b) {
    check_same_prompts(*a.traces, *b.traces);
    const int n_layers = (*a.traces)[0].n_layers;
    const int n_heads = (*a.traces)[0].n_heads;
    std::vector<double> values;
    values.reserve(a.probs.size() * static_cast<std::size_t>(n_layers) * n_heads);
    for (std::size_t p = 0; p < a.probs.size(); ++p) {
        for (int l = 0; l < n_layers; ++l) {
            for (int h = 0; h < n_heads; ++h) {
                const std::size_t m = static_cast<std::size_t>(l) * n_heads + h;
                const auto& ma = (*a.traces)[p].attn[m];
                const auto& mb = (*b.traces)[p].attn[m];
                const double c = dot_f(ma, mb) / (a.attn_norm[p][m] * b.attn_norm[p][m]);
                values.push_back(std::clamp(c, -1.0, 1.0));
            }
        }
    }
    return summarize(std::move(values));
}

FiveSummary attention_cosine_features(const std::vector<ForwardTrace>& traces_a,
                                      const std::vector<ForwardTrace>& traces_b) {
    return attention_cosine_features(prepare_traces(traces_a), prepare_traces(traces_b));
}

WeightMetrics weight_metrics(const Checkpoint& a, const Checkpoint& b) {
    require(a.same_arch(b), "weight_metrics: arch mismatch");
    const auto fa = a.flat();
    const auto fb = b.flat();
    double dot_ab = 0.0, na = 0.0, nb = 0.0, dd = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        const double x = fa[i];
        const double y = fb[i];
        dot_ab += x * y;
        na += x * x;
        nb += y * y;
        dd += (x - y) * (x - y);
    }
    WeightMetrics m;
    m.norm_a = std::sqrt(na);
    m.norm_b = std::sqrt(nb);
    require(m.norm_a > 0.0 && m.norm_b > 0.0, "weight_metrics: zero-norm parameter vector");
    m.weight_cos = std::clamp(dot_ab / (m.norm_a * m.norm_b), -1.0, 1.0);
    m.weight_l2 = std::sqrt(dd);
    return m;
}

std::vector<double> build_feature_vector(const std::map<std::string, double>& raw,
                                         const std::optional<TaskEncoding>& encoding) {
    std::vector<double> x;
    x.reserve(kFeatureDim + (encoding ? encoding->code.size() : 0));
    for (const auto& name : feature_names()) {
        const auto it = raw.find(name);
        require(it != raw.end(), "build_feature_vector: missing field '" + name + "'");
        x.push_back(it->second);
    }
    if (encoding) {
        encoding->validate();
        x.insert(x.end(), encoding->code.begin(), encoding->code.end());
    }
    return x;
}

namespace {

void insert_summary(std::map<std::string, double>& raw, const std::string& channel, const FiveSummary& s) {
    raw[channel + "_mean"] = s.mean;
    raw[channel + "_median"] = s.median;
    raw[channel + "_q25"] = s.q25;
    raw[channel + "_q75"] = s.q75;
    raw[channel + "_q90"] = s.q90;
}

} // namespace

namespace {

PairFeatures pair_features_prepared(const PreparedTraces& ta, const PreparedTraces& tb, const Checkpoint& a,
                                    const Checkpoint& b, const std::string& task_id) {
    PairFeatures pf;
    pf.id_a = a.id();
    pf.id_b = b.id();
    pf.task_id = task_id;
    insert_summary(pf.raw, "kl", kl_features(ta, tb));
    insert_summary(pf.raw, "act_cos", activation_cosine_features(ta, tb));
    insert_summary(pf.raw, "attn_cos", attention_cosine_features(ta, tb));
    const WeightMetrics wm = weight_metrics(a, b);
    pf.raw["weight_cos"] = wm.weight_cos;
    pf.raw["weight_l2"] = wm.weight_l2;
    pf.raw["norm_a"] = wm.norm_a;
    pf.raw["norm_b"] = wm.norm_b;
    pf.x = build_feature_vector(pf.raw, std::nullopt);
    return pf;
}

} // namespace

PairFeatures compute_pair_features(const std::vector<ForwardTrace>& traces_a,
                                   const std::vector<ForwardTrace>& traces_b, const Checkpoint& a,
                                   const Checkpoint& b, const std::string& task_id) {
    return pair_features_prepared(prepare_traces(traces_a), prepare_traces(traces_b), a, b, task_id);
}

bool SimilarityTable::has_pair(const std::string& a, const std::string& b, const std::string& task) const {
    return entries.count(pair_key(a, b, task)) > 0;
}

const PairFeatures& SimilarityTable::pair(const std::string& a, const std::string& b,
                                          const std::string& task) const {
    const auto it = entries.find(pair_key(a, b, task));
    require(it != entries.end(), "similarity table: missing entry (" + a + ", " + b + ", " + task + ")");
    return it->second;
}

const std::vector<ForwardTrace>& SimilarityTable::traces(const std::string& ckpt, const std::string& task) const {
    const auto it = probe_cache.find(cache_key(ckpt, task));
    require(it != probe_cache.end(), "similarity table: missing cached traces (" + ckpt + ", " + task + ")");
    return it->second;
}

std::vector<double> SimilarityTable::features_with_encoding(const std::string& a, const std::string& b,
                                                            const std::string& task) const {
    const auto& pf = pair(a, b, task);
    return build_feature_vector(pf.raw, encoding(task));
}

SimilarityTable build_similarity_table(const Catalog& catalog) {
    catalog.validate();
    SimilarityTable table;
    table.task_ids = catalog.task_ids();

    std::vector<const Checkpoint*> models;
    for (const auto& c : catalog.checkpoints) {
        models.push_back(&c);
    }

    // Phase 1: one forward pass per (checkpoint, task probe set).
    for (const auto* m : models) {
        for (const auto& task : catalog.tasks) {
            const ProbeSet& probes = catalog.probes(task.task_id);
            std::vector<ForwardTrace> traces;
            traces.reserve(probes.prompts.size());
            for (std::size_t i = 0; i < probes.prompts.size(); ++i) {
                traces.push_back(forward(*m, probes.prompts[i], task.task_id + "#" + std::to_string(i)));
            }
            table.probe_cache[SimilarityTable::cache_key(m->id(), task.task_id)] = std::move(traces);
            table.stats.trace_sets_computed += 1;
        }
    }

    // Phase 2: pairwise post-processing from the cache. Derived per-trace
    // quantities (softmax rows, log-probs, norms) are prepared once per
    // (checkpoint, task) and shared across that task's pairs.
    for (const auto& task : catalog.tasks) {
        std::map<std::string, PreparedTraces> prepared;
        for (const auto* m : models) {
            prepared[m->id()] = prepare_traces(table.traces(m->id(), task.task_id));
        }
        for (const auto* a : models) {
            for (const auto* b : models) {
                if (a == b) {
                    continue;
                }
                PairFeatures pf =
                    pair_features_prepared(prepared.at(a->id()), prepared.at(b->id()), *a, *b, task.task_id);
                table.entries[SimilarityTable::pair_key(a->id(), b->id(), task.task_id)] = std::move(pf);
                table.stats.pair_entries += 1;
            }
        }
    }
    return table;
}

void export_similarity_csv(const SimilarityTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "export_similarity_csv: cannot open '" + path + "'");
    out << "id_a,id_b,task_id";
    for (const auto& name : feature_names()) {
        out << "," << name;
    }
    out << "\n";
    out.precision(17);
    for (const auto& [key, pf] : table.entries) {
        out << pf.id_a << "," << pf.id_b << "," << pf.task_id;
        for (double v : pf.x) {
            out << "," << v;
        }
        out << "\n";
    }
    require(out.good(), "export_similarity_csv: write failed");

    json header;
    header["columns"] = json::array({"id_a", "id_b", "task_id"});
    for (const auto& name : feature_names()) {
        header["columns"].push_back(name);
    }
    header["feature_dim"] = kFeatureDim;
    header["task_ids"] = table.task_ids;
    std::ofstream hout(path + ".header.json", std::ios::binary | std::ios::trunc);
    require(hout.good(), "export_similarity_csv: cannot open header file");
    hout << header.dump(2) << "\n";
}

SimilarityTable import_similarity_csv(const std::string& path) {
    std::ifstream hin(path + ".header.json", std::ios::binary);
    require(hin.good(), "import_similarity_csv: missing header '" + path + ".header.json'");
    json header;
    hin >> header;

    SimilarityTable table;
    table.task_ids = header.at("task_ids").get<std::vector<std::string>>();

    std::ifstream in(path, std::ios::binary);
    require(in.good(), "import_similarity_csv: missing '" + path + "'");
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "import_similarity_csv: empty file");

    const auto& names = feature_names();
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        PairFeatures pf;
        require(static_cast<bool>(std::getline(ss, pf.id_a, ',')), "import_similarity_csv: bad row");
        require(static_cast<bool>(std::getline(ss, pf.id_b, ',')), "import_similarity_csv: bad row");
        require(static_cast<bool>(std::getline(ss, pf.task_id, ',')), "import_similarity_csv: bad row");
        for (const auto& name : names) {
            require(static_cast<bool>(std::getline(ss, cell, ',')), "import_similarity_csv: short row");
            pf.raw[name] = std::stod(cell);
        }
        pf.x = build_feature_vector(pf.raw, std::nullopt);
        table.entries[SimilarityTable::pair_key(pf.id_a, pf.id_b, pf.task_id)] = std::move(pf);
        table.stats.pair_entries += 1;
    }
    return table;
}

} // namespace simmerge

#include "simmerge/selector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

namespace simmerge {

using nlohmann::json;

void Standardizer::fit(const std::vector<std::vector<double>>& rows) {
    require(!rows.empty(), "standardizer: no rows");
    const std::size_t dim = rows[0].size();
    mean.assign(dim, 0.0);
    std_dev.assign(dim, 0.0);
    for (const auto& r : rows) {
        require(r.size() == dim, "standardizer: ragged rows");
        for (std::size_t i = 0; i < dim; ++i) {
            mean[i] += r[i];
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(rows.size());
    }
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = r[i] - mean[i];
            std_dev[i] += d * d;
        }
    }
    for (double& s : std_dev) {
        s = std::sqrt(s / static_cast<double>(rows.size()));
        if (s <= 0.0) {
            s = 1.0;
        }
    }
}

std::vector<double> Standardizer::apply(const std::vector<double>& x) const {
    require(x.size() == mean.size(), "standardizer: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - mean[i]) / std_dev[i];
    }
    return out;
}

void SelectorModel::check_valid() const {
    require(in_dim > 0 && hidden > 0 && out_dim == kOperatorCount, "selector: bad dimensions");
    require(w1.size() == static_cast<std::size_t>(in_dim) * hidden, "selector: w1 size");
    require(b1.size() == static_cast<std::size_t>(hidden), "selector: b1 size");
    require(w2.size() == static_cast<std::size_t>(hidden) * out_dim, "selector: w2 size");
    require(b2.size() == static_cast<std::size_t>(out_dim), "selector: b2 size");
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    require(finite(w1) && finite(b1) && finite(w2) && finite(b2), "selector: non-finite weights");
}

std::vector<double> PairRow::input(bool with_encoding) const {
    std::vector<double> in = x;
    if (with_encoding) {
        in.insert(in.end(), encoding.begin(), encoding.end());
    }
    return in;
}

std::vector<const PairRow*> PairwiseDataset::split_rows(int split) const {
    std::vector<const PairRow*> out;
    for (const auto& r : rows) {
        if (r.split == split) {
            out.push_back(&r);
        }
    }
    return out;
}

void PairwiseDataset::check_split_hygiene() const {
    std::map<std::string, int> seen;
    for (const auto& r : rows) {
        const std::string key = r.id_a + "|" + r.id_b + "|" + r.task_id;
        const auto it = seen.find(key);
        require(it == seen.end(), "dataset: ordered pair appears in more than one row: " + key);
        seen[key] = r.split;
    }
}

PairwiseDataset build_pairwise_dataset(const Catalog& catalog, const SimilarityTable& table, int n_pairs,
                                       std::uint64_t seed, const DatasetConfig& cfg) {
    require(n_pairs >= 2, "build_pairwise_dataset: n_pairs too small");

    // Candidate ordered pairs: (designated expert of task t, any checkpoint
    // from another task), features conditioned on task t.
    struct Candidate {
        std::string expert;
        std::string aux;
        std::string task;
        bool flipped; // aux-first orientation
    };
    std::vector<Candidate> candidates;
    for (const auto& t : catalog.tasks) {
        if (t.task_id == cfg.exclude_task) {
            continue;
        }
        for (const auto& other : catalog.tasks) {
            if (other.task_id == t.task_id || other.task_id == cfg.exclude_task) {
                continue;
            }
            for (const auto& aux_id : other.checkpoint_ids) {
                candidates.push_back({t.expert_id, aux_id, t.task_id, false});
                if (cfg.both_orientations) {
                    candidates.push_back({t.expert_id, aux_id, t.task_id, true});
                }
            }
        }
    }
    const int total = n_pairs + cfg.n_test;
    require(static_cast<int>(candidates.size()) >= total,
            "build_pairwise_dataset: insufficient distinct pairs (" + std::to_string(candidates.size()) +
                " available, " + std::to_string(total) + " requested)");

    Rng rng = Rng(seed).split("pairwise-dataset");
    rng.shuffle(candidates);
    candidates.resize(static_cast<std::size_t>(total));

    const int n_val = static_cast<int>(std::lround(cfg.val_fraction * n_pairs));
    const int n_train = n_pairs - n_val;

    PairwiseDataset dataset;
    dataset.encoding_dim = table.encoding_dim();
    dataset.rows.reserve(candidates.size());

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        const Checkpoint& expert = catalog.by_id(c.expert);
        const Checkpoint& aux = catalog.by_id(c.aux);
        const Checkpoint& first = c.flipped ? aux : expert;
        const Checkpoint& second = c.flipped ? expert : aux;

        PairRow row;
        row.id_a = first.id();
        row.id_b = second.id();
        row.task_id = c.task;
        const auto& pf = table.pair(row.id_a, row.id_b, c.task);
        row.x = pf.x;
        row.encoding = table.encoding(c.task).code;

        const auto& evals = catalog.evals(c.task);
        row.utilities[0] = evaluate_utility(merge_linear(first, second, cfg.alpha), evals);
        row.utilities[1] = evaluate_utility(merge_slerp(first, second, cfg.alpha), evals);
        row.utilities[2] = evaluate_utility(merge_ties(first, second, cfg.alpha, cfg.tau), evals);
        row.best_op = 0;
        for (int o = 1; o < kOperatorCount; ++o) {
            if (row.utilities[static_cast<std::size_t>(o)] > row.utilities[static_cast<std::size_t>(row.best_op)]) {
                row.best_op = o;
            }
        }
        dataset.label_balance[static_cast<std::size_t>(row.best_op)] += 1;

        if (static_cast<int>(i) < n_train) {
            row.split = 0;
        } else if (static_cast<int>(i) < n_pairs) {
            row.split = 1;
        } else {
            row.split = 2;
        }
        dataset.rows.push_back(std::move(row));
    }
    dataset.check_split_hygiene();
    return dataset;
}

namespace {

struct ForwardScratch {
    std::vector<double> z;      // standardized input
    std::vector<double> h_pre;  // pre-activation hidden
    std::vector<double> h;      // post-ReLU (and dropout, when training)
    std::array<double, kOperatorCount> out{};
};

void model_forward(const SelectorModel& m, const std::vector<double>& input, ForwardScratch& s,
                   const std::vector<double>* dropout_mask) {
    s.z = m.standardizer.apply(input);
    s.h_pre.assign(static_cast<std::size_t>(m.hidden), 0.0);
    for (int i = 0; i < m.in_dim; ++i) {
        const double zi = s.z[static_cast<std::size_t>(i)];
        const double* wrow = m.w1.data() + static_cast<std::size_t>(i) * m.hidden;
        for (int j = 0; j < m.hidden; ++j) {
            s.h_pre[static_cast<std::size_t>(j)] += zi * wrow[j];
        }
    }
    s.h.resize(static_cast<std::size_t>(m.hidden));
    for (int j = 0; j < m.hidden; ++j) {
        double v = std::max(s.h_pre[static_cast<std::size_t>(j)] + m.b1[static_cast<std::size_t>(j)], 0.0);
        if (dropout_mask != nullptr) {
            v *= (*dropout_mask)[static_cast<std::size_t>(j)];
        }
        s.h[static_cast<std::size_t>(j)] = v;
    }
    for (int o = 0; o < kOperatorCount; ++o) {
        s.out[static_cast<std::size_t>(o)] = m.b2[static_cast<std::size_t>(o)];
    }
    for (int j = 0; j < m.hidden; ++j) {
        const double hj = s.h[static_cast<std::size_t>(j)];
        const double* wrow = m.w2.data() + static_cast<std::size_t>(j) * kOperatorCount;
        for (int o = 0; o < kOperatorCount; ++o) {
            s.out[static_cast<std::size_t>(o)] += hj * wrow[o];
        }
    }
}

int argmax3(const std::array<double, kOperatorCount>& v) {
    int best = 0;
    for (int o = 1; o < kOperatorCount; ++o) {
        if (v[static_cast<std::size_t>(o)] > v[static_cast<std::size_t>(best)]) {
            best = o;
        }
    }
    return best;
}

} // namespace

namespace selector_detail {

LossGrad mse_loss_and_grad(const SelectorModel& model, const std::vector<std::vector<double>>& inputs,
                           const std::vector<std::array<double, kOperatorCount>>& targets,
                           const std::vector<std::vector<double>>* dropout_masks) {
    require(inputs.size() == targets.size() && !inputs.empty(), "loss: batch size mismatch");
    LossGrad lg;
    lg.dw1.assign(model.w1.size(), 0.0);
    lg.db1.assign(model.b1.size(), 0.0);
    lg.dw2.assign(model.w2.size(), 0.0);
    lg.db2.assign(model.b2.size(), 0.0);

    ForwardScratch s;
    const double inv_n = 1.0 / (static_cast<double>(inputs.size()) * kOperatorCount);
    std::vector<double> dh(static_cast<std::size_t>(model.hidden));
    for (std::size_t n = 0; n < inputs.size(); ++n) {
        const std::vector<double>* mask = dropout_masks != nullptr ? &(*dropout_masks)[n] : nullptr;
        model_forward(model, inputs[n], s, mask);

        std::array<double, kOperatorCount> dout{};
        for (int o = 0; o < kOperatorCount; ++o) {
            const double err = s.out[static_cast<std::size_t>(o)] - targets[n][static_cast<std::size_t>(o)];
            lg.loss += err * err * inv_n;
            dout[static_cast<std::size_t>(o)] = 2.0 * err * inv_n;
        }

        std::fill(dh.begin(), dh.end(), 0.0);
        for (int j = 0; j < model.hidden; ++j) {
            const double hj = s.h[static_cast<std::size_t>(j)];
            double* wgrad = lg.dw2.data() + static_cast<std::size_t>(j) * kOperatorCount;
            const double* wrow = model.w2.data() + static_cast<std::size_t>(j) * kOperatorCount;
            for (int o = 0; o < kOperatorCount; ++o) {
                wgrad[o] += hj * dout[static_cast<std::size_t>(o)];
                dh[static_cast<std::size_t>(j)] += wrow[o] * dout[static_cast<std::size_t>(o)];
            }
        }
        for (int o = 0; o < kOperatorCount; ++o) {
            lg.db2[static_cast<std::size_t>(o)] += dout[static_cast<std::size_t>(o)];
        }

        for (int j = 0; j < model.hidden; ++j) {
            double g = dh[static_cast<std::size_t>(j)];
            if (mask != nullptr) {
                g *= (*mask)[static_cast<std::size_t>(j)];
            }
            if (s.h_pre[static_cast<std::size_t>(j)] + model.b1[static_cast<std::size_t>(j)] <= 0.0) {
                g = 0.0;
            }
            dh[static_cast<std::size_t>(j)] = g;
            lg.db1[static_cast<std::size_t>(j)] += g;
        }
        for (int i = 0; i < model.in_dim; ++i) {
            const double zi = s.z[static_cast<std::size_t>(i)];
            double* wgrad = lg.dw1.data() + static_cast<std::size_t>(i) * model.hidden;
            for (int j = 0; j < model.hidden; ++j) {
                wgrad[j] += zi * dh[static_cast<std::size_t>(j)];
            }
        }
    }
    return lg;
}

} // namespace selector_detail

namespace {

struct AdamState {
    std::vector<double> m, v;
    int t = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
        constexpr double beta1 = 0.9;
        constexpr double beta2 = 0.999;
        constexpr double eps = 1e-8;
        t += 1;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

double validation_accuracy(const SelectorModel& model, const std::vector<std::vector<double>>& inputs,
                           const std::vector<int>& labels) {
    ForwardScratch s;
    int hits = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        model_forward(model, inputs[i], s, nullptr);
        if (argmax3(s.out) == labels[i]) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(inputs.size());
}

double validation_mse(const SelectorModel& model, const std::vector<std::vector<double>>& inputs,
                      const std::vector<std::array<double, kOperatorCount>>& targets) {
    ForwardScratch s;
    double loss = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        model_forward(model, inputs[i], s, nullptr);
        for (int o = 0; o < kOperatorCount; ++o) {
            const double err = s.out[static_cast<std::size_t>(o)] - targets[i][static_cast<std::size_t>(o)];
            loss += err * err;
        }
    }
    return loss / (static_cast<double>(inputs.size()) * kOperatorCount);
}

} // namespace

SelectorModel train_selector(const PairwiseDataset& dataset, const SelectorHyperparams& hyper) {
    const auto train_ptrs = dataset.split_rows(0);
    const auto val_ptrs = dataset.split_rows(1);
    require(!train_ptrs.empty(), "train_selector: empty train split");
    require(!val_ptrs.empty(), "train_selector: empty val split");

    // Degenerate label distributions are allowed; the regressor still fits
    // utilities, only the classification view collapses.
    {
        std::set<int> labels;
        for (const auto* r : train_ptrs) {
            labels.insert(r->best_op);
        }
        if (labels.size() == 1) {
            std::cerr << "warning: train_selector: single-class training labels ("
                      << operator_name(operator_from_index(*labels.begin())) << " only)\n";
        }
    }

    std::vector<std::vector<double>> train_x, val_x;
    std::vector<std::array<double, kOperatorCount>> train_y, val_y;
    std::vector<int> val_labels;
    for (const auto* r : train_ptrs) {
        train_x.push_back(r->input(hyper.use_task_encoding));
        train_y.push_back(r->utilities);
    }
    for (const auto* r : val_ptrs) {
        val_x.push_back(r->input(hyper.use_task_encoding));
        val_y.push_back(r->utilities);
        val_labels.push_back(r->best_op);
    }

    SelectorModel model;
    model.in_dim = static_cast<int>(train_x[0].size());
    model.hidden = hyper.hidden;
    model.use_task_encoding = hyper.use_task_encoding;
    model.hyper = hyper;
    model.standardizer.fit(train_x);

    Rng init_rng = Rng(hyper.seed).split("selector-init");
    const double s1 = std::sqrt(2.0 / model.in_dim);
    const double s2 = std::sqrt(2.0 / model.hidden);
    model.w1.resize(static_cast<std::size_t>(model.in_dim) * model.hidden);
    model.b1.assign(static_cast<std::size_t>(model.hidden), 0.0);
    model.w2.resize(static_cast<std::size_t>(model.hidden) * kOperatorCount);
    model.b2.assign(kOperatorCount, 0.0);
    for (auto& w : model.w1) {
        w = init_rng.normal(0.0, s1);
    }
    for (auto& w : model.w2) {
        w = init_rng.normal(0.0, s2);
    }

    AdamState adam_w1(model.w1.size()), adam_b1(model.b1.size()), adam_w2(model.w2.size()), adam_b2(model.b2.size());
    Rng shuffle_rng = Rng(hyper.seed).split("selector-shuffle");
    Rng dropout_rng = Rng(hyper.seed).split("selector-dropout");

    SelectorModel best = model;
    double snapshot_acc = -1.0; // accuracy of the kept snapshot
    double snapshot_mse = 1e300;
    double best_mse_seen = 1e300;
    int since_improvement = 0;

    std::vector<std::size_t> order(train_x.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }

    for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
            std::vector<std::vector<double>> bx;
            std::vector<std::array<double, kOperatorCount>> by;
            std::vector<std::vector<double>> masks;
            const bool use_dropout = hyper.dropout > 0.0;
            for (std::size_t i = start; i < end; ++i) {
                bx.push_back(train_x[order[i]]);
                by.push_back(train_y[order[i]]);
                if (use_dropout) {
                    std::vector<double> mask(static_cast<std::size_t>(model.hidden));
                    const double keep = 1.0 - hyper.dropout;
                    for (auto& mv : mask) {
                        mv = (dropout_rng.uniform() < keep) ? 1.0 / keep : 0.0;
                    }
                    masks.push_back(std::move(mask));
                }
            }
            const auto lg = selector_detail::mse_loss_and_grad(model, bx, by, use_dropout ? &masks : nullptr);
            adam_w1.step(model.w1, lg.dw1, hyper.learning_rate);
            adam_b1.step(model.b1, lg.db1, hyper.learning_rate);
            adam_w2.step(model.w2, lg.dw2, hyper.learning_rate);
            adam_b2.step(model.b2, lg.db2, hyper.learning_rate);
        }

        // Snapshot the best validation accuracy (lower MSE breaks ties).
        // Patience counts epochs where neither accuracy nor MSE improved, so
        // training is not cut short while the regression is still descending.
        const double acc = validation_accuracy(model, val_x, val_labels);
        const double mse = validation_mse(model, val_x, val_y);
        if (acc > snapshot_acc + 1e-12 || (acc >= snapshot_acc - 1e-12 && mse < snapshot_mse - 1e-12)) {
            snapshot_acc = std::max(acc, snapshot_acc);
            snapshot_mse = mse;
            best = model;
        }
        if (acc >= snapshot_acc - 1e-12 || mse < best_mse_seen - 1e-12) {
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if (since_improvement >= hyper.patience) {
                break;
            }
        }
        best_mse_seen = std::min(best_mse_seen, mse);
    }
    best.check_valid();
    return best;
}

std::array<double, kOperatorCount> predict_utilities(const SelectorModel& model, const std::vector<double>& x) {
    require(static_cast<int>(x.size()) == model.in_dim, "predict_utilities: dimension mismatch");
    ForwardScratch s;
    model_forward(model, x, s, nullptr);
    return s.out;
}

OperatorKind predict_operator(const SelectorModel& model, const std::vector<double>& x) {
    return operator_from_index(argmax3(predict_utilities(model, x)));
}

std::vector<double> hidden_representation(const SelectorModel& model, const std::vector<double>& x) {
    require(static_cast<int>(x.size()) == model.in_dim, "hidden_representation: dimension mismatch");
    ForwardScratch s;
    model_forward(model, x, s, nullptr);
    return s.h;
}

ClassifierReport evaluate_classifier(const SelectorModel& model, const PairwiseDataset& dataset) {
    const auto test = dataset.split_rows(2);
    require(!test.empty(), "evaluate_classifier: empty test split");
    ClassifierReport rep;
    rep.n = static_cast<int>(test.size());
    for (const auto* r : test) {
        const int pred = operator_index(predict_operator(model, r->input(model.use_task_encoding)));
        rep.confusion[static_cast<std::size_t>(r->best_op)][static_cast<std::size_t>(pred)] += 1;
    }
    int hits = 0;
    for (int c = 0; c < kOperatorCount; ++c) {
        int row_total = 0;
        for (int p = 0; p < kOperatorCount; ++p) {
            row_total += rep.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)];
        }
        hits += rep.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
        rep.per_class_recall[static_cast<std::size_t>(c)] =
            row_total > 0 ? static_cast<double>(rep.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]) /
                                row_total
                          : 0.0;
    }
    rep.accuracy = static_cast<double>(hits) / rep.n;
    return rep;
}

void save_selector(const SelectorModel& model, const std::string& path_stem) {
    model.check_valid();
    json manifest;
    manifest["in_dim"] = model.in_dim;
    manifest["hidden"] = model.hidden;
    manifest["out_dim"] = model.out_dim;
    manifest["use_task_encoding"] = model.use_task_encoding;
    manifest["hyper"] = json{{"hidden", model.hyper.hidden},
                             {"dropout", model.hyper.dropout},
                             {"learning_rate", model.hyper.learning_rate},
                             {"batch_size", model.hyper.batch_size},
                             {"patience", model.hyper.patience},
                             {"max_epochs", model.hyper.max_epochs},
                             {"seed", model.hyper.seed},
                             {"use_task_encoding", model.hyper.use_task_encoding}};
    manifest["standardizer"] = json{{"mean", model.standardizer.mean}, {"std", model.standardizer.std_dev}};
    json blocks = json::array();
    std::size_t offset = 0;
    auto add_block = [&](const char* name, const std::vector<double>& v) {
        blocks.push_back(json{{"name", name}, {"count", v.size()}, {"byte_offset", offset * 4}});
        offset += v.size();
    };
    add_block("w1", model.w1);
    add_block("b1", model.b1);
    add_block("w2", model.w2);
    add_block("b2", model.b2);
    manifest["weights"] = blocks;

    std::ofstream mout(path_stem + ".manifest.json", std::ios::binary | std::ios::trunc);
    require(mout.good(), "save_selector: cannot write manifest");
    mout << manifest.dump(2) << "\n";

    std::ofstream bout(path_stem + ".bin", std::ios::binary | std::ios::trunc);
    require(bout.good(), "save_selector: cannot write blob");
    auto write_f32 = [&](const std::vector<double>& v) {
        for (double d : v) {
            const float f = static_cast<float>(d);
            std::uint32_t bits;
            static_assert(sizeof(bits) == sizeof(f));
            std::memcpy(&bits, &f, 4);
            const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                                   static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
            bout.write(bytes, 4);
        }
    };
    write_f32(model.w1);
    write_f32(model.b1);
    write_f32(model.w2);
    write_f32(model.b2);
    require(bout.good(), "save_selector: blob write failed");
}

SelectorModel load_selector(const std::string& path_stem) {
    std::ifstream min(path_stem + ".manifest.json", std::ios::binary);
    require(min.good(), "load_selector: missing manifest");
    json manifest;
    min >> manifest;

    SelectorModel model;
    model.in_dim = manifest.at("in_dim").get<int>();
    model.hidden = manifest.at("hidden").get<int>();
    model.out_dim = manifest.at("out_dim").get<int>();
    model.use_task_encoding = manifest.at("use_task_encoding").get<bool>();
    const auto& h = manifest.at("hyper");
    model.hyper.hidden = h.at("hidden").get<int>();
    model.hyper.dropout = h.at("dropout").get<double>();
    model.hyper.learning_rate = h.at("learning_rate").get<double>();
    model.hyper.batch_size = h.at("batch_size").get<int>();
    model.hyper.patience = h.at("patience").get<int>();
    model.hyper.max_epochs = h.at("max_epochs").get<int>();
    model.hyper.seed = h.at("seed").get<std::uint64_t>();
    model.hyper.use_task_encoding = h.at("use_task_encoding").get<bool>();
    model.standardizer.mean = manifest.at("standardizer").at("mean").get<std::vector<double>>();
    model.standardizer.std_dev = manifest.at("standardizer").at("std").get<std::vector<double>>();

    std::ifstream bin(path_stem + ".bin", std::ios::binary);
    require(bin.good(), "load_selector: missing blob");
    auto read_block = [&](std::size_t count) {
        std::vector<double> v(count);
        std::vector<char> buf(count * 4);
        bin.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        require(static_cast<std::size_t>(bin.gcount()) == buf.size(), "load_selector: truncated blob");
        for (std::size_t i = 0; i < count; ++i) {
            const auto b = reinterpret_cast<const unsigned char*>(buf.data() + 4 * i);
            const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                       (static_cast<std::uint32_t>(b[2]) << 16) |
                                       (static_cast<std::uint32_t>(b[3]) << 24);
            float f;
            std::memcpy(&f, &bits, 4);
            v[i] = static_cast<double>(f);
        }
        return v;
    };
    model.w1 = read_block(static_cast<std::size_t>(model.in_dim) * model.hidden);
    model.b1 = read_block(static_cast<std::size_t>(model.hidden));
    model.w2 = read_block(static_cast<std::size_t>(model.hidden) * model.out_dim);
    model.b2 = read_block(static_cast<std::size_t>(model.out_dim));
    model.check_valid();
    return model;
}

} // namespace simmerge

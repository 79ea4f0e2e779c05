#pragma once

// Learned utility predictor: a two-layer ReLU network regressing, for one
// ordered checkpoint pair, the merged-model utility under each operator.
// Training is hand-rolled (explicit backprop, Adam updates, dropout on the
// hidden layer, early stopping on validation argmax accuracy) so runs are
// bit-reproducible from (data, hyperparams, seed) and gradients can be
// checked against finite differences.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simmerge/features.hpp"
#include "simmerge/merge.hpp"

namespace simmerge {

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std_dev; // zero-variance dimensions get 1

    void fit(const std::vector<std::vector<double>>& rows);
    std::vector<double> apply(const std::vector<double>& x) const;
};

struct SelectorHyperparams {
    int hidden = 64;
    double dropout = 0.1;
    double learning_rate = 1e-3;
    int batch_size = 32;
    int patience = 10;   // epochs without validation improvement
    int max_epochs = 400;
    std::uint64_t seed = 1;
    bool use_task_encoding = true;
};

struct SelectorModel {
    int in_dim = 0;
    int hidden = 0;
    int out_dim = kOperatorCount;
    bool use_task_encoding = true;
    SelectorHyperparams hyper;
    Standardizer standardizer;

    // Row-major affine maps: w1 [in_dim x hidden], w2 [hidden x out_dim].
    std::vector<double> w1, b1, w2, b2;

    void check_valid() const;
};

struct PairRow {
    std::string id_a;
    std::string id_b;
    std::string task_id;
    std::vector<double> x;        // raw features, dimension kFeatureDim
    std::vector<double> encoding; // task one-hot
    std::array<double, kOperatorCount> utilities{};
    int best_op = 0; // argmax of utilities, ties to the lower operator index
    int split = 0;   // 0 train, 1 val, 2 test

    std::vector<double> input(bool with_encoding) const;
};

struct PairwiseDataset {
    std::vector<PairRow> rows;
    std::array<int, kOperatorCount> label_balance{}; // over all rows
    std::size_t encoding_dim = 0;

    std::vector<const PairRow*> split_rows(int split) const;
    void check_split_hygiene() const; // no ordered pair in more than one split
};

struct DatasetConfig {
    double val_fraction = 0.2; // carved out of the n_pairs training sample
    int n_test = 60;           // additional held-out pairs
    double alpha = 0.5;
    double tau = 0.05;
    bool both_orientations = false; // sample (aux, expert) rows as well
    std::string exclude_task;       // keep this task out of the log entirely
};

// Samples distinct ordered expert-auxiliary pairs, executes all three merges
// per pair, and records true utilities on the pair's task. `n_pairs` is the
// train+validation sample; `cfg.n_test` more pairs form the test split.
PairwiseDataset build_pairwise_dataset(const Catalog& catalog, const SimilarityTable& table, int n_pairs,
                                       std::uint64_t seed, const DatasetConfig& cfg = {});

SelectorModel train_selector(const PairwiseDataset& dataset, const SelectorHyperparams& hyper);

std::array<double, kOperatorCount> predict_utilities(const SelectorModel& model, const std::vector<double>& x);
OperatorKind predict_operator(const SelectorModel& model, const std::vector<double>& x);

// Hidden-layer activations after ReLU (the bandit's context representation).
std::vector<double> hidden_representation(const SelectorModel& model, const std::vector<double>& x);

struct ClassifierReport {
    std::array<std::array<int, kOperatorCount>, kOperatorCount> confusion{}; // [true][predicted]
    std::array<double, kOperatorCount> per_class_recall{};
    double accuracy = 0.0;
    int n = 0;
};

ClassifierReport evaluate_classifier(const SelectorModel& model, const PairwiseDataset& dataset);

void save_selector(const SelectorModel& model, const std::string& path_stem);
SelectorModel load_selector(const std::string& path_stem);

namespace selector_detail {

// Mean squared error over a batch and its analytic parameter gradients,
// with an optional fixed dropout mask (entries 0 or 1/(1-p)) per example.
struct LossGrad {
    double loss = 0.0;
    std::vector<double> dw1, db1, dw2, db2;
};

LossGrad mse_loss_and_grad(const SelectorModel& model, const std::vector<std::vector<double>>& inputs,
                           const std::vector<std::array<double, kOperatorCount>>& targets,
                           const std::vector<std::vector<double>>* dropout_masks = nullptr);

} // namespace selector_detail

} // namespace simmerge

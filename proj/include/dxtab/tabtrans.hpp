#pragma once

// Tabular transformer: per-feature affine tokenization of continuous inputs,
// embeddings for categoricals, a learned aggregation token, pre-norm
// self-attention encoder blocks, and dual heads (main + auxiliary minority
// detection). Training uses weighted batch sampling, gradient clipping,
// AdamW with cosine warm restarts, and recall-based early stopping.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dxtab/autodiff.hpp"
#include "dxtab/cohort.hpp"
#include "dxtab/optim.hpp"
#include "dxtab/rng.hpp"
#include "json.hpp"

namespace dxtab::tabtrans {

struct TabTransConfig {
    int token_dim = 32;
    int n_heads = 4;
    int n_layers = 3;
    int ffn_dim = 64;
    double dropout = 0.1;
    double aux_weight = 0.3;
    double lr = 5e-5;
    double weight_decay = 1e-5;
    double clip_norm = 0.5;
    int patience = 50;
    int max_epochs = 300;
    int batch_size = 64;
    double val_fraction = 0.15;
    double lr_t0 = 50.0;     // cosine warm-restart cycle length, epochs
    double lr_t_mult = 2.0;  // cycle growth
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static TabTransConfig from_json(const nlohmann::json& j);
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_recall = 0.0;
    double learning_rate = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_recall = 0.0;
    std::string stop_reason;  // "early_stop" or "max_epochs"
};

class TabTransModel {
public:
    // categorical: feature name -> cardinality; those columns hold integer
    // codes in [0, cardinality).
    static TabTransModel build(const TabTransConfig& cfg,
                               const std::vector<std::string>& feature_names,
                               const std::map<std::string, std::int64_t>& categorical = {});

    // Evaluation-mode forward (no dropout): (main logits, aux logits).
    std::pair<std::vector<double>, std::vector<double>> forward(const Matrix& x) const;

    std::vector<double> predict_proba(const cohort::LabeledDataset& data) const;
    std::vector<double> predict_proba_matrix(const Matrix& x) const;

    std::size_t parameter_count() const;
    std::vector<nn::Parameter*> parameters();
    nn::Parameter* find_parameter(const std::string& name);

    const TabTransConfig& config() const { return cfg_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }

    // Manifest + f32 blob; `extra` is merged into the manifest (training
    // metrics, preprocessing stats).
    void save(const std::string& manifest_path, const std::string& blob_path,
              const nlohmann::json& extra = {}) const;
    static TabTransModel load(const std::string& manifest_path, const std::string& blob_path);
    static nlohmann::json read_manifest(const std::string& manifest_path);

    struct GraphOut {
        nn::Graph graph;
        nn::Graph::NodeId main_logits;
        nn::Graph::NodeId aux_logits;
        std::vector<nn::Graph::NodeId> attention_nodes;  // softmax outputs per layer
    };
    // Builds the computation graph; training mode applies dropout from rng.
    std::unique_ptr<GraphOut> run_graph(const Matrix& x, bool training, Rng* rng) const;

private:
    TabTransConfig cfg_;
    std::vector<std::string> feature_names_;
    std::vector<std::size_t> continuous_idx_;
    std::vector<std::size_t> categorical_idx_;
    std::vector<std::int64_t> categorical_cards_;
    mutable std::vector<nn::Parameter> params_;
};

// Weighted binary cross-entropy (class weights on the main head) plus
// aux_weight times positive-reweighted BCE on the auxiliary head.
double total_loss(const std::vector<double>& main_logits, const std::vector<double>& aux_logits,
                  const std::vector<int>& labels, double w_pos, double w_neg,
                  double aux_pos_weight, double aux_weight);

TrainHistory train(TabTransModel& model, const cohort::LabeledDataset& data,
                   const TabTransConfig& cfg, const std::vector<double>& sample_weights = {});

}  // namespace dxtab::tabtrans

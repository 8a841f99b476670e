#include "dxtab/tabtrans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dxtab/artifact.hpp"
#include "dxtab/rng.hpp"

namespace dxtab::tabtrans {

void TabTransConfig::validate() const {
    if (token_dim <= 0 || n_heads <= 0 || token_dim % n_heads != 0)
        throw std::invalid_argument("TabTransConfig: token_dim must be divisible by n_heads");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("TabTransConfig: dropout must be in [0,1)");
    if (patience < 1) throw std::invalid_argument("TabTransConfig: patience must be >= 1");
    if (n_layers < 1 || ffn_dim < 1 || batch_size < 1 || max_epochs < 1)
        throw std::invalid_argument("TabTransConfig: sizes must be positive");
    if (aux_weight < 0.0 || aux_weight > 1.0)
        throw std::invalid_argument("TabTransConfig: aux_weight must be in [0,1]");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("TabTransConfig: val_fraction must be in (0,1)");
}

nlohmann::json TabTransConfig::to_json() const {
    return {{"token_dim", token_dim},   {"n_heads", n_heads},
            {"n_layers", n_layers},     {"ffn_dim", ffn_dim},
            {"dropout", dropout},       {"aux_weight", aux_weight},
            {"lr", lr},                 {"weight_decay", weight_decay},
            {"clip_norm", clip_norm},   {"patience", patience},
            {"max_epochs", max_epochs}, {"batch_size", batch_size},
            {"val_fraction", val_fraction}, {"lr_t0", lr_t0},
            {"lr_t_mult", lr_t_mult},   {"seed", seed}};
}

TabTransConfig TabTransConfig::from_json(const nlohmann::json& j) {
    TabTransConfig c;
    c.token_dim = j.value("token_dim", c.token_dim);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.dropout = j.value("dropout", c.dropout);
    c.aux_weight = j.value("aux_weight", c.aux_weight);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.patience = j.value("patience", c.patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.lr_t0 = j.value("lr_t0", c.lr_t0);
    c.lr_t_mult = j.value("lr_t_mult", c.lr_t_mult);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

namespace {

// Scaled-uniform initialization, gain 1: U(+-sqrt(6/(fan_in+fan_out))).
nn::Tensor glorot(std::vector<std::int64_t> shape, std::int64_t fan_in, std::int64_t fan_out,
                  Rng& rng) {
    nn::Tensor t(std::move(shape));
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = u(rng);
    return t;
}

nn::Tensor dropout_mask(const std::vector<std::int64_t>& shape, double p, Rng& rng) {
    nn::Tensor m(shape);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::int64_t i = 0; i < m.size(); ++i) m[i] = u(rng) < p ? 0.0 : keep_scale;
    return m;
}

}  // namespace

TabTransModel TabTransModel::build(const TabTransConfig& cfg,
                                   const std::vector<std::string>& feature_names,
                                   const std::map<std::string, std::int64_t>& categorical) {
    cfg.validate();
    if (feature_names.empty()) throw std::invalid_argument("tabtrans: needs >= 1 feature");
    TabTransModel m;
    m.cfg_ = cfg;
    m.feature_names_ = feature_names;
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
        auto it = categorical.find(feature_names[j]);
        if (it == categorical.end()) {
            m.continuous_idx_.push_back(j);
        } else {
            if (it->second < 2) throw std::invalid_argument("tabtrans: cardinality must be >= 2");
            m.categorical_idx_.push_back(j);
            m.categorical_cards_.push_back(it->second);
        }
    }

    const auto d = static_cast<std::int64_t>(cfg.token_dim);
    const auto pc = static_cast<std::int64_t>(m.continuous_idx_.size());
    Rng rng(derive_seed(cfg.seed, "tabtrans/init"));

    auto& ps = m.params_;
    ps.emplace_back("cls", glorot({1, d}, 1, d, rng));
    if (pc > 0) {
        ps.emplace_back("tok_w", glorot({pc, d}, 1, d, rng));
        ps.emplace_back("tok_b", glorot({pc, d}, 1, d, rng));
    }
    for (std::size_t c = 0; c < m.categorical_idx_.size(); ++c)
        ps.emplace_back("embed_" + std::to_string(c),
                        glorot({m.categorical_cards_[c], d}, 1, d, rng));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + "/";
        ps.emplace_back(p + "ln1_g", nn::Tensor::full({d}, 1.0));
        ps.emplace_back(p + "ln1_b", nn::Tensor({d}));
        for (const char* name : {"wq", "wk", "wv", "wo"})
            ps.emplace_back(p + name, glorot({d, d}, d, d, rng));
        for (const char* name : {"bq", "bk", "bv", "bo"})
            ps.emplace_back(p + name, nn::Tensor({d}));
        ps.emplace_back(p + "ln2_g", nn::Tensor::full({d}, 1.0));
        ps.emplace_back(p + "ln2_b", nn::Tensor({d}));
        ps.emplace_back(p + "w1", glorot({d, cfg.ffn_dim}, d, cfg.ffn_dim, rng));
        ps.emplace_back(p + "b1", nn::Tensor({cfg.ffn_dim}));
        ps.emplace_back(p + "w2", glorot({cfg.ffn_dim, d}, cfg.ffn_dim, d, rng));
        ps.emplace_back(p + "b2", nn::Tensor({d}));
    }
    ps.emplace_back("final_ln_g", nn::Tensor::full({d}, 1.0));
    ps.emplace_back("final_ln_b", nn::Tensor({d}));
    ps.emplace_back("head_w", glorot({d, 1}, d, 1, rng));
    ps.emplace_back("head_b", nn::Tensor({1}));
    ps.emplace_back("aux_w", glorot({d, 1}, d, 1, rng));
    ps.emplace_back("aux_b", nn::Tensor({1}));
    return m;
}

std::vector<nn::Parameter*> TabTransModel::parameters() {
    std::vector<nn::Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
}

nn::Parameter* TabTransModel::find_parameter(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

std::size_t TabTransModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

std::unique_ptr<TabTransModel::GraphOut> TabTransModel::run_graph(const Matrix& x, bool training,
                                                                  Rng* rng) const {
    if (x.cols() != feature_names_.size())
        throw std::invalid_argument("tabtrans: feature count mismatch");
    auto out = std::make_unique<GraphOut>();
    nn::Graph& g = out->graph;
    const auto b = static_cast<std::int64_t>(x.rows());
    const auto d = static_cast<std::int64_t>(cfg_.token_dim);

    auto param = [&](const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return g.param(p);
        throw std::logic_error("tabtrans: missing parameter " + name);
    };

    // Aggregation token replicated across the batch via an embedding lookup.
    std::vector<nn::Graph::NodeId> parts;
    parts.push_back(
        g.reshape(g.embedding(param("cls"), std::vector<std::int64_t>(x.rows(), 0)), {b, 1, d}));

    for (std::size_t c = 0; c < categorical_idx_.size(); ++c) {
        std::vector<std::int64_t> codes(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double v = x(i, categorical_idx_[c]);
            const auto code = static_cast<std::int64_t>(std::llround(v));
            if (code < 0 || code >= categorical_cards_[c])
                throw std::invalid_argument("tabtrans: categorical code out of range");
            codes[i] = code;
        }
        parts.push_back(
            g.reshape(g.embedding(param("embed_" + std::to_string(c)), codes), {b, 1, d}));
    }

    if (!continuous_idx_.empty()) {
        nn::Tensor cont({b, static_cast<std::int64_t>(continuous_idx_.size())});
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < continuous_idx_.size(); ++j)
                cont[static_cast<std::int64_t>(i * continuous_idx_.size() + j)] =
                    x(i, continuous_idx_[j]);
        parts.push_back(g.feature_tokenize(g.input(std::move(cont)), param("tok_w"),
                                           param("tok_b")));
    }

    nn::Graph::NodeId h = g.concat_seq(parts);
    const std::int64_t s = 1 + static_cast<std::int64_t>(categorical_idx_.size()) +
                           static_cast<std::int64_t>(continuous_idx_.size());
    const auto heads = static_cast<std::int64_t>(cfg_.n_heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d / heads));

    auto maybe_dropout = [&](nn::Graph::NodeId node,
                             const std::vector<std::int64_t>& shape) {
        if (!training || cfg_.dropout <= 0.0) return node;
        return g.mul(node, g.input(dropout_mask(shape, cfg_.dropout, *rng)));
    };

    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + "/";
        // Pre-norm multi-head self-attention.
        nn::Graph::NodeId normed = g.layer_norm(h, param(p + "ln1_g"), param(p + "ln1_b"));
        nn::Graph::NodeId q = g.add(g.matmul(normed, param(p + "wq")), param(p + "bq"));
        nn::Graph::NodeId k = g.add(g.matmul(normed, param(p + "wk")), param(p + "bk"));
        nn::Graph::NodeId v = g.add(g.matmul(normed, param(p + "wv")), param(p + "bv"));
        q = g.split_heads(q, heads);
        k = g.split_heads(k, heads);
        v = g.split_heads(v, heads);
        nn::Graph::NodeId scores = g.scale(g.matmul_nt(q, k), scale);
        nn::Graph::NodeId attn = g.softmax(scores);
        out->attention_nodes.push_back(attn);
        attn = maybe_dropout(attn, {b * heads, s, s});
        nn::Graph::NodeId ctx = g.merge_heads(g.matmul(attn, v), heads);
        nn::Graph::NodeId proj = g.add(g.matmul(ctx, param(p + "wo")), param(p + "bo"));
        proj = maybe_dropout(proj, {b, s, d});
        h = g.add(h, proj);

        // Pre-norm feed-forward with GELU.
        nn::Graph::NodeId normed2 = g.layer_norm(h, param(p + "ln2_g"), param(p + "ln2_b"));
        nn::Graph::NodeId ff =
            g.gelu(g.add(g.matmul(normed2, param(p + "w1")), param(p + "b1")));
        ff = g.add(g.matmul(ff, param(p + "w2")), param(p + "b2"));
        ff = maybe_dropout(ff, {b, s, d});
        h = g.add(h, ff);
    }

    nn::Graph::NodeId final_norm =
        g.layer_norm(h, param("final_ln_g"), param("final_ln_b"));
    nn::Graph::NodeId agg = g.select_token(final_norm, 0);
    out->main_logits =
        g.reshape(g.add(g.matmul(agg, param("head_w")), param("head_b")), {b});
    out->aux_logits = g.reshape(g.add(g.matmul(agg, param("aux_w")), param("aux_b")), {b});
    return out;
}

std::pair<std::vector<double>, std::vector<double>> TabTransModel::forward(
    const Matrix& x) const {
    auto run = run_graph(x, false, nullptr);
    const auto& mt = run->graph.value(run->main_logits);
    const auto& at = run->graph.value(run->aux_logits);
    std::vector<double> main(mt.data(), mt.data() + mt.size());
    std::vector<double> aux(at.data(), at.data() + at.size());
    for (double z : main)
        if (!std::isfinite(z)) throw std::runtime_error("tabtrans: non-finite logit");
    return {main, aux};
}

std::vector<double> TabTransModel::predict_proba_matrix(const Matrix& x) const {
    std::vector<double> out;
    out.reserve(x.rows());
    const std::size_t chunk = static_cast<std::size_t>(std::max(cfg_.batch_size, 1));
    for (std::size_t start = 0; start < x.rows(); start += chunk) {
        const std::size_t stop = std::min(x.rows(), start + chunk);
        Matrix sub(stop - start, x.cols());
        for (std::size_t i = start; i < stop; ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) sub(i - start, j) = x(i, j);
        const auto [main, aux] = forward(sub);
        (void)aux;
        for (double z : main) out.push_back(nn::sigmoid(z));
    }
    return out;
}

std::vector<double> TabTransModel::predict_proba(const cohort::LabeledDataset& data) const {
    if (data.feature_names != feature_names_)
        throw std::runtime_error("tabtrans: feature names do not match the trained model");
    return predict_proba_matrix(data.x);
}

double total_loss(const std::vector<double>& main_logits, const std::vector<double>& aux_logits,
                  const std::vector<int>& labels, double w_pos, double w_neg,
                  double aux_pos_weight, double aux_weight) {
    const auto b = static_cast<double>(labels.size());
    double main = 0.0, aux = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double y = labels[i];
        auto bce = [&](double z) {
            return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        };
        main += (labels[i] == 1 ? w_pos : w_neg) * bce(main_logits[i]);
        aux += (labels[i] == 1 ? aux_pos_weight : 1.0) * bce(aux_logits[i]);
    }
    return main / b + aux_weight * (aux / b);
}

namespace {

struct ValSplit {
    std::vector<std::size_t> train_rows, val_rows;
};

ValSplit stratified_holdout(const std::vector<int>& labels, double val_fraction,
                            std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] == 1 ? pos : neg).push_back(i);
    if (pos.size() < 2 || neg.size() < 2)
        throw std::runtime_error("tabtrans: training needs >= 2 samples of each class");
    std::vector<bool> in_val(labels.size(), false);
    auto pick = [&](std::vector<std::size_t>& cls, std::string_view tag) {
        Rng rng(derive_seed(seed, tag));
        std::shuffle(cls.begin(), cls.end(), rng);
        auto want = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(cls.size())));
        want = std::max<std::size_t>(1, std::min(want, cls.size() - 1));
        for (std::size_t i = 0; i < want; ++i) in_val[cls[i]] = true;
    };
    pick(pos, "tabtrans/val_pos");
    pick(neg, "tabtrans/val_neg");
    ValSplit out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (in_val[i] ? out.val_rows : out.train_rows).push_back(i);
    return out;
}

}  // namespace

TrainHistory train(TabTransModel& model, const cohort::LabeledDataset& data,
                   const TabTransConfig& cfg, const std::vector<double>& sample_weights) {
    cfg.validate();
    if (!sample_weights.empty() && sample_weights.size() != data.labels.size())
        throw std::invalid_argument("tabtrans: sample_weights size mismatch");
    const ValSplit split = stratified_holdout(data.labels, cfg.val_fraction, cfg.seed);

    // Gather training rows and their sampling weights.
    const std::size_t n_train = split.train_rows.size();
    Matrix train_x(n_train, data.x.cols());
    std::vector<int> train_y(n_train);
    std::vector<double> draw_w(n_train, 1.0);
    for (std::size_t i = 0; i < n_train; ++i) {
        const std::size_t src = split.train_rows[i];
        for (std::size_t j = 0; j < data.x.cols(); ++j) train_x(i, j) = data.x(src, j);
        train_y[i] = data.labels[src];
        if (!sample_weights.empty()) draw_w[i] = sample_weights[src];
    }
    Matrix val_x(split.val_rows.size(), data.x.cols());
    std::vector<int> val_y(split.val_rows.size());
    for (std::size_t i = 0; i < split.val_rows.size(); ++i) {
        const std::size_t src = split.val_rows[i];
        for (std::size_t j = 0; j < data.x.cols(); ++j) val_x(i, j) = data.x(src, j);
        val_y[i] = data.labels[src];
    }

    // Class weights n/(2*n_class) for the main head; aux uses n_neg/n_pos.
    double n_pos = 0.0;
    for (int y : train_y) n_pos += y == 1 ? 1.0 : 0.0;
    const double n_all = static_cast<double>(train_y.size());
    const double n_neg = n_all - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0)
        throw std::runtime_error("tabtrans: single-class training set");
    const double w_pos = n_all / (2.0 * n_pos);
    const double w_neg = n_all / (2.0 * n_neg);
    const double aux_pos_weight = n_neg / n_pos;

    nn::AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    nn::AdamW optimizer(opt_cfg);
    nn::LrSchedule schedule;
    schedule.eta_max = cfg.lr;
    schedule.eta_min = 0.0;
    schedule.t0 = cfg.lr_t0;
    schedule.t_mult = cfg.lr_t_mult;

    auto params = model.parameters();
    const std::size_t batches_per_epoch =
        (n_train + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);

    Rng sample_rng(derive_seed(cfg.seed, "tabtrans/sampler"));
    Rng dropout_rng(derive_seed(cfg.seed, "tabtrans/dropout"));
    std::discrete_distribution<std::size_t> sampler(draw_w.begin(), draw_w.end());

    TrainHistory history;
    history.best_epoch = 0;
    history.best_val_recall = -1.0;
    std::vector<nn::Tensor> best_weights;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr = nn::lr_at(schedule, static_cast<double>(epoch - 1));
        double loss_sum = 0.0;
        for (std::size_t bi = 0; bi < batches_per_epoch; ++bi) {
            const auto bsize = static_cast<std::size_t>(cfg.batch_size);
            Matrix bx(bsize, train_x.cols());
            std::vector<double> labels(bsize), weights(bsize), aux_weights(bsize);
            for (std::size_t i = 0; i < bsize; ++i) {
                const std::size_t src = sampler(sample_rng);
                for (std::size_t j = 0; j < train_x.cols(); ++j) bx(i, j) = train_x(src, j);
                labels[i] = train_y[src];
                weights[i] = train_y[src] == 1 ? w_pos : w_neg;
                aux_weights[i] = train_y[src] == 1 ? aux_pos_weight : 1.0;
            }
            auto run = model.run_graph(bx, true, &dropout_rng);
            nn::Graph& g = run->graph;
            nn::Graph::NodeId main_loss = g.bce_with_logits(run->main_logits, labels, weights);
            nn::Graph::NodeId aux_loss =
                g.bce_with_logits(run->aux_logits, labels, aux_weights);
            nn::Graph::NodeId loss = g.add(main_loss, g.scale(aux_loss, cfg.aux_weight));
            loss_sum += g.value(loss).item();
            for (auto* p : params) p->zero_grad();
            g.backward(loss);
            nn::clip_global_norm(params, cfg.clip_norm);
            optimizer.step(params, lr);
        }

        // Validation minority recall at threshold 0.5.
        const auto val_proba = model.predict_proba_matrix(val_x);
        std::size_t tp = 0, fn = 0;
        for (std::size_t i = 0; i < val_y.size(); ++i) {
            if (val_y[i] != 1) continue;
            if (val_proba[i] >= 0.5)
                ++tp;
            else
                ++fn;
        }
        const double recall =
            tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;

        history.epochs.push_back(
            {epoch, loss_sum / static_cast<double>(batches_per_epoch), recall, lr});
        if (recall > history.best_val_recall) {
            history.best_val_recall = recall;
            history.best_epoch = epoch;
            best_weights.clear();
            for (auto* p : params) best_weights.push_back(p->value);
        }
        if (epoch - history.best_epoch >= cfg.patience) {
            history.stop_reason = "early_stop";
            break;
        }
    }
    if (history.stop_reason.empty()) history.stop_reason = "max_epochs";

    if (!best_weights.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_weights[i];
    return history;
}

void TabTransModel::save(const std::string& manifest_path, const std::string& blob_path,
                         const nlohmann::json& extra) const {
    nlohmann::json manifest;
    manifest["format_version"] = artifact::kFormatVersion;
    manifest["model"] = "tabtrans";
    manifest["config"] = cfg_.to_json();
    manifest["feature_names"] = feature_names_;
    nlohmann::json cats = nlohmann::json::object();
    for (std::size_t c = 0; c < categorical_idx_.size(); ++c)
        cats[feature_names_[categorical_idx_[c]]] = categorical_cards_[c];
    manifest["categorical"] = cats;
    manifest["dtype"] = artifact::to_string(artifact::Dtype::f32);
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();

    artifact::BlobWriter w;
    for (const auto& p : params_)
        w.add(p.name, p.value.shape(), p.value.data(),
              static_cast<std::size_t>(p.value.size()));
    manifest["params"] = w.params;
    artifact::write_json(manifest_path, manifest);
    artifact::write_blob(blob_path, w.values, artifact::Dtype::f32);
}

nlohmann::json TabTransModel::read_manifest(const std::string& manifest_path) {
    return artifact::read_json(manifest_path);
}

TabTransModel TabTransModel::load(const std::string& manifest_path,
                                  const std::string& blob_path) {
    const auto manifest = artifact::read_json(manifest_path);
    if (manifest.at("model") != "tabtrans")
        throw std::runtime_error("tabtrans: manifest is not a tabtrans artifact");
    const auto cfg = TabTransConfig::from_json(manifest.at("config"));
    const auto names = manifest.at("feature_names").get<std::vector<std::string>>();
    std::map<std::string, std::int64_t> cats;
    for (auto it = manifest.at("categorical").begin(); it != manifest.at("categorical").end();
         ++it)
        cats[it.key()] = it.value().get<std::int64_t>();

    TabTransModel m = build(cfg, names, cats);
    const auto dtype = artifact::dtype_from_string(manifest.at("dtype").get<std::string>());
    artifact::BlobReader reader(blob_path, manifest.at("params"), dtype);
    for (auto& p : m.params_) {
        const auto values = reader.get(p.name);
        if (values.size() != static_cast<std::size_t>(p.value.size()))
            throw std::runtime_error("tabtrans: parameter size mismatch for " + p.name);
        for (std::size_t i = 0; i < values.size(); ++i)
            p.value[static_cast<std::int64_t>(i)] = values[i];
    }
    return m;
}

}  // namespace dxtab::tabtrans

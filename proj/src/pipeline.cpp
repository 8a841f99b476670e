#include "dxtab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "dxtab/artifact.hpp"
#include "dxtab/baselines.hpp"
#include "dxtab/csv.hpp"
#include "dxtab/features.hpp"
#include "dxtab/kernels.hpp"
#include "dxtab/rng.hpp"
#include "dxtab/schema.hpp"

namespace dxtab::pipeline {

namespace fs = std::filesystem;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PrereqError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& stage) {
    if (!fs::exists(path))
        throw PrereqError(stage + ": missing prerequisite artifact: " + path);
}

std::string stage_dir(const RunConfig& cfg, const std::string& stage, bool create = true) {
    const auto dir = (fs::path(cfg.out_dir) / stage).string();
    if (create) fs::create_directories(dir);
    return dir;
}

std::string file_in(const RunConfig& cfg, const std::string& stage, const std::string& name) {
    return (fs::path(cfg.out_dir) / stage / name).string();
}

void write_stage_manifest(const RunConfig& cfg, const std::string& stage,
                          const std::vector<std::string>& inputs,
                          const std::vector<std::string>& outputs,
                          const nlohmann::json& notes = nlohmann::json::object()) {
    nlohmann::json m;
    m["stage"] = stage;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["stage_seed"] = derive_seed(cfg.seed, stage);
    m["notes"] = notes;
    artifact::write_json(file_in(cfg, stage, "stage_manifest.json"), m);
}

void write_top_manifest(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    nlohmann::json m;
    m["tool"] = "dxtab";
    m["version"] = kVersion;
    m["seed"] = cfg.seed;
    m["config_hash"] = cfg.config_hash();
    m["kernels"] = kern::active().name;
    m["matmul_threads"] = 1;
    m["config"] = cfg.to_json();
    artifact::write_json((fs::path(cfg.out_dir) / "manifest.json").string(), m);
}

// Labeled datasets persist as subject_id,label,<features...>.
void write_dataset(const std::string& path, const cohort::LabeledDataset& d) {
    csv::Table t;
    t.header = {"subject_id", "label"};
    t.header.insert(t.header.end(), d.feature_names.begin(), d.feature_names.end());
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
        std::vector<std::string> row = {d.subject_ids[i], std::to_string(d.labels[i])};
        for (std::size_t j = 0; j < d.x.cols(); ++j)
            row.push_back(csv::format_double(d.x(i, j)));
        t.rows.push_back(std::move(row));
    }
    csv::write_file(path, t);
}

cohort::LabeledDataset read_dataset(const std::string& path) {
    const auto t = csv::read_file(path);
    if (t.header.size() < 3 || t.header[0] != "subject_id" || t.header[1] != "label")
        throw std::runtime_error("dataset csv: unexpected header in " + path);
    cohort::LabeledDataset d;
    d.feature_names.assign(t.header.begin() + 2, t.header.end());
    d.x = Matrix(t.rows.size(), d.feature_names.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        d.subject_ids.push_back(t.rows[i][0]);
        d.labels.push_back(static_cast<int>(csv::parse_number(t.rows[i][1], i + 2, "label")));
        for (std::size_t j = 0; j < d.feature_names.size(); ++j)
            d.x(i, j) = csv::parse_number(t.rows[i][2 + j], i + 2, d.feature_names[j]);
    }
    d.validate();
    return d;
}

std::string baseline_input_path(const RunConfig& cfg) {
    return cfg.use_synthetic ? file_in(cfg, "generate", "baseline.csv") : *cfg.baseline_csv;
}

std::string followup_input_path(const RunConfig& cfg) {
    return cfg.use_synthetic ? file_in(cfg, "generate", "followup.csv") : *cfg.followup_csv;
}

// ---------------------------------------------------------------- stages --

void stage_generate(const RunConfig& cfg) {
    if (!cfg.use_synthetic)
        throw ConfigError("generate: config supplies external CSVs; nothing to generate");
    cohort::SyntheticSpec spec = cfg.synthetic;
    spec.seed = derive_seed(cfg.seed, "generate");
    const auto out = cohort::generate_synthetic_cohort(spec);
    stage_dir(cfg, "generate");
    cohort::save_cohort(file_in(cfg, "generate", "baseline.csv"), out.baseline);
    cohort::save_cohort(file_in(cfg, "generate", "followup.csv"), out.followup);
    nlohmann::json notes;
    notes["records"] = out.baseline.records.size();
    write_stage_manifest(cfg, "generate", {}, {"baseline.csv", "followup.csv"}, notes);
}

void stage_preprocess(const RunConfig& cfg) {
    const auto input = baseline_input_path(cfg);
    require_file(input, "preprocess");
    const auto raw = cohort::load_cohort(input);
    const auto dropped = cohort::drop_sparse_columns(raw, cfg.sparse_threshold);
    if (dropped.cohort.feature_names.empty())
        throw std::runtime_error("preprocess: every feature column exceeded the missingness "
                                 "threshold");
    stage_dir(cfg, "preprocess");
    cohort::save_cohort(file_in(cfg, "preprocess", "baseline_dropped.csv"), dropped.cohort);
    nlohmann::json prov;
    prov["source"] = input;
    prov["records"] = raw.records.size();
    prov["sparse_threshold"] = cfg.sparse_threshold;
    prov["dropped_columns"] = dropped.dropped;
    artifact::write_json(file_in(cfg, "preprocess", "provenance.json"), prov);
    write_stage_manifest(cfg, "preprocess", {input},
                         {"baseline_dropped.csv", "provenance.json"});
}

void stage_engineer(const RunConfig& cfg) {
    const auto input = file_in(cfg, "preprocess", "baseline_dropped.csv");
    require_file(input, "engineer");
    const auto dropped = cohort::load_cohort(input);
    // Engineering sees the still-missing cells so availability-aware formulas
    // apply; the final imputation pass then covers raw and engineered columns.
    const auto engineered = features::engineer_matrix(dropped);
    const auto imputed = cohort::impute_missing(engineered);
    stage_dir(cfg, "engineer");
    cohort::save_cohort(file_in(cfg, "engineer", "baseline_features.csv"), imputed.cohort);
    nlohmann::json prov;
    prov["forward_fills"] = imputed.forward_fills;
    prov["median_fills"] = imputed.median_fills;
    prov["engineered_columns"] = schema::kEngineeredFeatures;
    artifact::write_json(file_in(cfg, "engineer", "provenance.json"), prov);
    write_stage_manifest(cfg, "engineer", {input},
                         {"baseline_features.csv", "provenance.json"});
}

void stage_select(const RunConfig& cfg) {
    const auto features_path = file_in(cfg, "engineer", "baseline_features.csv");
    const auto followup_path = followup_input_path(cfg);
    require_file(features_path, "select");
    require_file(followup_path, "select");

    const auto baseline = cohort::load_cohort(features_path);
    const auto followup = cohort::load_cohort(followup_path);
    cohort::LinkStats stats;
    const auto labeled = cohort::link_outcomes(baseline, followup, &stats);
    auto [train, test] =
        cohort::stratified_split(labeled, cfg.test_fraction, derive_seed(cfg.seed, "split"));

    const auto standardizer = features::Standardizer::fit(train);
    auto train_std = standardizer.apply(train);
    auto test_std = standardizer.apply(test);
    // Sex stays a raw 0/1 code: the transformer embeds it, and z-scoring a
    // binary indicator only hides the category values.
    if (auto sex = std::find(train.feature_names.begin(), train.feature_names.end(),
                             std::string(schema::kSexColumn));
        sex != train.feature_names.end()) {
        const auto j = static_cast<std::size_t>(sex - train.feature_names.begin());
        for (std::size_t i = 0; i < train.x.rows(); ++i) train_std.x(i, j) = train.x(i, j);
        for (std::size_t i = 0; i < test.x.rows(); ++i) test_std.x(i, j) = test.x(i, j);
    }

    const auto result = selection::ensemble_select(train_std, cfg.selection);
    stage_dir(cfg, "select");
    report::write_scores_csv(file_in(cfg, "select", "scores.csv"), result);

    nlohmann::json sel;
    sel["selected"] = result.selected;
    sel["alpha"] = result.alpha;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [a, b] : result.dropped_collinear) pairs.push_back({a, b});
    sel["dropped_collinear"] = pairs;
    artifact::write_json(file_in(cfg, "select", "selected.json"), sel);

    nlohmann::json link;
    link["linked"] = stats.linked;
    link["excluded_no_followup"] = stats.excluded_no_followup;
    link["excluded_age"] = stats.excluded_age;
    link["excluded_unlabelable"] = stats.excluded_unlabelable;
    artifact::write_json(file_in(cfg, "select", "link_stats.json"), link);

    nlohmann::json std_json;
    std_json["feature_names"] = standardizer.feature_names();
    std_json["mean"] = standardizer.means();
    std_json["std"] = standardizer.stds();
    std_json["passthrough"] = {std::string(schema::kSexColumn)};
    artifact::write_json(file_in(cfg, "select", "standardizer.json"), std_json);

    write_dataset(file_in(cfg, "select", "train.csv"),
                  cohort::select_columns(train_std, result.selected));
    write_dataset(file_in(cfg, "select", "test.csv"),
                  cohort::select_columns(test_std, result.selected));
    write_dataset(file_in(cfg, "select", "train_raw.csv"),
                  cohort::select_columns(train, result.selected));
    write_dataset(file_in(cfg, "select", "test_raw.csv"),
                  cohort::select_columns(test, result.selected));

    const auto pca_proj = selection::pca(train_std.x, 0.95);
    report::write_projection_csv(file_in(cfg, "select", "pca.csv"), pca_proj,
                                 train_std.subject_ids, train_std.labels);
    report::write_loadings_csv(file_in(cfg, "select", "pca_loadings.csv"), pca_proj,
                               train_std.feature_names);
    std::vector<std::string> outputs = {"scores.csv",   "selected.json", "link_stats.json",
                                        "standardizer.json", "train.csv", "test.csv",
                                        "train_raw.csv", "test_raw.csv", "pca.csv",
                                        "pca_loadings.csv"};
    nlohmann::json notes;
    if (cfg.run_tsne) {
        selection::TsneConfig tsne_cfg = cfg.tsne;
        tsne_cfg.seed = derive_seed(cfg.seed, "tsne");
        const auto tsne_proj = selection::tsne(train_std.x, tsne_cfg);
        report::write_projection_csv(file_in(cfg, "select", "tsne.csv"), tsne_proj,
                                     train_std.subject_ids, train_std.labels);
        outputs.push_back("tsne.csv");
        notes["tsne"] = tsne_proj.notes;
    }
    write_stage_manifest(cfg, "select", {features_path, followup_path}, outputs, notes);
}

void stage_resample(const RunConfig& cfg) {
    const auto input = file_in(cfg, "select", "train.csv");
    require_file(input, "resample");
    const auto train = read_dataset(input);

    std::vector<resample::ResampleStrategy> strategies;
    const auto kinds =
        cfg.strategies.empty() ? resample::all_strategies() : cfg.strategies;
    for (auto kind : kinds)
        strategies.push_back({kind, 5, derive_seed(cfg.seed, "resample")});
    const auto best = resample::select_best_strategy(train, strategies);

    stage_dir(cfg, "resample");
    write_dataset(file_in(cfg, "resample", "train_resampled.csv"), best.outcome.data);
    nlohmann::json trace;
    trace["selected"] = resample::to_string(best.strategy.kind);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : best.trace) {
        nlohmann::json je;
        je["strategy"] = resample::to_string(e.kind);
        je["n_negative"] = e.n_negative;
        je["n_positive"] = e.n_positive;
        je["synthetic_added"] = e.synthetic_added;
        je["originals_removed"] = e.originals_removed;
        je["imbalance"] = e.imbalance;
        je["selected"] = e.selected;
        if (!e.error.empty()) je["error"] = e.error;
        entries.push_back(je);
    }
    trace["strategies"] = entries;
    artifact::write_json(file_in(cfg, "resample", "resample_trace.json"), trace);
    write_stage_manifest(cfg, "resample", {input},
                         {"train_resampled.csv", "resample_trace.json"});
}

void stage_train_tabtrans(const RunConfig& cfg) {
    const auto train_path = file_in(cfg, "select", "train.csv");
    const auto test_path = file_in(cfg, "select", "test.csv");
    require_file(train_path, "train-tabtrans");
    require_file(test_path, "train-tabtrans");
    const auto train = read_dataset(train_path);
    const auto test = read_dataset(test_path);

    resample::AugmentConfig aug = cfg.augment;
    aug.seed = derive_seed(cfg.seed, "augment");
    const auto augmented = resample::augment_minority(train, aug);

    tabtrans::TabTransConfig tcfg = cfg.tabtrans;
    tcfg.seed = derive_seed(cfg.seed, "tabtrans");
    std::map<std::string, std::int64_t> categorical;
    if (std::find(train.feature_names.begin(), train.feature_names.end(),
                  std::string(schema::kSexColumn)) != train.feature_names.end())
        categorical[std::string(schema::kSexColumn)] = 2;

    auto model = tabtrans::TabTransModel::build(tcfg, train.feature_names, categorical);
    const auto history = tabtrans::train(
        model, augmented.data, tcfg,
        cfg.tabtrans_weighted_sampling ? augmented.sample_weights : std::vector<double>{});

    stage_dir(cfg, "train-tabtrans");
    csv::Table hist;
    hist.header = {"epoch", "train_loss", "val_minority_recall", "learning_rate"};
    for (const auto& e : history.epochs)
        hist.rows.push_back({std::to_string(e.epoch), csv::format_double(e.train_loss),
                             csv::format_double(e.val_recall),
                             csv::format_double(e.learning_rate)});
    csv::write_file(file_in(cfg, "train-tabtrans", "history.csv"), hist);

    nlohmann::json extra;
    extra["best_epoch"] = history.best_epoch;
    extra["best_val_minority_recall"] = history.best_val_recall;
    extra["stop_reason"] = history.stop_reason;
    extra["augmented_rows"] = augmented.copies_added;
    const auto std_path = file_in(cfg, "select", "standardizer.json");
    if (fs::exists(std_path)) extra["standardizer"] = artifact::read_json(std_path);
    model.save(file_in(cfg, "train-tabtrans", "tabtrans.json"),
               file_in(cfg, "train-tabtrans", "tabtrans.bin"), extra);

    report::write_predictions_csv(file_in(cfg, "train-tabtrans", "predictions_tabtrans.csv"),
                                  "tabtrans", test.subject_ids, model.predict_proba(test),
                                  test.labels);
    write_stage_manifest(cfg, "train-tabtrans", {train_path, test_path},
                         {"tabtrans.json", "tabtrans.bin", "history.csv",
                          "predictions_tabtrans.csv"});
}

void stage_train_baselines(const RunConfig& cfg) {
    const auto train_path = file_in(cfg, "resample", "train_resampled.csv");
    const auto test_path = file_in(cfg, "select", "test.csv");
    require_file(train_path, "train-baselines");
    require_file(test_path, "train-baselines");
    const auto train = read_dataset(train_path);
    const auto test = read_dataset(test_path);

    struct Entry {
        baselines::BaselineSpec spec;
        baselines::CvResult cv;
        std::optional<double> tuned_auc;
    };
    std::vector<Entry> entries;
    for (auto kind : baselines::all_baselines()) {
        baselines::BaselineSpec spec;
        spec.kind = kind;
        spec.seed = derive_seed(cfg.seed, "baseline/" + baselines::to_string(kind));
        Entry e;
        e.spec = spec;
        e.cv = baselines::cross_validate(spec, train, 5,
                                         derive_seed(cfg.seed, "cv/" +
                                                                baselines::to_string(kind)));
        entries.push_back(std::move(e));
    }

    // Top models by CV AUC enter grid search; their tuned specs replace the
    // stock hyperparameters for the final fit and the soft vote.
    std::vector<std::size_t> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&entries](std::size_t a, std::size_t b) {
        return entries[a].cv.mean_auc > entries[b].cv.mean_auc;
    });
    const auto top_n = std::min<std::size_t>(static_cast<std::size_t>(cfg.grid_top_models),
                                             entries.size());
    for (std::size_t rank = 0; rank < top_n; ++rank) {
        auto& e = entries[order[rank]];
        const auto grid = baselines::default_grid(e.spec.kind);
        const auto searched = baselines::grid_search(
            e.spec, grid, train,
            derive_seed(cfg.seed, "grid/" + baselines::to_string(e.spec.kind)));
        e.spec = searched.best;
        e.tuned_auc = searched.best_cv.mean_auc;
    }

    stage_dir(cfg, "train-baselines");
    std::vector<baselines::BaselineModel> models;
    std::vector<std::string> outputs;
    for (const auto& e : entries) {
        models.push_back(baselines::BaselineModel::fit(e.spec, train));
        const auto name = baselines::to_string(e.spec.kind);
        const auto pred_name = "predictions_" + name + ".csv";
        report::write_predictions_csv(file_in(cfg, "train-baselines", pred_name), name,
                                      test.subject_ids, models.back().predict_proba(test),
                                      test.labels);
        outputs.push_back(pred_name);
    }

    std::vector<const baselines::BaselineModel*> voters;
    for (std::size_t rank = 0; rank < top_n; ++rank)
        voters.push_back(&models[order[rank]]);
    if (voters.size() >= 2) {
        const auto vote = baselines::soft_vote(voters, test);
        report::write_predictions_csv(
            file_in(cfg, "train-baselines", "predictions_soft_vote.csv"), "soft_vote",
            test.subject_ids, vote, test.labels);
        outputs.push_back("predictions_soft_vote.csv");
    }

    csv::Table cv;
    cv.header = {"model_name", "accuracy_pct", "precision_pct", "recall_pct", "roc_auc_pct",
                 "tuned_auc_pct"};
    nlohmann::json tuned = nlohmann::json::object();
    std::vector<report::MetricSet> champion_metrics;
    for (const auto& e : entries) {
        const auto name = baselines::to_string(e.spec.kind);
        cv.rows.push_back({name, report::percent(e.cv.mean_accuracy),
                           report::percent(e.cv.mean_precision),
                           report::percent(e.cv.mean_recall), report::percent(e.cv.mean_auc),
                           e.tuned_auc ? report::percent(*e.tuned_auc) : ""});
        if (e.tuned_auc) tuned[name] = *e.tuned_auc;
        report::MetricSet ms;
        ms.roc_auc = e.cv.mean_auc;
        ms.f1 = e.cv.mean_f1;
        champion_metrics.push_back(ms);
    }
    csv::write_file(file_in(cfg, "train-baselines", "cv_results.csv"), cv);
    artifact::write_json(file_in(cfg, "train-baselines", "tuned_auc.json"), tuned);
    outputs.push_back("cv_results.csv");
    outputs.push_back("tuned_auc.json");

    const auto champ = baselines::select_champion(champion_metrics);
    models[champ].save(file_in(cfg, "train-baselines", "champion.json"),
                       file_in(cfg, "train-baselines", "champion.bin"));
    nlohmann::json info;
    info["kind"] = baselines::to_string(entries[champ].spec.kind);
    info["cv_auc"] = entries[champ].cv.mean_auc;
    info["cv_f1"] = entries[champ].cv.mean_f1;
    artifact::write_json(file_in(cfg, "train-baselines", "champion_info.json"), info);
    outputs.insert(outputs.end(), {"champion.json", "champion.bin", "champion_info.json"});
    write_stage_manifest(cfg, "train-baselines", {train_path, test_path}, outputs);
}

// Deterministic heuristic stand-in for a remote model: scores the subject by
// average population-relative deviation of the prompt's measurements.
llm::MockChatClient::Responder heuristic_mock(
    const std::map<std::string, llm::ReferenceRange>& ranges) {
    return [ranges](const std::string&, const std::string& user) {
        double z_sum = 0.0;
        int n = 0;
        const auto block = user.find("Subject measurements:");
        std::istringstream lines(user.substr(block == std::string::npos ? 0 : block));
        std::string line;
        while (std::getline(lines, line)) {
            const auto dash = line.find("- ");
            const auto colon = line.find(": ");
            if (dash == std::string::npos || colon == std::string::npos || colon < dash)
                continue;
            const std::string name = line.substr(dash + 2, colon - dash - 2);
            const auto it = ranges.find(name);
            if (it == ranges.end()) continue;
            double value = 0.0;
            try {
                value = std::stod(line.substr(colon + 2));
            } catch (...) {
                continue;
            }
            const double spread = std::max((it->second.p95 - it->second.p5) / 3.29, 1e-9);
            z_sum += (value - it->second.median) / spread;
            ++n;
        }
        const double z = n > 0 ? z_sum / static_cast<double>(n) : 0.0;
        const double prob = 1.0 / (1.0 + std::exp(-2.2 * z));
        nlohmann::json body = {
            {"risk", prob >= 0.5 ? "high" : "low"},
            {"probability", prob},
            {"confidence", 50.0 + 40.0 * std::abs(std::tanh(z))},
            {"reasoning", "population-relative deviation of the reported measurements"}};
        return llm::ChatResult{true, body.dump(), ""};
    };
}

void stage_eval_llm(const RunConfig& cfg) {
    const auto train_path = file_in(cfg, "select", "train_raw.csv");
    const auto test_path = file_in(cfg, "select", "test_raw.csv");
    require_file(train_path, "eval-llm");
    require_file(test_path, "eval-llm");
    const auto train = read_dataset(train_path);
    auto test = read_dataset(test_path);
    if (cfg.llm_max_subjects > 0 && test.labels.size() > cfg.llm_max_subjects) {
        // Deterministic stratified cap so the subset keeps both classes.
        const double frac = static_cast<double>(cfg.llm_max_subjects) /
                            static_cast<double>(test.labels.size());
        const auto want_pos = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(
                   frac * static_cast<double>(test.n_positive()))));
        const std::size_t want_neg = cfg.llm_max_subjects - std::min(cfg.llm_max_subjects,
                                                                     want_pos);
        std::vector<std::size_t> rows;
        std::size_t taken_pos = 0, taken_neg = 0;
        for (std::size_t i = 0; i < test.labels.size(); ++i) {
            if (test.labels[i] == 1 && taken_pos < want_pos) {
                rows.push_back(i);
                ++taken_pos;
            } else if (test.labels[i] == 0 && taken_neg < want_neg) {
                rows.push_back(i);
                ++taken_neg;
            }
        }
        test = cohort::select_rows(test, rows);
    }

    llm::PromptSpec spec;
    spec.strategy = cfg.llm_strategy;
    if (spec.strategy == llm::PromptStrategy::few_shot)
        spec.examples = llm::make_examples(train, cfg.llm_examples_per_class);
    else
        spec.reference_ranges = llm::make_reference_ranges(train);

    llm::EvaluationRun run;
    if (cfg.llm_endpoint.base_url.empty()) {
        llm::MockChatClient mock(heuristic_mock(llm::make_reference_ranges(train)));
        llm::LlmEndpoint ep = cfg.llm_endpoint;
        ep.requests_per_minute = 0.0;  // in-process, no throttling
        run = llm::evaluate(mock, ep, test, spec,
                            [](std::chrono::milliseconds) {});
    } else {
        llm::HttpChatClient client(cfg.llm_endpoint);
        run = llm::evaluate(client, cfg.llm_endpoint, test, spec);
    }

    stage_dir(cfg, "eval-llm");
    const auto pred_name = "predictions_llm_" + cfg.llm_endpoint.name + ".csv";
    report::write_predictions_csv(file_in(cfg, "eval-llm", pred_name),
                                  "llm_" + cfg.llm_endpoint.name, test.subject_ids,
                                  run.probabilities, test.labels);
    std::ofstream transcript(file_in(cfg, "eval-llm", "transcript.jsonl"), std::ios::binary);
    for (const auto& entry : run.transcript) transcript << entry.to_json().dump() << '\n';
    write_stage_manifest(cfg, "eval-llm", {train_path, test_path},
                         {pred_name, "transcript.jsonl"});
}

void stage_evaluate(const RunConfig& cfg) {
    // Gather prediction files in a fixed, documented order.
    std::vector<std::string> files;
    files.push_back(file_in(cfg, "train-tabtrans", "predictions_tabtrans.csv"));
    for (auto kind : baselines::all_baselines())
        files.push_back(file_in(cfg, "train-baselines",
                                "predictions_" + baselines::to_string(kind) + ".csv"));
    const auto vote = file_in(cfg, "train-baselines", "predictions_soft_vote.csv");
    if (fs::exists(vote)) files.push_back(vote);
    {
        std::vector<std::string> llm_files;
        if (fs::exists(file_in(cfg, "eval-llm", "")))
            for (const auto& e : fs::directory_iterator(file_in(cfg, "eval-llm", "")))
                if (e.path().filename().string().rfind("predictions_llm_", 0) == 0)
                    llm_files.push_back(e.path().string());
        std::sort(llm_files.begin(), llm_files.end());
        files.insert(files.end(), llm_files.begin(), llm_files.end());
    }
    for (std::size_t i = 0; i < 2; ++i) require_file(files[i], "evaluate");

    nlohmann::json tuned = nlohmann::json::object();
    const auto tuned_path = file_in(cfg, "train-baselines", "tuned_auc.json");
    if (fs::exists(tuned_path)) tuned = artifact::read_json(tuned_path);

    report::RunOutputs outputs;
    for (const auto& path : files) {
        require_file(path, "evaluate");
        const auto pred = report::read_predictions_csv(path);
        report::ModelEvaluation ev;
        ev.name = pred.model_name;
        ev.roc = report::roc_auc(pred.labels, pred.probabilities);
        ev.confusion = report::confusion(pred.labels,
                                         report::threshold_predictions(pred.probabilities));
        ev.metrics = report::metrics(ev.confusion);
        ev.metrics.roc_auc = ev.roc.auc;
        ev.metrics.auc_defined = true;
        if (tuned.contains(ev.name)) ev.tuned_auc = tuned[ev.name].get<double>();
        outputs.models.push_back(std::move(ev));
    }

    nlohmann::json manifest;
    manifest["tool"] = "dxtab";
    manifest["version"] = kVersion;
    manifest["seed"] = cfg.seed;
    manifest["config_hash"] = cfg.config_hash();
    manifest["models"] = outputs.models.size();
    outputs.manifest = manifest;

    const auto written = report::write_report(outputs, stage_dir(cfg, "report"));
    stage_dir(cfg, "evaluate");
    write_stage_manifest(cfg, "evaluate", files, written);
}

void stage_interpret(const RunConfig& cfg) {
    const auto manifest_path = file_in(cfg, "train-tabtrans", "tabtrans.json");
    const auto blob_path = file_in(cfg, "train-tabtrans", "tabtrans.bin");
    const auto test_path = file_in(cfg, "select", "test.csv");
    require_file(manifest_path, "interpret");
    require_file(blob_path, "interpret");
    require_file(test_path, "interpret");

    const auto model = tabtrans::TabTransModel::load(manifest_path, blob_path);
    const auto test = read_dataset(test_path);
    auto report = report::permutation_importance(
        [&model](const Matrix& x) { return model.predict_proba_matrix(x); }, test,
        cfg.importance_repeats, derive_seed(cfg.seed, "interpret"));
    report::assign_tiers(report, cfg.tiers);
    stage_dir(cfg, "report");
    report::write_importance_csv(file_in(cfg, "report", "importance.csv"), report);
    stage_dir(cfg, "interpret");
    nlohmann::json notes;
    notes["baseline_auc"] = report.baseline_auc;
    notes["repeats"] = cfg.importance_repeats;
    write_stage_manifest(cfg, "interpret", {manifest_path, blob_path, test_path},
                         {"../report/importance.csv"}, notes);
}

}  // namespace

void RunConfig::validate() const {
    const bool external = baseline_csv.has_value() || followup_csv.has_value();
    if (external && (!baseline_csv.has_value() || !followup_csv.has_value()))
        throw ConfigError("config.input: both baseline_csv and followup_csv are required");
    if (external && use_synthetic)
        throw ConfigError("config: exactly one of input CSVs or synthetic spec; got both");
    if (!external && !use_synthetic)
        throw ConfigError("config: exactly one of input CSVs or synthetic spec; got neither");
    if (sparse_threshold <= 0.0 || sparse_threshold > 1.0)
        throw ConfigError("config.preprocessing.sparse_threshold: must be in (0,1]");
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ConfigError("config.split.test_fraction: must be in (0,1)");
    if (grid_top_models < 0) throw ConfigError("config.baselines.grid_top_models: must be >= 0");
    if (importance_repeats < 1)
        throw ConfigError("config.evaluation.importance_repeats: must be >= 1");
    try {
        synthetic.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config.synthetic: ") + e.what());
    }
    try {
        augment.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config.augmentation: ") + e.what());
    }
    try {
        tabtrans.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config.tabtrans: ") + e.what());
    }
    try {
        llm_endpoint.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config.llm: ") + e.what());
    }
    if (selection.alpha <= 0.0 || selection.alpha >= 1.0)
        throw ConfigError("config.selection.alpha: must be in (0,1)");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    if (baseline_csv) {
        j["input"] = {{"baseline_csv", *baseline_csv}, {"followup_csv", *followup_csv}};
    } else {
        nlohmann::json s;
        s["n_male_control"] = synthetic.n_male_control;
        s["n_male_case"] = synthetic.n_male_case;
        s["n_female_control"] = synthetic.n_female_control;
        s["n_female_case"] = synthetic.n_female_case;
        s["missingness_rate"] = synthetic.missingness_rate;
        s["effect_sizes"] = synthetic.effect_sizes;
        j["synthetic"] = s;
    }
    j["preprocessing"] = {{"sparse_threshold", sparse_threshold}};
    j["split"] = {{"test_fraction", test_fraction}};
    j["selection"] = {{"alpha", selection.alpha},
                      {"r_min", selection.r_min},
                      {"collinearity_cap", selection.collinearity_cap},
                      {"mi_bins", selection.mi_bins},
                      {"run_tsne", run_tsne},
                      {"tsne", {{"perplexity", tsne.perplexity},
                                {"iterations", tsne.iterations}}}};
    nlohmann::json strat = nlohmann::json::array();
    for (auto k : strategies) strat.push_back(resample::to_string(k));
    j["resampling"] = {{"strategies", strategies.empty() ? nlohmann::json("auto")
                                                         : nlohmann::json(strat)}};
    j["augmentation"] = {{"noise_sigma", augment.noise_sigma},
                         {"mixup_alpha", augment.mixup_alpha},
                         {"minority_weight", augment.minority_weight},
                         {"majority_weight", augment.majority_weight},
                         {"augment_factor", augment.augment_factor},
                         {"mixup_probability", augment.mixup_probability},
                         {"weighted_sampling", tabtrans_weighted_sampling}};
    j["tabtrans"] = tabtrans.to_json();
    j["baselines"] = {{"grid_top_models", grid_top_models}};
    j["llm"] = {{"name", llm_endpoint.name},
                {"base_url", llm_endpoint.base_url},
                {"model", llm_endpoint.model},
                {"api_key_env", llm_endpoint.api_key_env},
                {"timeout_seconds", llm_endpoint.timeout_seconds},
                {"max_retries", llm_endpoint.max_retries},
                {"requests_per_minute", llm_endpoint.requests_per_minute},
                {"strategy", llm::to_string(llm_strategy)},
                {"examples_per_class", llm_examples_per_class},
                {"max_subjects", llm_max_subjects}};
    j["evaluation"] = {{"importance_repeats", importance_repeats},
                       {"tier_high", tiers.high},
                       {"tier_moderate", tiers.moderate}};
    return j;
}

namespace {

template <typename T>
T field(const nlohmann::json& j, const std::string& context, const std::string& key,
        T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError("config." + context + "." + key + ": invalid value");
    }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.seed = field<std::uint64_t>(j, "", "seed", c.seed);
    c.out_dir = field<std::string>(j, "", "out_dir", c.out_dir);

    if (j.contains("input")) {
        const auto& in = j.at("input");
        c.baseline_csv = field<std::string>(in, "input", "baseline_csv", "");
        c.followup_csv = field<std::string>(in, "input", "followup_csv", "");
        if (c.baseline_csv->empty() || c.followup_csv->empty())
            throw ConfigError("config.input: baseline_csv and followup_csv are required");
        c.use_synthetic = false;
        if (j.contains("synthetic"))
            throw ConfigError("config: exactly one of input CSVs or synthetic spec; got both");
    }
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        c.synthetic.n_male_control =
            field<std::size_t>(s, "synthetic", "n_male_control", c.synthetic.n_male_control);
        c.synthetic.n_male_case =
            field<std::size_t>(s, "synthetic", "n_male_case", c.synthetic.n_male_case);
        c.synthetic.n_female_control = field<std::size_t>(s, "synthetic", "n_female_control",
                                                          c.synthetic.n_female_control);
        c.synthetic.n_female_case =
            field<std::size_t>(s, "synthetic", "n_female_case", c.synthetic.n_female_case);
        c.synthetic.missingness_rate = field<double>(s, "synthetic", "missingness_rate",
                                                     c.synthetic.missingness_rate);
        if (s.contains("effect_sizes")) {
            try {
                c.synthetic.effect_sizes =
                    s.at("effect_sizes").get<std::map<std::string, double>>();
            } catch (const std::exception&) {
                throw ConfigError("config.synthetic.effect_sizes: invalid mapping");
            }
        }
    }
    if (j.contains("preprocessing"))
        c.sparse_threshold = field<double>(j.at("preprocessing"), "preprocessing",
                                           "sparse_threshold", c.sparse_threshold);
    if (j.contains("split"))
        c.test_fraction =
            field<double>(j.at("split"), "split", "test_fraction", c.test_fraction);
    if (j.contains("selection")) {
        const auto& s = j.at("selection");
        c.selection.alpha = field<double>(s, "selection", "alpha", c.selection.alpha);
        c.selection.r_min = field<double>(s, "selection", "r_min", c.selection.r_min);
        c.selection.collinearity_cap =
            field<double>(s, "selection", "collinearity_cap", c.selection.collinearity_cap);
        c.selection.mi_bins = field<int>(s, "selection", "mi_bins", c.selection.mi_bins);
        c.run_tsne = field<bool>(s, "selection", "run_tsne", c.run_tsne);
        if (s.contains("tsne")) {
            const auto& t = s.at("tsne");
            c.tsne.perplexity = field<double>(t, "selection.tsne", "perplexity",
                                              c.tsne.perplexity);
            c.tsne.iterations = field<int>(t, "selection.tsne", "iterations",
                                           c.tsne.iterations);
        }
    }
    if (j.contains("resampling")) {
        const auto& r = j.at("resampling");
        if (r.contains("strategies") && r.at("strategies").is_array()) {
            for (const auto& name : r.at("strategies")) {
                try {
                    c.strategies.push_back(
                        resample::strategy_from_string(name.get<std::string>()));
                } catch (const std::exception&) {
                    throw ConfigError("config.resampling.strategies: unknown strategy " +
                                      name.dump());
                }
            }
        }
    }
    if (j.contains("augmentation")) {
        const auto& a = j.at("augmentation");
        c.augment.noise_sigma =
            field<double>(a, "augmentation", "noise_sigma", c.augment.noise_sigma);
        c.augment.mixup_alpha =
            field<double>(a, "augmentation", "mixup_alpha", c.augment.mixup_alpha);
        c.augment.minority_weight =
            field<double>(a, "augmentation", "minority_weight", c.augment.minority_weight);
        c.augment.majority_weight =
            field<double>(a, "augmentation", "majority_weight", c.augment.majority_weight);
        c.augment.augment_factor =
            field<int>(a, "augmentation", "augment_factor", c.augment.augment_factor);
        c.augment.mixup_probability =
            field<double>(a, "augmentation", "mixup_probability", c.augment.mixup_probability);
        c.tabtrans_weighted_sampling = field<bool>(a, "augmentation", "weighted_sampling",
                                                   c.tabtrans_weighted_sampling);
    }
    if (j.contains("tabtrans")) {
        try {
            c.tabtrans = tabtrans::TabTransConfig::from_json(j.at("tabtrans"));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config.tabtrans: ") + e.what());
        }
    }
    if (j.contains("baselines"))
        c.grid_top_models = field<int>(j.at("baselines"), "baselines", "grid_top_models",
                                       c.grid_top_models);
    if (j.contains("llm")) {
        const auto& l = j.at("llm");
        c.llm_endpoint.name = field<std::string>(l, "llm", "name", c.llm_endpoint.name);
        c.llm_endpoint.base_url =
            field<std::string>(l, "llm", "base_url", c.llm_endpoint.base_url);
        c.llm_endpoint.model = field<std::string>(l, "llm", "model", c.llm_endpoint.model);
        c.llm_endpoint.api_key_env =
            field<std::string>(l, "llm", "api_key_env", c.llm_endpoint.api_key_env);
        c.llm_endpoint.timeout_seconds =
            field<double>(l, "llm", "timeout_seconds", c.llm_endpoint.timeout_seconds);
        c.llm_endpoint.max_retries =
            field<int>(l, "llm", "max_retries", c.llm_endpoint.max_retries);
        c.llm_endpoint.requests_per_minute = field<double>(
            l, "llm", "requests_per_minute", c.llm_endpoint.requests_per_minute);
        if (l.contains("strategy")) {
            try {
                c.llm_strategy =
                    llm::strategy_from_string(l.at("strategy").get<std::string>());
            } catch (const std::exception&) {
                throw ConfigError("config.llm.strategy: expected few_shot or comparative");
            }
        }
        c.llm_examples_per_class = field<std::size_t>(l, "llm", "examples_per_class",
                                                      c.llm_examples_per_class);
        c.llm_max_subjects =
            field<std::size_t>(l, "llm", "max_subjects", c.llm_max_subjects);
    }
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        c.importance_repeats =
            field<int>(e, "evaluation", "importance_repeats", c.importance_repeats);
        c.tiers.high = field<double>(e, "evaluation", "tier_high", c.tiers.high);
        c.tiers.moderate = field<double>(e, "evaluation", "tier_moderate", c.tiers.moderate);
    }
    c.validate();
    return c;
}

std::string RunConfig::config_hash() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {
        "generate",        "preprocess", "engineer", "select",    "resample",
        "train-tabtrans",  "train-baselines", "eval-llm", "evaluate", "interpret",
        "pipeline"};
    return names;
}

int run_subcommand(const std::string& stage, const RunConfig& cfg) {
    try {
        cfg.validate();
        write_top_manifest(cfg);
        auto dispatch = [&cfg](const std::string& name) {
            if (name == "generate")
                stage_generate(cfg);
            else if (name == "preprocess")
                stage_preprocess(cfg);
            else if (name == "engineer")
                stage_engineer(cfg);
            else if (name == "select")
                stage_select(cfg);
            else if (name == "resample")
                stage_resample(cfg);
            else if (name == "train-tabtrans")
                stage_train_tabtrans(cfg);
            else if (name == "train-baselines")
                stage_train_baselines(cfg);
            else if (name == "eval-llm")
                stage_eval_llm(cfg);
            else if (name == "evaluate")
                stage_evaluate(cfg);
            else if (name == "interpret")
                stage_interpret(cfg);
            else
                throw ConfigError("unknown stage: " + name);
        };
        if (stage == "pipeline") {
            for (const auto& name : stage_names()) {
                if (name == "pipeline") continue;
                if (name == "generate" && !cfg.use_synthetic) continue;
                dispatch(name);
            }
        } else {
            dispatch(stage);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const PrereqError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace dxtab::pipeline

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bct/data.hpp"
#include "bct/layers.hpp"
#include "bct/losses.hpp"
#include "bct/metrics.hpp"
#include "bct/optim.hpp"
#include "bct/staging.hpp"

namespace bct {

struct ParadigmConfig {
  ParadigmKind kind = ParadigmKind::baseline;
  std::string pretrained;  // BCT1 checkpoint from pretrain_source (tl / etl)
  // true: start from the whole source model; false: backbone.* only, fresh head
  bool keep_head = true;
  std::size_t stage_cap = 200;
  // Source dataset for surrogate pretraining in the paradigm suite; generated
  // under the suite's output directory when empty.
  std::string source_root;
  std::size_t source_per_class = 100;
};

struct TrainConfig {
  DataConfig data;
  ModelConfig model;
  LossSpec loss;
  OptimizerConfig optim;
  ParadigmConfig paradigm;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 200;
  double acc_threshold = 0.99;
  double loss_threshold = 0.001;
  std::uint64_t seed = 1;
  std::string output_dir;
};

// Throws ConfigError on invalid values.
void validate(const TrainConfig& config);

// Copies the data image size into the model config.
TrainConfig resolved(const TrainConfig& config);

struct Thresholds {
  double accuracy = 0.99;
  double loss = 0.001;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t stage = 1;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;  // NaN without a validation split
  double wall_seconds = 0.0;
};

// train accuracy >= threshold AND train loss <= threshold.
bool check_convergence(const EpochRecord& record, const Thresholds& thresholds);

struct RunLog {
  std::vector<EpochRecord> records;
  ConfusionCounts test_counts;
  MetricReport test_report;
  // Sum of per-stage epochs-to-converge; absent unless every stage converged.
  std::optional<std::size_t> epochs_to_converge;
  std::vector<std::size_t> stage_epochs;
  std::vector<std::optional<std::size_t>> stage_converged;
  std::vector<StageTransition> transitions;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  std::vector<std::pair<std::string, std::string>> config_echo;

  bool converged() const { return epochs_to_converge.has_value(); }
};

// "epoch,stage,train_loss,train_acc,val_acc", values with 9 significant digits.
std::string format_runlog_csv(const RunLog& log);
// Parses the columns written by format_runlog_csv. Throws DataError.
std::vector<EpochRecord> parse_runlog_csv(const std::string& text, const std::string& origin = "<memory>");
// "epoch,wall_seconds"; kept apart because it is not deterministic.
std::string format_walltime_csv(const RunLog& log);
// One JSON object with test counts, metrics, convergence and stage data.
std::string format_report_json(const RunLog& log);

struct Evaluation {
  ConfusionCounts counts;
  MetricReport report;
  std::vector<int> predictions;
  double mean_loss = 0.0;
};

// Prediction = argmax of the softmax row. Throws ConfigError for an empty
// sample list.
Evaluation evaluate(const Model& model, const std::vector<Sample>& samples, const LossSpec& loss = {},
                    std::size_t batch_size = 64);

// Staged epoch loop over an already built model. `best` receives the
// parameters of the epoch with the highest validation accuracy (ties keep the
// earlier epoch). Test metrics are left empty.
RunLog fit(Model& model, const Dataset& data, const TrainConfig& config, const Paradigm& paradigm,
           Model* best = nullptr);

// Builds the model from the config (tl / etl start from the pretrained
// checkpoint, or only its backbone.* when keep_head is off), runs fit,
// evaluates the final model on the test split and, with an output directory,
// writes runlog.csv, walltime.csv, report.jsonl, manifest.txt,
// dataset_manifest.txt, best.bct1 and final.bct1.
// All validation happens before the output directory is created.
RunLog train(const TrainConfig& config);

enum class SuiteKind { loss, optimizer, paradigm };

const char* to_string(SuiteKind kind);
SuiteKind parse_suite(const std::string& name);

struct AblationOptions {
  std::size_t seeds = 5;  // run seeds base, base+1, ...; the first is the pinned seed
  std::size_t jobs = 1;
  std::string output_dir;
};

struct ArmRun {
  std::uint64_t seed = 0;
  RunLog log;
};

struct AblationRow {
  std::string arm;
  std::vector<ArmRun> runs;
  std::size_t converged_runs = 0;
  std::optional<double> median_epochs;  // absent when the median run did not converge
  double median_accuracy = 0.0;
  double median_f1 = 0.0;
  double median_recall = 0.0;  // class 1, the minority in imbalanced sets
};

struct AblationTable {
  SuiteKind suite = SuiteKind::loss;
  std::vector<AblationRow> rows;
  // Paradigm suite only: one surrogate pretraining per seed.
  std::vector<std::pair<std::uint64_t, PretrainResult>> pretraining;
};

// Arm names per suite: loss {ce, bce, focal_g0, focal_g1, focal_g2},
// optimizer {sgd, adam, rectadam}, paradigm {baseline, tl, etl}.
std::vector<std::string> suite_arms(SuiteKind kind);
// Base config specialised for one arm.
TrainConfig arm_config(SuiteKind kind, const std::string& arm, const TrainConfig& base);

// Runs every arm for every seed (up to `jobs` concurrently) and assembles the
// table once all runs finish. Every arm is validated before any training.
// The paradigm suite pretrains one surrogate backbone per seed on the source
// dataset (generated under <out>/source unless paradigm.source_root is set)
// and needs an output directory. With an output directory, per-run artifacts
// go to <out>/<arm>/seed_<s>/ and the table to ablation_<suite>.{md,csv,jsonl}.
AblationTable run_ablation(SuiteKind kind, const TrainConfig& base, const AblationOptions& options);

std::string format_table_markdown(const AblationTable& table);
std::string format_table_csv(const AblationTable& table);
std::string format_table_jsonl(const AblationTable& table);

// Shared numeric formatting: 9 significant digits.
std::string format_g9(double v);

}  // namespace bct

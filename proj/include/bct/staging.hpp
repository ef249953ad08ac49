#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bct/data.hpp"
#include "bct/layers.hpp"
#include "bct/optim.hpp"

namespace bct {

struct TrainConfig;
struct RunLog;

enum class ParadigmKind { baseline, tl, etl };

const char* to_string(ParadigmKind kind);
ParadigmKind parse_paradigm(const std::string& name);

// Name patterns: "*" matches everything, "prefix.*" matches names starting
// with "prefix.", anything else matches exactly.
bool matches_pattern(const std::string& pattern, const std::string& name);

struct StageDef {
  std::string name;
  std::vector<std::string> trainable;
  std::size_t epoch_cap = 200;
};

// baseline: one stage, everything trainable.
// tl:       one stage on a pretrained model, head.* trainable.
// etl:      the tl stage, then backbone.* trainable with head.* frozen.
struct Paradigm {
  ParadigmKind kind = ParadigmKind::baseline;
  std::vector<StageDef> stages;

  static Paradigm make(ParadigmKind kind, std::size_t stage_cap = 200);
};

struct StageTransition {
  std::size_t epoch = 0;       // last epoch of the finished stage
  std::size_t from_stage = 0;  // 1-based
  std::size_t to_stage = 0;
  std::vector<std::string> unfrozen;
  std::vector<std::string> frozen;
  bool moments_reset = false;
  bool forced = false;  // stage hit its epoch cap without converging
};

// Drives the freeze plan of a paradigm over one model and optimizer. Frozen
// parameters are excluded from the optimizer and stop requiring grad, so no
// gradient is computed for them.
class StagedDriver {
 public:
  StagedDriver(Model& model, Paradigm paradigm, Optimizer& optimizer);

  const Paradigm& paradigm() const { return paradigm_; }
  std::size_t stage_index() const { return stage_; }
  std::size_t stage_number() const { return stage_ + 1; }
  const std::set<std::string>& trainable() const { return trainable_; }
  bool finished() const { return finished_; }

  // Call once per completed epoch (1-based, run-global). Ends the current
  // stage when it converged or reached its cap; returns the transition if a
  // next stage starts.
  std::optional<StageTransition> advance(std::size_t epoch, bool converged);

  // Epochs spent in each stage so far.
  const std::vector<std::size_t>& stage_epochs() const { return stage_epochs_; }
  // Per stage: epochs to converge within the stage, if it converged.
  const std::vector<std::optional<std::size_t>>& stage_converged() const { return stage_converged_; }
  const std::vector<StageTransition>& transitions() const { return transitions_; }

 private:
  void enter_stage(std::size_t index);

  Model* model_;
  Paradigm paradigm_;
  Optimizer* optimizer_;
  std::size_t stage_ = 0;
  bool finished_ = false;
  std::set<std::string> trainable_;
  std::vector<std::size_t> stage_epochs_;
  std::vector<std::optional<std::size_t>> stage_converged_;
  std::vector<StageTransition> transitions_;
};

// Enters stage 1. Throws ConfigError when a stage's patterns match no
// parameter.
StagedDriver apply_paradigm(Model& model, const Paradigm& paradigm, Optimizer& optimizer);

std::optional<StageTransition> advance_stage(StagedDriver& driver, std::size_t epoch, bool converged);

struct PretrainResult {
  std::string checkpoint;
  bool converged = false;
  std::size_t epochs = 0;
  double train_accuracy = 0.0;
};

// Trains the backbone architecture from scratch on a source dataset and saves
// the whole model to `checkpoint_path`. The checkpoint is written even when
// the run does not converge (result flagged). Throws DataError before any
// training if the source dataset is missing, ConfigError if it is the target
// dataset itself.
PretrainResult pretrain_source(const ModelConfig& backbone, const std::string& source_root,
                               const TrainConfig& train_config, const std::string& checkpoint_path);

}  // namespace bct

#include "bct/staging.hpp"

#include <filesystem>

#include "bct/checkpoint.hpp"
#include "bct/error.hpp"
#include "bct/trainer.hpp"

namespace bct {

const char* to_string(ParadigmKind kind) {
  switch (kind) {
    case ParadigmKind::baseline: return "baseline";
    case ParadigmKind::tl: return "tl";
    case ParadigmKind::etl: return "etl";
  }
  return "?";
}

ParadigmKind parse_paradigm(const std::string& name) {
  if (name == "baseline") return ParadigmKind::baseline;
  if (name == "tl") return ParadigmKind::tl;
  if (name == "etl") return ParadigmKind::etl;
  throw ConfigError("unknown paradigm '" + name + "' (expected baseline, tl or etl)");
}

bool matches_pattern(const std::string& pattern, const std::string& name) {
  if (pattern == "*") return true;
  if (pattern.size() >= 2 && pattern.compare(pattern.size() - 2, 2, ".*") == 0) {
    const std::size_t n = pattern.size() - 1;  // keep the dot
    return name.size() > n && name.compare(0, n, pattern, 0, n) == 0;
  }
  return pattern == name;
}

Paradigm Paradigm::make(ParadigmKind kind, std::size_t stage_cap) {
  if (stage_cap == 0) throw ConfigError("paradigm.stage_cap must be >= 1");
  Paradigm p;
  p.kind = kind;
  switch (kind) {
    case ParadigmKind::baseline: p.stages = {{"all", {"*"}, stage_cap}}; break;
    case ParadigmKind::tl: p.stages = {{"head", {"head.*"}, stage_cap}}; break;
    case ParadigmKind::etl:
      p.stages = {{"head", {"head.*"}, stage_cap}, {"backbone", {"backbone.*"}, stage_cap}};
      break;
  }
  return p;
}

StagedDriver::StagedDriver(Model& model, Paradigm paradigm, Optimizer& optimizer)
    : model_(&model), paradigm_(std::move(paradigm)), optimizer_(&optimizer) {
  if (paradigm_.stages.empty()) throw ConfigError("paradigm has no stages");
  // every stage is resolved up front so a bad pattern fails before training
  for (const auto& stage : paradigm_.stages) {
    if (stage.epoch_cap == 0) throw ConfigError("stage '" + stage.name + "' has an epoch cap of 0");
    for (const auto& pattern : stage.trainable) {
      bool hit = false;
      for (const auto& p : model.parameters()) hit = hit || matches_pattern(pattern, p.name);
      if (!hit) throw ConfigError("stage '" + stage.name + "': pattern '" + pattern + "' matches no parameter");
    }
  }
  stage_epochs_.assign(paradigm_.stages.size(), 0);
  stage_converged_.assign(paradigm_.stages.size(), std::nullopt);
  enter_stage(0);
}

void StagedDriver::enter_stage(std::size_t index) {
  stage_ = index;
  trainable_.clear();
  std::set<std::string> frozen;
  for (auto& p : model_->parameters()) {
    bool train = false;
    for (const auto& pattern : paradigm_.stages[index].trainable) train = train || matches_pattern(pattern, p.name);
    if (train) {
      trainable_.insert(p.name);
    } else {
      frozen.insert(p.name);
    }
    p.tensor.set_requires_grad(train);
  }
  optimizer_->set_freeze(frozen);
  model_->zero_grad();
}

std::optional<StageTransition> StagedDriver::advance(std::size_t epoch, bool converged) {
  if (finished_) return std::nullopt;
  const std::size_t in_stage = ++stage_epochs_[stage_];
  if (converged && !stage_converged_[stage_]) stage_converged_[stage_] = in_stage;
  const bool capped = in_stage >= paradigm_.stages[stage_].epoch_cap;
  if (!converged && !capped) return std::nullopt;
  if (stage_ + 1 == paradigm_.stages.size()) {
    finished_ = true;
    return std::nullopt;
  }
  StageTransition t;
  t.epoch = epoch;
  t.from_stage = stage_ + 1;
  t.to_stage = stage_ + 2;
  t.forced = !converged;
  const auto before = trainable_;
  enter_stage(stage_ + 1);
  for (const auto& name : trainable_) {
    if (!before.count(name)) t.unfrozen.push_back(name);
  }
  for (const auto& name : before) {
    if (!trainable_.count(name)) t.frozen.push_back(name);
  }
  transitions_.push_back(t);
  return t;
}

StagedDriver apply_paradigm(Model& model, const Paradigm& paradigm, Optimizer& optimizer) {
  return StagedDriver(model, paradigm, optimizer);
}

std::optional<StageTransition> advance_stage(StagedDriver& driver, std::size_t epoch, bool converged) {
  return driver.advance(epoch, converged);
}

PretrainResult pretrain_source(const ModelConfig& backbone, const std::string& source_root,
                               const TrainConfig& train_config, const std::string& checkpoint_path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (source_root.empty() || !fs::is_directory(source_root, ec)) {
    throw DataError("source dataset not found: '" + source_root + "'");
  }
  if (!train_config.data.root.empty() && fs::exists(train_config.data.root, ec) &&
      fs::equivalent(source_root, train_config.data.root, ec)) {
    throw ConfigError("source dataset must differ from the target dataset (" + source_root + ")");
  }
  if (backbone.arch != Architecture::backbone) throw ConfigError("pretraining needs the backbone architecture");

  TrainConfig cfg = train_config;
  cfg.model = backbone;
  cfg.data.root = source_root;
  cfg.paradigm = ParadigmConfig{};
  cfg.paradigm.stage_cap = cfg.max_epochs;
  cfg.output_dir.clear();
  validate(cfg);

  const Dataset data = Dataset::load(scan_dataset(cfg.data));
  Model model = build_model(cfg.model, cfg.seed);
  const RunLog log = fit(model, data, cfg, Paradigm::make(ParadigmKind::baseline, cfg.max_epochs));
  save_checkpoint(model, checkpoint_path);

  PretrainResult result;
  result.checkpoint = checkpoint_path;
  result.converged = log.converged();
  result.epochs = log.records.size();
  result.train_accuracy = log.records.empty() ? 0.0 : log.records.back().train_acc;
  return result;
}

}  // namespace bct

#include "bct/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "bct/checkpoint.hpp"
#include "bct/config.hpp"
#include "bct/error.hpp"
#include "bct/io.hpp"
#include "json.hpp"

namespace bct {

namespace fs = std::filesystem;

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void validate(const TrainConfig& c) {
  if (c.data.root.empty()) throw ConfigError("data.root is required");
  validate(c.data.ratios);
  if (c.data.height < 1 || c.data.width < 1) throw ConfigError("data.height and data.width must be >= 1");
  validate(c.loss);
  validate(c.optim);
  if (c.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (c.max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (!(c.acc_threshold >= 0.0 && c.acc_threshold <= 1.0)) {
    throw ConfigError("train.acc_threshold must lie in [0, 1]");
  }
  if (!(c.loss_threshold >= 0.0) || !std::isfinite(c.loss_threshold)) {
    throw ConfigError("train.loss_threshold must be a finite value >= 0");
  }
  if (c.paradigm.stage_cap < 1) throw ConfigError("paradigm.stage_cap must be >= 1");
  if (c.paradigm.kind != ParadigmKind::baseline) {
    if (c.model.arch != Architecture::backbone) {
      throw ConfigError(std::string("paradigm ") + to_string(c.paradigm.kind) + " needs model.arch = backbone");
    }
    if (c.paradigm.pretrained.empty()) {
      throw ConfigError(std::string("paradigm ") + to_string(c.paradigm.kind) + " needs paradigm.pretrained");
    }
  }
  if ((c.loss.kind != LossKind::cross_entropy) && c.model.num_classes != 2) {
    throw ConfigError("binary losses need model.num_classes = 2");
  }
  // surfaces shape errors (e.g. an image too small for the conv stack)
  build_model(resolved(c).model, c.seed);
}

TrainConfig resolved(const TrainConfig& config) {
  TrainConfig c = config;
  c.model.height = c.data.height;
  c.model.width = c.data.width;
  return c;
}

bool check_convergence(const EpochRecord& r, const Thresholds& t) {
  return r.train_acc >= t.accuracy && r.train_loss <= t.loss;
}

std::string format_runlog_csv(const RunLog& log) {
  std::string out = "epoch,stage,train_loss,train_acc,val_acc\n";
  for (const auto& r : log.records) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.stage) + "," + format_g9(r.train_loss) + "," +
           format_g9(r.train_acc) + "," + format_g9(r.val_acc) + "\n";
  }
  return out;
}

std::vector<EpochRecord> parse_runlog_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(origin + ": empty runlog");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "epoch,stage,train_loss,train_acc,val_acc") {
    throw DataError(origin + ":1: unexpected runlog header '" + line + "'");
  }
  std::vector<EpochRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected 5 columns, got " +
                      std::to_string(cells.size()));
    }
    auto num = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0') {
        throw DataError(origin + ":" + std::to_string(lineno) + ": '" + s + "' is not a number");
      }
      return v;
    };
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(num(cells[0]));
    r.stage = static_cast<std::size_t>(num(cells[1]));
    r.train_loss = num(cells[2]);
    r.train_acc = num(cells[3]);
    r.val_acc = num(cells[4]);
    if (!records.empty() && r.epoch <= records.back().epoch) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": epoch indices must increase");
    }
    records.push_back(r);
  }
  return records;
}

std::string format_walltime_csv(const RunLog& log) {
  std::string out = "epoch,wall_seconds\n";
  for (const auto& r : log.records) out += std::to_string(r.epoch) + "," + format_g9(r.wall_seconds) + "\n";
  return out;
}

namespace {

nlohmann::ordered_json counts_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

nlohmann::ordered_json metrics_json(const MetricReport& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"precision_undefined", m.precision_undefined},
          {"recall_undefined", m.recall_undefined},
          {"f1_undefined", m.f1_undefined}};
}

}  // namespace

std::string format_report_json(const RunLog& log) {
  nlohmann::ordered_json j;
  j["epochs"] = log.records.size();
  j["converged"] = log.converged();
  j["epochs_to_converge"] = log.epochs_to_converge ? nlohmann::ordered_json(*log.epochs_to_converge) : nullptr;
  j["stage_epochs"] = log.stage_epochs;
  auto per_stage = nlohmann::ordered_json::array();
  for (const auto& s : log.stage_converged) per_stage.push_back(s ? nlohmann::ordered_json(*s) : nullptr);
  j["stage_converged"] = per_stage;
  auto transitions = nlohmann::ordered_json::array();
  for (const auto& t : log.transitions) {
    transitions.push_back({{"epoch", t.epoch},
                           {"from_stage", t.from_stage},
                           {"to_stage", t.to_stage},
                           {"unfrozen", t.unfrozen},
                           {"frozen", t.frozen},
                           {"moments_reset", t.moments_reset},
                           {"forced", t.forced}});
  }
  j["transitions"] = transitions;
  j["best_epoch"] = log.best_epoch;
  j["best_val_acc"] = log.best_val_acc;
  j["test_counts"] = counts_json(log.test_counts);
  j["test_metrics"] = metrics_json(log.test_report);
  return j.dump() + "\n";
}

Evaluation evaluate(const Model& model, const std::vector<Sample>& samples, const LossSpec& loss,
                    std::size_t batch_size) {
  if (samples.empty()) throw ConfigError("cannot evaluate an empty split");
  NoGradGuard no_grad;
  LossSpec summed = loss;
  summed.reduction = Reduction::sum;
  Evaluation ev;
  double total = 0.0;
  for (const auto& batch : make_batches(samples, batch_size, std::nullopt)) {
    const Tensor scores = model.forward(batch.images);
    total += compute_loss(summed, scores, batch.targets).item();
    const std::size_t classes = scores.dim(1);
    const auto s = scores.data();
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < classes; ++k) {
        if (s[i * classes + k] > s[i * classes + best]) best = k;
      }
      ev.predictions.push_back(static_cast<int>(best));
      ev.counts = accumulate(ev.counts, static_cast<int>(best), batch.labels[i]);
    }
  }
  ev.mean_loss = total / static_cast<double>(samples.size());
  if (!std::isfinite(ev.mean_loss)) throw NumericError("evaluation loss is not finite");
  ev.report = compute_metrics(ev.counts);
  return ev;
}

RunLog fit(Model& model, const Dataset& data, const TrainConfig& config, const Paradigm& paradigm, Model* best) {
  const auto& train_set = data.split(Split::train);
  const auto& val_set = data.split(Split::val);
  if (train_set.empty()) throw DataError("the training split is empty");
  if (data.sample_shape() != model.input_shape()) {
    throw ConfigError("dataset samples " + shape_str(data.sample_shape()) + " do not fit model input " +
                      shape_str(model.input_shape()));
  }

  Optimizer optimizer(config.optim, model.parameters());
  StagedDriver driver = apply_paradigm(model, paradigm, optimizer);
  const Thresholds thresholds{config.acc_threshold, config.loss_threshold};

  RunLog log;
  double best_score = -1.0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs && !driver.finished(); ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t stage = driver.stage_number();
    for (const auto& batch : make_batches(train_set, config.batch_size, epoch_seed(config.seed, epoch))) {
      const Tensor scores = model.forward(batch.images);
      Tensor loss = compute_loss(config.loss, scores, batch.targets);
      if (!std::isfinite(loss.item())) {
        throw NumericError("training loss became " + format_g9(loss.item()) + " at epoch " + std::to_string(epoch));
      }
      loss.backward();
      optimizer.step(model.parameters());
      model.zero_grad();
    }

    EpochRecord r;
    r.epoch = epoch;
    r.stage = stage;
    const Evaluation on_train = evaluate(model, train_set, config.loss);
    r.train_loss = on_train.mean_loss;
    r.train_acc = on_train.report.accuracy;
    r.val_acc = val_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : evaluate(model, val_set, config.loss).report.accuracy;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    log.records.push_back(r);

    const double score = val_set.empty() ? r.train_acc : r.val_acc;
    if (score > best_score) {
      best_score = score;
      log.best_epoch = epoch;
      log.best_val_acc = r.val_acc;
      if (best) best->copy_parameters_from(model);
    }

    driver.advance(epoch, check_convergence(r, thresholds));
  }

  log.stage_epochs = driver.stage_epochs();
  log.stage_converged = driver.stage_converged();
  log.transitions = driver.transitions();
  bool all = true;
  std::size_t total = 0;
  for (const auto& s : log.stage_converged) {
    all = all && s.has_value();
    if (s) total += *s;
  }
  if (all) log.epochs_to_converge = total;
  // leave the model fully trainable for whoever uses it next
  for (auto& p : model.parameters()) p.tensor.set_requires_grad(true);
  return log;
}

RunLog train(const TrainConfig& input) {
  const TrainConfig config = resolved(input);
  validate(config);
  const DatasetManifest manifest = scan_dataset(config.data);
  if (manifest.count(Split::test) == 0) throw DataError("the test split of " + config.data.root + " is empty");
  const Dataset data = Dataset::load(manifest);

  Model model = build_model(config.model, config.seed);
  if (config.paradigm.kind != ParadigmKind::baseline) {
    load_checkpoint(model, config.paradigm.pretrained, config.paradigm.keep_head ? "" : "backbone.");
  }
  const Paradigm paradigm = Paradigm::make(config.paradigm.kind, config.paradigm.stage_cap);
  {
    // resolve the stage patterns against this model before any side effect
    Model probe = model.clone();
    Optimizer probe_opt(config.optim, probe.parameters());
    apply_paradigm(probe, paradigm, probe_opt);
  }

  Model best = model.clone();
  RunLog log = fit(model, data, config, paradigm, &best);
  const Evaluation test = evaluate(model, data.split(Split::test), config.loss);
  log.test_counts = test.counts;
  log.test_report = test.report;
  log.test_report.epochs_to_converge = log.epochs_to_converge;
  log.config_echo = echo_config(config);

  if (!config.output_dir.empty()) {
    const fs::path out(config.output_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
    write_text_file((out / "runlog.csv").string(), format_runlog_csv(log));
    write_text_file((out / "walltime.csv").string(), format_walltime_csv(log));
    write_text_file((out / "report.jsonl").string(), format_report_json(log));
    write_text_file((out / "manifest.txt").string(), format_config(config));
    write_manifest((out / "dataset_manifest.txt").string(), manifest);
    save_checkpoint(model, (out / "final.bct1").string());
    save_checkpoint(best, (out / "best.bct1").string());
  }
  return log;
}

}  // namespace bct

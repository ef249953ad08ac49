#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <thread>

#include "bct/error.hpp"
#include "bct/io.hpp"
#include "bct/trainer.hpp"
#include "json.hpp"

namespace bct {

namespace fs = std::filesystem;

const char* to_string(SuiteKind kind) {
  switch (kind) {
    case SuiteKind::loss: return "loss";
    case SuiteKind::optimizer: return "optimizer";
    case SuiteKind::paradigm: return "paradigm";
  }
  return "?";
}

SuiteKind parse_suite(const std::string& name) {
  if (name == "loss") return SuiteKind::loss;
  if (name == "optimizer") return SuiteKind::optimizer;
  if (name == "paradigm") return SuiteKind::paradigm;
  throw ConfigError("unknown suite '" + name + "' (expected loss, optimizer or paradigm)");
}

std::vector<std::string> suite_arms(SuiteKind kind) {
  switch (kind) {
    case SuiteKind::loss: return {"ce", "bce", "focal_g0", "focal_g1", "focal_g2"};
    case SuiteKind::optimizer: return {"sgd", "adam", "rectadam"};
    case SuiteKind::paradigm: return {"baseline", "tl", "etl"};
  }
  return {};
}

TrainConfig arm_config(SuiteKind kind, const std::string& arm, const TrainConfig& base) {
  TrainConfig c = base;
  switch (kind) {
    case SuiteKind::loss:
      if (arm == "ce") {
        c.loss.kind = LossKind::cross_entropy;
      } else if (arm == "bce") {
        c.loss.kind = LossKind::binary_cross_entropy;
      } else if (arm.rfind("focal_g", 0) == 0 && arm.size() == 8 && arm[7] >= '0' && arm[7] <= '2') {
        c.loss.kind = LossKind::focal;
        c.loss.gamma = arm[7] - '0';
      } else {
        throw ConfigError("unknown loss arm '" + arm + "'");
      }
      break;
    case SuiteKind::optimizer:
      if (arm == "sgd") {
        c.optim.kind = OptimizerKind::sgd;
      } else if (arm == "adam") {
        c.optim.kind = OptimizerKind::adam;
      } else if (arm == "rectadam") {
        c.optim.kind = OptimizerKind::rectadam;
      } else {
        throw ConfigError("unknown optimizer arm '" + arm + "'");
      }
      c.optim.learning_rate.reset();
      break;
    case SuiteKind::paradigm:
      c.model.arch = Architecture::backbone;
      c.paradigm.kind = parse_paradigm(arm);
      break;
  }
  return c;
}

namespace {

// Runs fn(0..n-1) on up to `jobs` threads. The exception of the lowest
// failing task index is rethrown after every worker joined.
void run_parallel(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  if (n % 2) return v[n / 2];
  return (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::string stage_breakdown(const RunLog& log) {
  if (!log.epochs_to_converge) return "-";
  std::string s = std::to_string(*log.epochs_to_converge);
  if (log.stage_converged.size() > 1) {
    s += " (";
    for (std::size_t i = 0; i < log.stage_converged.size(); ++i) {
      if (i) s += " + ";
      s += std::to_string(*log.stage_converged[i]);
    }
    s += ")";
  }
  return s;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

AblationTable run_ablation(SuiteKind kind, const TrainConfig& base, const AblationOptions& options) {
  if (options.seeds < 1) throw ConfigError("ablation needs at least one seed");
  if (kind == SuiteKind::paradigm && options.output_dir.empty()) {
    throw ConfigError("the paradigm suite needs an output directory for its pretrained backbones");
  }
  const fs::path out(options.output_dir);
  const auto arms = suite_arms(kind);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < options.seeds; ++i) seeds.push_back(base.seed + i);

  auto pretrained_path = [&](std::uint64_t seed) {
    return (out / "pretrain" / ("seed_" + std::to_string(seed) + ".bct1")).string();
  };

  // every arm is checked before anything trains
  std::vector<TrainConfig> configs;
  for (const auto& arm : arms) {
    for (std::uint64_t seed : seeds) {
      TrainConfig c = arm_config(kind, arm, base);
      c.seed = seed;
      c.output_dir = options.output_dir.empty() ? "" : (out / arm / ("seed_" + std::to_string(seed))).string();
      if (c.paradigm.kind != ParadigmKind::baseline) c.paradigm.pretrained = pretrained_path(seed);
      validate(resolved(c));
      configs.push_back(std::move(c));
    }
  }
  {
    const DatasetManifest target = scan_dataset(base.data);
    if (target.count(Split::test) == 0) throw DataError("the test split of " + base.data.root + " is empty");
  }

  AblationTable table;
  table.suite = kind;

  if (kind == SuiteKind::paradigm) {
    std::string source = base.paradigm.source_root;
    if (source.empty()) {
      source = (out / "source").string();
      SynthOptions synth;
      synth.family = SynthFamily::source;
      synth.n_per_class = base.paradigm.source_per_class;
      synth.seed = base.data.seed;
      synth.size = base.data.height;
      synth_generate(source, synth);
    } else if (!fs::is_directory(source)) {
      throw DataError("source dataset not found: '" + source + "'");
    }
    fs::create_directories(out / "pretrain");
    table.pretraining.resize(seeds.size());
    const TrainConfig pre = resolved(arm_config(kind, "baseline", base));
    run_parallel(seeds.size(), options.jobs, [&](std::size_t i) {
      TrainConfig c = pre;
      c.seed = seeds[i];
      table.pretraining[i] = {seeds[i], pretrain_source(c.model, source, c, pretrained_path(seeds[i]))};
    });
  }

  std::vector<RunLog> logs(configs.size());
  run_parallel(configs.size(), options.jobs, [&](std::size_t i) { logs[i] = train(configs[i]); });

  for (std::size_t a = 0; a < arms.size(); ++a) {
    AblationRow row;
    row.arm = arms[a];
    std::vector<double> epochs, acc, f1, recall;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const RunLog& log = logs[a * seeds.size() + s];
      row.runs.push_back({seeds[s], log});
      if (log.converged()) ++row.converged_runs;
      epochs.push_back(log.epochs_to_converge ? static_cast<double>(*log.epochs_to_converge)
                                              : std::numeric_limits<double>::infinity());
      acc.push_back(log.test_report.accuracy);
      f1.push_back(log.test_report.f1);
      recall.push_back(log.test_report.recall);
    }
    const double m = median(epochs);
    if (std::isfinite(m)) row.median_epochs = m;
    row.median_accuracy = median(acc);
    row.median_f1 = median(f1);
    row.median_recall = median(recall);
    table.rows.push_back(std::move(row));
  }

  if (!options.output_dir.empty()) {
    fs::create_directories(out);
    const std::string stem = std::string("ablation_") + to_string(kind);
    write_text_file((out / (stem + ".md")).string(), format_table_markdown(table));
    write_text_file((out / (stem + ".csv")).string(), format_table_csv(table));
    write_text_file((out / (stem + ".jsonl")).string(), format_table_jsonl(table));
  }
  return table;
}

std::string format_table_markdown(const AblationTable& table) {
  std::string s = std::string("## ") + to_string(table.suite) + " suite\n\n";
  const std::size_t n = table.rows.empty() ? 0 : table.rows.front().runs.size();
  const std::string pinned = n ? std::to_string(table.rows.front().runs.front().seed) : "-";
  s += "| arm | converged | median epochs | median test acc | median F1 | median recall | epochs (seed " + pinned +
       ") | test acc (seed " + pinned + ") |\n";
  s += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : table.rows) {
    const RunLog& p = r.runs.front().log;
    s += "| " + r.arm + " | " + std::to_string(r.converged_runs) + "/" + std::to_string(r.runs.size()) + " | " +
         (r.median_epochs ? format_g9(*r.median_epochs) : "-") + " | " + fixed4(r.median_accuracy) + " | " +
         fixed4(r.median_f1) + " | " + fixed4(r.median_recall) + " | " + stage_breakdown(p) + " | " +
         fixed4(p.test_report.accuracy) + " |\n";
  }
  if (!table.pretraining.empty()) {
    s += "\nSurrogate pretraining (source family):\n\n| seed | converged | epochs | train acc |\n|---|---|---|---|\n";
    for (const auto& [seed, pr] : table.pretraining) {
      s += "| " + std::to_string(seed) + " | " + (pr.converged ? "yes" : "no") + " | " + std::to_string(pr.epochs) +
           " | " + fixed4(pr.train_accuracy) + " |\n";
    }
  }
  return s;
}

std::string format_table_csv(const AblationTable& table) {
  std::string s =
      "arm,runs,converged_runs,median_epochs,median_test_acc,median_f1,median_recall,pinned_seed,pinned_epochs,"
      "pinned_stage_epochs,pinned_test_acc\n";
  for (const auto& r : table.rows) {
    const auto& p = r.runs.front();
    std::string stages;
    for (std::size_t i = 0; i < p.log.stage_epochs.size(); ++i) {
      if (i) stages += "+";
      stages += std::to_string(p.log.stage_epochs[i]);
    }
    s += r.arm + "," + std::to_string(r.runs.size()) + "," + std::to_string(r.converged_runs) + "," +
         (r.median_epochs ? format_g9(*r.median_epochs) : "") + "," + format_g9(r.median_accuracy) + "," +
         format_g9(r.median_f1) + "," + format_g9(r.median_recall) + "," + std::to_string(p.seed) + "," +
         (p.log.epochs_to_converge ? std::to_string(*p.log.epochs_to_converge) : "") + "," + stages + "," +
         format_g9(p.log.test_report.accuracy) + "\n";
  }
  return s;
}

std::string format_table_jsonl(const AblationTable& table) {
  std::string s;
  for (const auto& r : table.rows) {
    for (const auto& run : r.runs) {
      auto report = nlohmann::ordered_json::parse(format_report_json(run.log));
      nlohmann::ordered_json j;
      j["suite"] = to_string(table.suite);
      j["arm"] = r.arm;
      j["seed"] = run.seed;
      for (auto& [k, v] : report.items()) j[k] = v;
      auto losses = nlohmann::ordered_json::array();
      for (const auto& rec : run.log.records) losses.push_back(rec.train_loss);
      j["train_loss"] = losses;
      s += j.dump() + "\n";
    }
  }
  for (const auto& [seed, pr] : table.pretraining) {
    nlohmann::ordered_json j;
    j["suite"] = to_string(table.suite);
    j["pretrain_seed"] = seed;
    j["converged"] = pr.converged;
    j["epochs"] = pr.epochs;
    j["train_acc"] = pr.train_accuracy;
    s += j.dump() + "\n";
  }
  return s;
}

}  // namespace bct

#include "bct/bct.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "bct/checkpoint.hpp"
#include "bct/config.hpp"
#include "bct/error.hpp"
#include "bct/io.hpp"
#include "bct/plot.hpp"
#include "bct/trainer.hpp"
#include "json.hpp"

struct bct_config {
  bct::TrainConfig value;
};

struct bct_model {
  bct::Model value;
};

struct bct_runlog {
  bct::RunLog value;
};

namespace {

thread_local std::string last_error;

template <typename Fn>
bct_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return BCT_OK;
  } catch (const bct::Error& e) {
    last_error = e.what();
    return static_cast<bct_status>(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown failure";
  }
  return BCT_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (!p) throw bct::ConfigError(std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void fill(const bct::ConfusionCounts& c, const bct::MetricReport& m, bct_metrics* out) {
  out->tp = c.tp;
  out->tn = c.tn;
  out->fp = c.fp;
  out->fn = c.fn;
  out->accuracy = m.accuracy;
  out->precision = m.precision;
  out->recall = m.recall;
  out->f1 = m.f1;
  out->precision_undefined = m.precision_undefined;
  out->recall_undefined = m.recall_undefined;
  out->f1_undefined = m.f1_undefined;
}

bct::TrainConfig checked(const bct_config* cfg) {
  need(cfg, "config");
  bct::TrainConfig c = bct::resolved(cfg->value);
  bct::validate(c);
  return c;
}

std::string inspect_checkpoint(const std::string& path) {
  const auto params = bct::read_checkpoint(path);
  std::string s = "checkpoint " + path + "\n";
  std::size_t total = 0;
  for (const auto& p : params) {
    s += "  " + p.name + " " + bct::shape_str(p.tensor.shape()) + "\n";
    total += p.tensor.size();
  }
  s += std::to_string(params.size()) + " tensors, " + std::to_string(total) + " values\n";
  return s;
}

std::string inspect_dataset(const std::string& root) {
  bct::DataConfig dc;
  dc.root = root;
  const auto m = bct::scan_dataset(dc);
  std::string s = "dataset " + root + " (" + std::to_string(m.entries.size()) + " images, split seed " +
                  std::to_string(m.seed) + ")\n";
  for (auto split : {bct::Split::train, bct::Split::val, bct::Split::test}) {
    s += std::string("  ") + bct::to_string(split) + ": " + std::to_string(m.count(split)) + " (class0 " +
         std::to_string(m.count(split, 0)) + ", class1 " + std::to_string(m.count(split, 1)) + ")\n";
  }
  return s;
}

}  // namespace

extern "C" {

const char* bct_last_error(void) { return last_error.c_str(); }

const char* bct_version(void) { return "0.1.0"; }

void bct_string_free(char* s) { std::free(s); }

bct_status bct_config_new(bct_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new bct_config{};
  });
}

bct_status bct_config_load(const char* path, bct_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::string text;
    try {
      text = bct::read_text_file(path);
    } catch (const bct::DataError&) {
      throw bct::ConfigError(std::string("cannot read config file ") + path);
    }
    auto cfg = std::make_unique<bct_config>();
    bct::apply_entries(cfg->value, bct::parse_config_text(text, path), path);
    *out = cfg.release();
  });
}

bct_status bct_config_set(bct_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    bct::apply_entries(cfg->value, {{key, value, 0}}, "command line");
  });
}

bct_status bct_config_validate(const bct_config* cfg) {
  return guarded([&] { checked(cfg); });
}

bct_status bct_config_dump(const bct_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = dup(bct::format_config(bct::resolved(cfg->value)));
  });
}

bct_status bct_config_suggest(const char* key, char** out) {
  return guarded([&] {
    need(key, "key");
    need(out, "out");
    *out = dup(bct::suggest_key(key));
  });
}

int bct_config_has_key(const char* key) { return key && bct::is_config_key(key) ? 1 : 0; }

void bct_config_free(bct_config* cfg) { delete cfg; }

void bct_synth_options_init(bct_synth_options* opts) {
  if (!opts) return;
  const bct::SynthOptions d;
  opts->family = "target";
  opts->n_per_class = d.n_per_class;
  opts->class1_count = 0;
  opts->seed = d.seed;
  opts->noise_level = d.noise_level;
  opts->size = d.size;
  opts->cell = d.cell;
}

bct_status bct_synth(const char* out_root, const bct_synth_options* opts) {
  return guarded([&] {
    need(out_root, "out_root");
    need(opts, "options");
    bct::SynthOptions o;
    o.family = bct::parse_family(opts->family ? opts->family : "target");
    o.n_per_class = opts->n_per_class;
    if (opts->class1_count) o.class1_count = opts->class1_count;
    o.seed = opts->seed;
    o.noise_level = opts->noise_level;
    o.size = opts->size;
    o.cell = opts->cell;
    bct::synth_generate(out_root, o);
  });
}

bct_status bct_compute_metrics(size_t tp, size_t tn, size_t fp, size_t fn, bct_metrics* out) {
  return guarded([&] {
    need(out, "out");
    const bct::ConfusionCounts c{tp, tn, fp, fn};
    fill(c, bct::compute_metrics(c), out);
  });
}

bct_status bct_model_create(const bct_config* cfg, bct_model** out) {
  return guarded([&] {
    need(out, "out");
    const auto c = checked(cfg);
    *out = new bct_model{bct::build_model(c.model, c.seed)};
  });
}

bct_status bct_model_load(bct_model* model, const char* checkpoint, const char* prefix) {
  return guarded([&] {
    need(model, "model");
    need(checkpoint, "checkpoint");
    bct::load_checkpoint(model->value, checkpoint, prefix ? prefix : "");
  });
}

bct_status bct_model_save(const bct_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    bct::save_checkpoint(model->value, path);
  });
}

size_t bct_model_param_count(const bct_model* model) { return model ? model->value.parameter_count() : 0; }

size_t bct_model_num_classes(const bct_model* model) { return model ? model->value.output_shape().back() : 0; }

bct_status bct_model_forward(const bct_model* model, const float* images, size_t n, float* scores) {
  return guarded([&] {
    need(model, "model");
    need(images, "images");
    need(scores, "scores");
    if (n == 0) throw bct::ConfigError("forward needs at least one sample");
    bct::Shape shape{n};
    const auto& in = model->value.input_shape();
    shape.insert(shape.end(), in.begin(), in.end());
    const std::size_t count = bct::numel(shape);
    bct::NoGradGuard no_grad;
    const bct::Tensor out = model->value.forward(bct::Tensor(shape, std::vector<float>(images, images + count)));
    std::memcpy(scores, out.data().data(), out.size() * sizeof(float));
  });
}

void bct_model_free(bct_model* model) { delete model; }

bct_status bct_train(const bct_config* cfg, bct_runlog** out) {
  return guarded([&] {
    need(out, "out");
    const auto c = checked(cfg);
    *out = new bct_runlog{bct::train(c)};
  });
}

size_t bct_runlog_epochs(const bct_runlog* log) { return log ? log->value.records.size() : 0; }

bct_status bct_runlog_record(const bct_runlog* log, size_t index, bct_epoch_record* out) {
  return guarded([&] {
    need(log, "runlog");
    need(out, "out");
    if (index >= log->value.records.size()) throw bct::ConfigError("epoch record index out of range");
    const auto& r = log->value.records[index];
    *out = {r.epoch, r.stage, r.train_loss, r.train_acc, r.val_acc};
  });
}

int bct_runlog_converged(const bct_runlog* log, size_t* epochs) {
  if (!log || !log->value.epochs_to_converge) return 0;
  if (epochs) *epochs = *log->value.epochs_to_converge;
  return 1;
}

void bct_runlog_test_metrics(const bct_runlog* log, bct_metrics* out) {
  if (!log || !out) return;
  fill(log->value.test_counts, log->value.test_report, out);
}

void bct_runlog_free(bct_runlog* log) { delete log; }

bct_status bct_evaluate(const bct_config* cfg, const char* checkpoint, const char* split, const char* jsonl_path,
                        bct_metrics* out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(split, "split");
    const auto c = checked(cfg);
    const bct::Split which = bct::parse_split(split);
    const auto params = bct::read_checkpoint(checkpoint);
    bct::Model model = bct::build_model(c.model, c.seed);
    bct::load_into(model, params);
    const bct::DatasetManifest manifest = bct::scan_dataset(c.data);
    const bct::Dataset data = bct::Dataset::load(manifest);
    const auto ev = bct::evaluate(model, data.split(which), c.loss);
    if (out) fill(ev.counts, ev.report, out);
    if (jsonl_path) {
      nlohmann::ordered_json j;
      j["checkpoint"] = checkpoint;
      j["split"] = split;
      j["samples"] = ev.counts.total();
      j["tp"] = ev.counts.tp;
      j["tn"] = ev.counts.tn;
      j["fp"] = ev.counts.fp;
      j["fn"] = ev.counts.fn;
      j["accuracy"] = ev.report.accuracy;
      j["precision"] = ev.report.precision;
      j["recall"] = ev.report.recall;
      j["f1"] = ev.report.f1;
      j["precision_undefined"] = ev.report.precision_undefined;
      j["recall_undefined"] = ev.report.recall_undefined;
      j["f1_undefined"] = ev.report.f1_undefined;
      j["loss"] = ev.mean_loss;
      bct::write_text_file(jsonl_path, j.dump() + "\n");
    }
  });
}

bct_status bct_ablate(const bct_config* cfg, const char* suite, size_t seeds, size_t jobs, const char* out_dir,
                      char** markdown) {
  return guarded([&] {
    need(suite, "suite");
    need(cfg, "config");
    const bct::SuiteKind kind = bct::parse_suite(suite);
    bct::AblationOptions opts;
    opts.seeds = seeds;
    opts.jobs = jobs;
    opts.output_dir = out_dir ? out_dir : "";
    const auto table = bct::run_ablation(kind, cfg->value, opts);
    if (markdown) *markdown = dup(bct::format_table_markdown(table));
  });
}

bct_status bct_plot(const char* const* runlogs, size_t count, const char* out_dir) {
  return guarded([&] {
    need(out_dir, "out_dir");
    if (count) need(runlogs, "runlogs");
    std::vector<std::string> paths;
    for (size_t i = 0; i < count; ++i) {
      need(runlogs[i], "runlog path");
      paths.emplace_back(runlogs[i]);
    }
    bct::plot_runlogs(paths, out_dir);
  });
}

bct_status bct_inspect(const char* path, char** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::error_code ec;
    if (std::filesystem::is_directory(path, ec)) {
      *out = dup(inspect_dataset(path));
    } else {
      *out = dup(inspect_checkpoint(path));
    }
  });
}

}  // extern "C"

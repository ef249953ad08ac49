// bct command-line front end. Talks to the toolkit only through bct.h.
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "bct/bct.h"

namespace {

bool use_color() {
  const char* no = std::getenv("NO_COLOR");
  return !(no && *no) && isatty(STDERR_FILENO);
}

int fail(int code, const std::string& msg) {
  const char* kinds[] = {"ok", "internal error", "config error", "data error", "numeric error"};
  const char* kind = code >= 0 && code <= 4 ? kinds[code] : "error";
  if (use_color()) {
    std::fprintf(stderr, "\033[1;31m%s:\033[0m %s\n", kind, msg.c_str());
  } else {
    std::fprintf(stderr, "%s: %s\n", kind, msg.c_str());
  }
  return code;
}

int check(bct_status st) { return st == BCT_OK ? 0 : fail(st, bct_last_error()); }

struct ConfigArgs {
  std::string path;
  std::vector<std::string> extras;
};

// Leftover "--section.key value" / "--section.key=value" pairs become config
// overrides; anything else is an unknown flag.
int build_config(const ConfigArgs& args, bct_config** out) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (std::size_t i = 0; i < args.extras.size(); ++i) {
    std::string flag = args.extras[i];
    if (flag.rfind("--", 0) != 0) return fail(BCT_ERR_CONFIG, "unexpected argument '" + flag + "'");
    flag = flag.substr(2);
    std::string value;
    const auto eq = flag.find('=');
    if (eq != std::string::npos) {
      value = flag.substr(eq + 1);
      flag.resize(eq);
    } else if (i + 1 < args.extras.size()) {
      value = args.extras[++i];
    } else {
      return fail(BCT_ERR_CONFIG, "option --" + flag + " needs a value");
    }
    if (!bct_config_has_key(flag.c_str())) {
      char* near = nullptr;
      std::string hint;
      if (bct_config_suggest(flag.c_str(), &near) == BCT_OK) {
        hint = " (did you mean --" + std::string(near) + "?)";
        bct_string_free(near);
      }
      return fail(BCT_ERR_CONFIG, "unknown option --" + flag + hint);
    }
    overrides.emplace_back(flag, value);
  }
  bct_config* cfg = nullptr;
  bct_status st = args.path.empty() ? bct_config_new(&cfg) : bct_config_load(args.path.c_str(), &cfg);
  if (st != BCT_OK) return check(st);
  for (const auto& [k, v] : overrides) {
    if ((st = bct_config_set(cfg, k.c_str(), v.c_str())) != BCT_OK) {
      bct_config_free(cfg);
      return check(st);
    }
  }
  if ((st = bct_config_validate(cfg)) != BCT_OK) {
    bct_config_free(cfg);
    return check(st);
  }
  *out = cfg;
  return 0;
}

void print_metrics(const bct_metrics& m) {
  std::printf("tp=%zu tn=%zu fp=%zu fn=%zu\n", m.tp, m.tn, m.fp, m.fn);
  std::printf("accuracy=%.6f precision=%.6f%s recall=%.6f%s f1=%.6f%s\n", m.accuracy, m.precision,
              m.precision_undefined ? " (undefined)" : "", m.recall, m.recall_undefined ? " (undefined)" : "", m.f1,
              m.f1_undefined ? " (undefined)" : "");
}

int cmd_train(const ConfigArgs& args) {
  bct_config* cfg = nullptr;
  if (int rc = build_config(args, &cfg)) return rc;
  bct_runlog* log = nullptr;
  const bct_status st = bct_train(cfg, &log);
  bct_config_free(cfg);
  if (st != BCT_OK) return check(st);
  const std::size_t n = bct_runlog_epochs(log);
  bct_epoch_record last{};
  if (n) bct_runlog_record(log, n - 1, &last);
  std::size_t epochs = 0;
  if (bct_runlog_converged(log, &epochs)) {
    std::printf("converged after %zu epochs\n", epochs);
  } else {
    std::printf("did not converge in %zu epochs (train acc %.4f, loss %.6g)\n", n, last.train_acc, last.train_loss);
  }
  bct_metrics m{};
  bct_runlog_test_metrics(log, &m);
  print_metrics(m);
  bct_runlog_free(log);
  return 0;
}

int cmd_evaluate(const ConfigArgs& args, const std::string& checkpoint, const std::string& split,
                 const std::string& out) {
  bct_config* cfg = nullptr;
  if (int rc = build_config(args, &cfg)) return rc;
  bct_metrics m{};
  const bct_status st = bct_evaluate(cfg, checkpoint.c_str(), split.c_str(), out.empty() ? nullptr : out.c_str(), &m);
  bct_config_free(cfg);
  if (st != BCT_OK) return check(st);
  print_metrics(m);
  return 0;
}

int cmd_ablate(const ConfigArgs& args, const std::string& suite, std::size_t seeds, std::size_t jobs,
               const std::string& out) {
  bct_config* cfg = nullptr;
  if (int rc = build_config(args, &cfg)) return rc;
  char* md = nullptr;
  const bct_status st = bct_ablate(cfg, suite.c_str(), seeds, jobs, out.c_str(), &md);
  bct_config_free(cfg);
  if (st != BCT_OK) return check(st);
  std::fputs(md, stdout);
  bct_string_free(md);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bct: desk-scale CNN training with focal loss, RectAdam and staged transfer learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", bct_version());

  bct_synth_options synth;
  bct_synth_options_init(&synth);
  std::string synth_out, family = "target";
  auto* s = app.add_subcommand("synth", "generate a synthetic two-class PPM dataset");
  s->add_option("--out,-o", synth_out, "output root")->required();
  s->add_option("--family", family, "target or source")->check(CLI::IsMember({"target", "source"}));
  s->add_option("--per-class", synth.n_per_class, "images per class");
  s->add_option("--class1", synth.class1_count, "class-1 images (imbalanced sets)");
  s->add_option("--seed", synth.seed, "generator seed");
  s->add_option("--noise", synth.noise_level, "uniform noise amplitude");
  s->add_option("--size", synth.size, "image side in pixels");
  s->add_option("--cell", synth.cell, "pattern cell size");

  ConfigArgs train_args;
  auto* t = app.add_subcommand("train", "train one model; extra --section.key value pairs override the config");
  t->add_option("--config,-c", train_args.path, "key = value config file");
  t->allow_extras();

  ConfigArgs eval_args;
  std::string checkpoint, split = "test", eval_out;
  auto* e = app.add_subcommand("evaluate", "score a checkpoint on one split");
  e->add_option("--config,-c", eval_args.path, "config describing model and dataset");
  e->add_option("--checkpoint", checkpoint, "BCT1 checkpoint")->required();
  e->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  e->add_option("--out,-o", eval_out, "JSON-lines report path");
  e->allow_extras();

  ConfigArgs ablate_args;
  std::string suite, ablate_out;
  std::size_t seeds = 5, jobs = 1;
  auto* a = app.add_subcommand("ablate", "run one ablation suite over several seeds");
  a->add_option("--config,-c", ablate_args.path, "base config");
  a->add_option("--suite", suite, "loss, optimizer or paradigm")
      ->required()
      ->check(CLI::IsMember({"loss", "optimizer", "paradigm"}));
  a->add_option("--seeds", seeds, "number of run seeds");
  a->add_option("--jobs,-j", jobs, "concurrent runs");
  a->add_option("--out,-o", ablate_out, "output directory")->required();
  a->allow_extras();

  std::vector<std::string> runlogs;
  std::string plot_out = ".";
  auto* p = app.add_subcommand("plot", "accuracy and loss curves from runlog CSVs");
  p->add_option("runlogs", runlogs, "runlog.csv files")->required();
  p->add_option("--out,-o", plot_out, "output directory");

  std::string inspect_path;
  auto* i = app.add_subcommand("inspect", "describe a checkpoint or dataset directory");
  i->add_option("path", inspect_path, "checkpoint file or dataset root")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) return app.exit(err);
    return fail(BCT_ERR_CONFIG, err.what());
  }

  if (*s) {
    synth.family = family.c_str();
    return check(bct_synth(synth_out.c_str(), &synth));
  }
  if (*t) {
    train_args.extras = t->remaining();
    return cmd_train(train_args);
  }
  if (*e) {
    eval_args.extras = e->remaining();
    return cmd_evaluate(eval_args, checkpoint, split, eval_out);
  }
  if (*a) {
    ablate_args.extras = a->remaining();
    return cmd_ablate(ablate_args, suite, seeds, jobs, ablate_out);
  }
  if (*p) {
    std::vector<const char*> paths;
    for (const auto& r : runlogs) paths.push_back(r.c_str());
    return check(bct_plot(paths.data(), paths.size(), plot_out.c_str()));
  }
  if (*i) {
    char* text = nullptr;
    if (int rc = check(bct_inspect(inspect_path.c_str(), &text))) return rc;
    std::fputs(text, stdout);
    bct_string_free(text);
    return 0;
  }
  return 0;
}

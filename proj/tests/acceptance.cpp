// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bct/checkpoint.hpp"
#include "bct/io.hpp"
#include "bct/plot.hpp"
#include "bct/trainer.hpp"
#include "support.hpp"

using namespace bct;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPinnedSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const fs::path& work() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "bct_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// 64x64 target set, 100 images per class (or `class1` for the minority), noise 0.1
std::string target_data(const std::string& name, std::optional<std::size_t> class1 = std::nullopt) {
  const auto root = (work() / name).string();
  if (!fs::exists(root)) {
    SynthOptions o;
    o.n_per_class = 100;
    o.class1_count = class1;
    o.seed = kPinnedSeed;
    o.noise_level = 0.1;
    o.size = 64;
    synth_generate(root, o);
  }
  return root;
}

std::string tiny_data() {
  const auto root = (work() / "tiny").string();
  if (!fs::exists(root)) {
    SynthOptions o;
    o.n_per_class = 8;
    o.size = 16;
    synth_generate(root, o);
  }
  return root;
}

TrainConfig base_config(const std::string& root) {
  TrainConfig c;
  c.data.root = root;
  c.seed = kPinnedSeed;
  return c;
}

std::string median_text(const AblationRow& row) {
  return row.median_epochs ? fmt("%g", *row.median_epochs) : std::string("n/a");
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  bct::testing::GradCheck all;
  std::string failed;
  for (const auto& name : bct::testing::grad_suite_names()) {
    const auto r = bct::testing::grad_suite(name, 25, 0xacce97);
    if (!r.ok()) failed += " " + name;
    all.merge(r);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = failed.empty() && secs < 60.0;
  o.detail = std::to_string(bct::testing::grad_suite_names().size()) + " ops x 25 shapes, " +
             std::to_string(all.checked) + " partials, worst abs " + fmt("%.2e", all.worst_abs) +
             ", worst rel above the floor " + fmt("%.2e", all.worst_rel) + ", " +
             fmt("%.1f", secs) + " s" + (failed.empty() ? "" : ", failing:" + failed);
  return o;
}

Outcome focal_reduces_to_bce() {
  SplitMix64 rng(0xf0ca1);
  double worst = 0.0;
  for (int b = 0; b < 1000; ++b) {
    const std::size_t n = 1 + rng.below(16);
    const auto scores = softmax(bct::testing::random64({n, 2}, rng, -6.0, 6.0));
    const auto labels = bct::testing::random_labels(n, 2, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor64 s({1, 2}, {scores.data()[2 * i], scores.data()[2 * i + 1]});
      const auto t = bct::testing::one_hot<double>({labels[i]}, 2);
      worst = std::max(worst, std::abs(focal_loss(s, t, 0.0).item() - binary_cross_entropy(s, t).item()));
    }
  }
  const auto root = target_data("target");
  TrainConfig base = base_config(root);
  const RunLog bce = train(arm_config(SuiteKind::loss, "bce", base));
  const RunLog g0 = train(arm_config(SuiteKind::loss, "focal_g0", base));
  bool same = bce.records.size() == g0.records.size();
  for (std::size_t i = 0; same && i < bce.records.size(); ++i) {
    same = bce.records[i].train_loss == g0.records[i].train_loss;
  }
  Outcome o;
  o.pass = worst <= 1e-6 && same;
  o.detail = "1000 batches, max elementwise gap " + fmt("%.1e", worst) + "; end-to-end loss columns " +
             (same ? "identical" : "differ") + " over " + std::to_string(bce.records.size()) + " epochs";
  return o;
}

Outcome optimizer_oracles() {
  struct Scalar {
    double theta = 0.0, m = 0.0, v = 0.0;
    std::size_t t = 0;
    void step(OptimizerKind kind, double lr, double g, double momentum = 0.9) {
      OptimizerConfig c;
      c.kind = kind;
      c.learning_rate = lr;
      c.momentum = momentum;
      std::span<double> th(&theta, 1), ms(&m, 1), vs(&v, 1);
      std::span<const double> gs(&g, 1);
      ++t;
      switch (kind) {
        case OptimizerKind::sgd: sgd_update<double>(th, gs, ms, c); break;
        case OptimizerKind::adam: adam_update<double>(th, gs, ms, vs, t, c); break;
        case OptimizerKind::rectadam: rectadam_update<double>(th, gs, ms, vs, t, c); break;
      }
    }
  };
  std::vector<std::string> bad;
  auto expect = [&](const std::string& what, double got, double want) {
    if (!(std::abs(got - want) <= 1e-9)) bad.push_back(what + "=" + fmt("%.12g", got));
  };
  Scalar sgd;
  sgd.step(OptimizerKind::sgd, 0.1, 1.0);
  sgd.step(OptimizerKind::sgd, 0.1, 1.0);
  expect("sgd two-step", sgd.theta, -0.29);
  Scalar adam;
  adam.step(OptimizerKind::adam, 0.1, 1.0);
  expect("adam first step", adam.theta, -0.1 / (1.0 + 1e-8));
  Scalar radam;
  radam.step(OptimizerKind::rectadam, 0.1, 1.0);
  expect("rectadam t=1", radam.theta, -0.1);
  const bool boundary = rectadam_rho(4, 0.999) <= 4.0 && rectadam_rho(5, 0.999) > 4.0 &&
                        !rectadam_rectifier(4, 0.999) && rectadam_rectifier(5, 0.999);
  if (!boundary) bad.push_back("branch boundary");
  const double r10 = *rectadam_rectifier(10, 0.999), r100 = *rectadam_rectifier(100, 0.999),
               r1000 = *rectadam_rectifier(1000, 0.999);
  if (!(r10 < r100 && r100 < r1000 && r1000 < 1.0)) bad.push_back("rectifier not increasing");
  Outcome o;
  o.pass = bad.empty();
  o.detail = "sgd " + fmt("%.12g", sgd.theta) + ", adam " + fmt("%.12g", adam.theta) + ", rectadam t=1 " +
             fmt("%.12g", radam.theta) + ", rho4 " + fmt("%.4f", rectadam_rho(4, 0.999)) + " rho5 " +
             fmt("%.4f", rectadam_rho(5, 0.999)) + ", r10/r100/r1000 " + fmt("%.4f", r10) + "/" +
             fmt("%.4f", r100) + "/" + fmt("%.4f", r1000);
  for (const auto& b : bad) o.detail += "; bad " + b;
  return o;
}

std::vector<std::uint8_t> snapshot(const Model& m, const std::set<std::string>& names) {
  std::vector<NamedParam> out;
  for (const auto& p : m.parameters())
    if (names.count(p.name)) out.push_back({p.name, p.tensor.detach()});
  return encode_checkpoint(out);
}

Outcome freeze_contract() {
  DataConfig dc;
  dc.root = tiny_data();
  dc.height = dc.width = 16;
  const Dataset data = Dataset::load(scan_dataset(dc));
  ModelConfig mc;
  mc.arch = Architecture::backbone;
  mc.height = mc.width = 16;
  const LossSpec loss;
  std::size_t checks = 0;
  std::vector<std::string> bad;
  for (auto kind : {ParadigmKind::baseline, ParadigmKind::tl, ParadigmKind::etl}) {
    for (auto okind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::rectadam}) {
      Model model = build_backbone(mc, 3);
      OptimizerConfig oc;
      oc.kind = okind;
      Optimizer opt(oc, model.parameters());
      // etl spends two epochs in the head stage and one in the backbone stage
      auto driver = apply_paradigm(model, Paradigm::make(kind, kind == ParadigmKind::etl ? 2 : 3), opt);
      for (std::size_t epoch = 1; epoch <= 3 && !driver.finished(); ++epoch) {
        std::set<std::string> frozen;
        for (const auto& p : model.parameters())
          if (!driver.trainable().count(p.name)) frozen.insert(p.name);
        const auto before = snapshot(model, frozen);
        for (const auto& batch : make_batches(data.split(Split::train), 4, epoch_seed(1, epoch))) {
          compute_loss(loss, model.forward(batch.images), batch.targets).backward();
          opt.step(model.parameters());
          model.zero_grad();
          ++checks;
          if (snapshot(model, frozen) != before) {
            bad.push_back(std::string(to_string(kind)) + "/" + to_string(okind) + " epoch " + std::to_string(epoch));
          }
        }
        driver.advance(epoch, false);
      }
    }
  }
  // the trainer's own loop: tl keeps the whole backbone bit-identical
  TrainConfig tc = base_config(tiny_data());
  tc.data.height = tc.data.width = 16;
  tc.max_epochs = 3;
  tc.model = mc;
  Model model = build_backbone(mc, 5);
  std::set<std::string> backbone;
  for (const auto& p : model.parameters())
    if (p.name.starts_with("backbone.")) backbone.insert(p.name);
  const auto before = snapshot(model, backbone);
  const RunLog log = fit(model, data, tc, Paradigm::make(ParadigmKind::tl, 3));
  ++checks;
  if (snapshot(model, backbone) != before) bad.push_back("fit tl");
  Outcome o;
  o.pass = bad.empty();
  o.detail = "3 paradigms x 3 optimizers, " + std::to_string(checks) + " post-step comparisons, plus a " +
             std::to_string(log.records.size()) + "-epoch tl fit";
  for (const auto& b : bad) o.detail += "; changed: " + b;
  return o;
}

Outcome metrics_oracle() {
  std::size_t cases = 0, mismatches = 0;
  for (std::size_t len = 1; len <= 6; ++len) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < len; ++i) combos *= 4;
    for (std::size_t code = 0; code < combos; ++code) {
      std::size_t tp = 0, tn = 0, fp = 0, fn = 0, c = code;
      ConfusionCounts counts;
      for (std::size_t i = 0; i < len; ++i, c /= 4) {
        const int pred = static_cast<int>(c % 2), truth = static_cast<int>((c / 2) % 2);
        counts = accumulate(counts, pred, truth);
        tp += pred == 1 && truth == 1;
        tn += pred == 0 && truth == 0;
        fp += pred == 1 && truth == 0;
        fn += pred == 0 && truth == 1;
      }
      MetricReport want;
      want.accuracy = static_cast<double>(tp + tn) / static_cast<double>(len);
      want.recall_undefined = tp + fn == 0;
      want.precision_undefined = tp + fp == 0;
      want.recall = want.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
      want.precision = want.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
      want.f1_undefined = want.recall + want.precision == 0.0;
      want.f1 = want.f1_undefined ? 0.0 : 2.0 * want.precision * want.recall / (want.precision + want.recall);
      mismatches += !(compute_metrics(counts) == want);
      ++cases;
    }
  }
  Outcome o;
  o.pass = mismatches == 0 && cases == 5460;
  o.detail = std::to_string(cases) + " sequences of length 1..6, " + std::to_string(mismatches) + " mismatches";
  return o;
}

Outcome desk_convergence() {
  const auto root = target_data("target");
  TrainConfig c = base_config(root);
  c.model.arch = Architecture::fig1;
  c.loss = {LossKind::focal, 2.0, Reduction::mean};
  c.optim.kind = OptimizerKind::adam;
  c.max_epochs = 200;
  c.output_dir = (work() / "desk").string();
  const auto t0 = std::chrono::steady_clock::now();
  const RunLog log = train(c);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = log.test_report.accuracy >= 0.95 && log.records.size() <= 200 && secs <= 600.0;
  o.detail = "fig1, adam, focal g2: test acc " + fmt("%.4f", log.test_report.accuracy) + " after " +
             std::to_string(log.records.size()) + " epochs (" +
             (log.converged() ? "converged at " + std::to_string(*log.epochs_to_converge) : "not converged") +
             "), " + fmt("%.1f", secs) + " s";
  return o;
}

Outcome paradigm_analog() {
  const auto root = target_data("target");
  AblationOptions opts;
  opts.seeds = 5;
  opts.output_dir = (work() / "paradigm").string();
  const auto table = run_ablation(SuiteKind::paradigm, base_config(root), opts);
  const auto& baseline = table.rows[0].runs[0].log;
  const auto& tl = table.rows[1].runs[0].log;
  const auto& etl = table.rows[2].runs[0].log;
  const bool faster = tl.converged() && baseline.converged() && *tl.epochs_to_converge < *baseline.epochs_to_converge;
  const bool accuracy = etl.test_report.accuracy >= tl.test_report.accuracy;
  bool rise = false;
  std::string rise_text = "no transition";
  if (!etl.transitions.empty()) {
    const std::size_t e = etl.transitions[0].epoch;
    if (e >= 1 && e < etl.records.size()) {
      const double before = etl.records[e - 1].train_loss, after = etl.records[e].train_loss;
      rise = after >= before;
      rise_text = "loss " + fmt("%.6g", before) + " -> " + fmt("%.6g", after) + " across epoch " +
                  std::to_string(e) + "/" + std::to_string(e + 1);
    } else {
      rise_text = "no epoch after the transition";
    }
  }
  // reported, not asserted: how many seeds show the rise
  std::size_t rises = 0;
  for (const auto& run : table.rows[2].runs) {
    if (run.log.transitions.empty()) continue;
    const std::size_t e = run.log.transitions[0].epoch;
    if (e < run.log.records.size() && run.log.records[e].train_loss >= run.log.records[e - 1].train_loss) ++rises;
  }
  Outcome o;
  o.pass = faster && accuracy && rise;
  auto epochs = [](const RunLog& l) {
    return l.converged() ? std::to_string(*l.epochs_to_converge) : std::string("n/a");
  };
  o.detail = "seed 1: epochs tl " + epochs(tl) + " vs baseline " + epochs(baseline) + "; test acc etl " +
             fmt("%.4f", etl.test_report.accuracy) + " vs tl " + fmt("%.4f", tl.test_report.accuracy) + "; etl " +
             rise_text + ". medians over 5 seeds: epochs baseline " + median_text(table.rows[0]) + ", tl " +
             median_text(table.rows[1]) + ", etl " + median_text(table.rows[2]) + "; test acc " +
             fmt("%.4f", table.rows[0].median_accuracy) + "/" + fmt("%.4f", table.rows[1].median_accuracy) + "/" +
             fmt("%.4f", table.rows[2].median_accuracy) + "; transition rise in " + std::to_string(rises) + "/5";
  return o;
}

bool same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& names, std::string& diff) {
  bool ok = true;
  for (const auto& n : names) {
    if (!fs::exists(a / n) || bct::testing::read_bytes(a / n) != bct::testing::read_bytes(b / n)) {
      diff += " " + n;
      ok = false;
    }
  }
  return ok;
}

Outcome determinism() {
  std::string diff;
  bool ok = true;
  std::size_t compared = 0;
  const std::vector<std::string> run_files = {"runlog.csv", "report.jsonl", "dataset_manifest.txt", "final.bct1",
                                              "best.bct1"};
  // full-size training run
  TrainConfig c = base_config(target_data("target"));
  c.max_epochs = 5;
  for (const char* d : {"det_a", "det_b"}) {
    c.output_dir = (work() / d).string();
    train(c);
  }
  ok = same_files(work() / "det_a", work() / "det_b", run_files, diff) && ok;
  compared += run_files.size();
  // synthetic generation
  SynthOptions so;
  so.n_per_class = 6;
  so.size = 16;
  so.seed = 3;
  synth_generate((work() / "syn_a").string(), so);
  synth_generate((work() / "syn_b").string(), so);
  for (const auto& e : fs::recursive_directory_iterator(work() / "syn_a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), work() / "syn_a");
    ok = same_files(work() / "syn_a", work() / "syn_b", {rel.string()}, diff) && ok;
    ++compared;
  }
  // ablation tables, sequential against concurrent
  TrainConfig small = base_config(tiny_data());
  small.data.height = small.data.width = 16;
  small.max_epochs = 3;
  AblationOptions ao;
  ao.seeds = 2;
  for (std::size_t jobs : {1, 2}) {
    ao.jobs = jobs;
    ao.output_dir = (work() / ("abl_j" + std::to_string(jobs))).string();
    run_ablation(SuiteKind::optimizer, small, ao);
  }
  const std::vector<std::string> tables = {"ablation_optimizer.md", "ablation_optimizer.csv",
                                           "ablation_optimizer.jsonl", "adam/seed_2/runlog.csv",
                                           "rectadam/seed_1/final.bct1"};
  ok = same_files(work() / "abl_j1", work() / "abl_j2", tables, diff) && ok;
  compared += tables.size();
  // charts
  const std::vector<std::string> logs = {(work() / "abl_j1" / "sgd" / "seed_1" / "runlog.csv").string(),
                                         (work() / "abl_j1" / "adam" / "seed_1" / "runlog.csv").string()};
  plot_runlogs(logs, (work() / "plot_a").string());
  plot_runlogs(logs, (work() / "plot_b").string());
  ok = same_files(work() / "plot_a", work() / "plot_b", {"accuracy.svg", "loss.svg"}, diff) && ok;
  compared += 2;
  // checkpoint round trip
  const auto params = read_checkpoint((work() / "det_a" / "final.bct1").string());
  const bool round_trip = encode_checkpoint(params) == bct::testing::read_bytes(work() / "det_a" / "final.bct1");
  ModelConfig mc;
  Model m = build_fig1_cnn(mc, 77);
  load_into(m, params);
  save_checkpoint(m, (work() / "resaved.bct1").string());
  const bool resave =
      bct::testing::read_bytes(work() / "resaved.bct1") == bct::testing::read_bytes(work() / "det_a" / "final.bct1");
  if (!round_trip || !resave) diff += " checkpoint-round-trip";
  Outcome o;
  o.pass = ok && round_trip && resave;
  o.detail = std::to_string(compared) + " artifacts byte-identical across reruns (runs, synth tree, tables at jobs 1 " +
             "and 2, SVGs), checkpoint round trip " + (round_trip && resave ? "bitwise exact" : "differs");
  if (!diff.empty()) o.detail += "; differing:" + diff;
  return o;
}

Outcome imbalance() {
  // 100 against 11 images: a ~90/10 split
  const auto root = target_data("imbalanced", 11);
  const auto manifest = scan_dataset(base_config(root).data);
  std::vector<double> bce_recall, focal_recall;
  for (std::uint64_t s = kPinnedSeed; s < kPinnedSeed + 5; ++s) {
    TrainConfig c = base_config(root);
    c.seed = s;
    bce_recall.push_back(train(arm_config(SuiteKind::loss, "bce", c)).test_report.recall);
    focal_recall.push_back(train(arm_config(SuiteKind::loss, "focal_g2", c)).test_report.recall);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  std::size_t focal_ge = 0;
  for (std::size_t i = 0; i < bce_recall.size(); ++i) focal_ge += focal_recall[i] >= bce_recall[i];
  Outcome o;
  o.pass = focal_recall[0] >= bce_recall[0];
  o.detail = "class0 " + std::to_string(manifest.count(Split::train, 0) + manifest.count(Split::val, 0) +
                                        manifest.count(Split::test, 0)) +
             " / class1 " +
             std::to_string(manifest.count(Split::train, 1) + manifest.count(Split::val, 1) +
                            manifest.count(Split::test, 1)) +
             ", test minority " + std::to_string(manifest.count(Split::test, 1)) + "; seed 1 minority recall focal g2 " +
             fmt("%.4f", focal_recall[0]) + " vs bce " + fmt("%.4f", bce_recall[0]) +
             "; medians over 5 seeds " + fmt("%.4f", median(focal_recall)) + " vs " + fmt("%.4f", median(bce_recall)) +
             ", focal >= bce in " + std::to_string(focal_ge) + "/5";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-correctness", gradient_correctness},
      {"focal-gamma0-equals-bce", focal_reduces_to_bce},
      {"optimizer-oracles", optimizer_oracles},
      {"freeze-contract", freeze_contract},
      {"metrics-oracle", metrics_oracle},
      {"desk-convergence", desk_convergence},
      {"paradigm-analog", paradigm_analog},
      {"determinism", determinism},
      {"imbalanced-recall", imbalance},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}

#include "bct/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "bct/error.hpp"
#include "bct/io.hpp"

namespace bct {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(const std::string& origin, std::size_t line) {
  return line ? origin + ":" + std::to_string(line) : std::string("command line");
}

// shortest of %.15g / %.16g / %.17g that reads back to the same double
std::string g17(double v) {
  char buf[40];
  for (int digits = 15; digits < 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Ctx {
  const ConfigEntry& entry;
  const std::string& origin;

  [[noreturn]] void type_error(const char* expected) const {
    throw ConfigError(where(origin, entry.line) + ": " + entry.key + " expects " + expected + ", got '" +
                      entry.value + "'");
  }

  std::uint64_t u64() const {
    const std::string& v = entry.value;
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) type_error("an unsigned integer");
    errno = 0;
    const unsigned long long x = std::strtoull(v.c_str(), nullptr, 10);
    if (errno == ERANGE) type_error("an unsigned 64-bit integer");
    return x;
  }

  std::size_t size() const { return static_cast<std::size_t>(u64()); }

  double real() const {
    const std::string& v = entry.value;
    char* end = nullptr;
    errno = 0;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || errno == ERANGE) type_error("a number");
    return x;
  }

  template <typename Fn>
  auto choice(Fn&& parse, const char* expected) const {
    try {
      return parse(entry.value);
    } catch (const ConfigError&) {
      type_error(expected);
    }
  }
};

struct KeyDef {
  std::string key;
  std::function<void(TrainConfig&, const Ctx&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

LossKind parse_loss_kind(const std::string& s) {
  if (s == "ce" || s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "bce" || s == "binary_cross_entropy") return LossKind::binary_cross_entropy;
  if (s == "focal") return LossKind::focal;
  throw ConfigError(s);
}

Reduction parse_reduction(const std::string& s) {
  if (s == "mean") return Reduction::mean;
  if (s == "sum") return Reduction::sum;
  throw ConfigError(s);
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "rectadam" || s == "radam") return OptimizerKind::rectadam;
  throw ConfigError(s);
}

Architecture parse_arch(const std::string& s) {
  if (s == "fig1") return Architecture::fig1;
  if (s == "backbone") return Architecture::backbone;
  throw ConfigError(s);
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) throw ConfigError(s);
    out.push_back(std::stoul(item));
  }
  if (out.empty()) throw ConfigError(s);
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(s);
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

#define SIZE_KEY(name, field)                                                   \
  KeyDef {                                                                      \
    name, [](TrainConfig& c, const Ctx& x) { c.field = x.size(); },             \
        [](const TrainConfig& c) { return std::to_string(c.field); }            \
  }
#define REAL_KEY(name, field)                                                   \
  KeyDef {                                                                      \
    name, [](TrainConfig& c, const Ctx& x) { c.field = x.real(); },             \
        [](const TrainConfig& c) { return g17(c.field); }                       \
  }
#define TEXT_KEY(name, field)                                                   \
  KeyDef {                                                                      \
    name, [](TrainConfig& c, const Ctx& x) { c.field = x.entry.value; },        \
        [](const TrainConfig& c) { return c.field; }                            \
  }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      TEXT_KEY("data.root", data.root),
      {"data.seed", [](TrainConfig& c, const Ctx& x) { c.data.seed = x.u64(); },
       [](const TrainConfig& c) { return std::to_string(c.data.seed); }},
      SIZE_KEY("data.height", data.height),
      SIZE_KEY("data.width", data.width),
      REAL_KEY("data.train_ratio", data.ratios.train),
      REAL_KEY("data.val_ratio", data.ratios.val),
      REAL_KEY("data.test_ratio", data.ratios.test),
      {"model.arch", [](TrainConfig& c, const Ctx& x) { c.model.arch = x.choice(parse_arch, "fig1 or backbone"); },
       [](const TrainConfig& c) { return std::string(to_string(c.model.arch)); }},
      {"model.channels",
       [](TrainConfig& c, const Ctx& x) { c.model.channels = x.choice(parse_list, "a comma-separated list"); },
       [](const TrainConfig& c) { return join(resolved_channels(c.model)); }},
      SIZE_KEY("model.dense_width", model.dense_width),
      SIZE_KEY("model.kernel", model.kernel),
      SIZE_KEY("model.stride", model.conv_stride),
      SIZE_KEY("model.padding", model.padding),
      SIZE_KEY("model.pool_window", model.pool_window),
      SIZE_KEY("model.pool_stride", model.pool_stride),
      SIZE_KEY("model.convs_per_block", model.convs_per_block),
      {"loss.kind",
       [](TrainConfig& c, const Ctx& x) { c.loss.kind = x.choice(parse_loss_kind, "ce, bce or focal"); },
       [](const TrainConfig& c) {
         switch (c.loss.kind) {
           case LossKind::cross_entropy: return std::string("ce");
           case LossKind::binary_cross_entropy: return std::string("bce");
           case LossKind::focal: break;
         }
         return std::string("focal");
       }},
      REAL_KEY("loss.gamma", loss.gamma),
      {"loss.reduction",
       [](TrainConfig& c, const Ctx& x) { c.loss.reduction = x.choice(parse_reduction, "mean or sum"); },
       [](const TrainConfig& c) { return std::string(to_string(c.loss.reduction)); }},
      {"optim.kind",
       [](TrainConfig& c, const Ctx& x) { c.optim.kind = x.choice(parse_optimizer, "sgd, adam or rectadam"); },
       [](const TrainConfig& c) { return std::string(to_string(c.optim.kind)); }},
      {"optim.lr", [](TrainConfig& c, const Ctx& x) { c.optim.learning_rate = x.real(); },
       [](const TrainConfig& c) { return g17(c.optim.lr()); }},
      REAL_KEY("optim.momentum", optim.momentum),
      REAL_KEY("optim.beta1", optim.beta1),
      REAL_KEY("optim.beta2", optim.beta2),
      REAL_KEY("optim.epsilon", optim.epsilon),
      SIZE_KEY("train.batch_size", batch_size),
      SIZE_KEY("train.max_epochs", max_epochs),
      REAL_KEY("train.acc_threshold", acc_threshold),
      REAL_KEY("train.loss_threshold", loss_threshold),
      {"train.seed", [](TrainConfig& c, const Ctx& x) { c.seed = x.u64(); },
       [](const TrainConfig& c) { return std::to_string(c.seed); }},
      TEXT_KEY("train.output_dir", output_dir),
      {"paradigm.kind",
       [](TrainConfig& c, const Ctx& x) { c.paradigm.kind = x.choice(parse_paradigm, "baseline, tl or etl"); },
       [](const TrainConfig& c) { return std::string(to_string(c.paradigm.kind)); }},
      TEXT_KEY("paradigm.pretrained", paradigm.pretrained),
      {"paradigm.keep_head",
       [](TrainConfig& c, const Ctx& x) { c.paradigm.keep_head = x.choice(parse_bool, "true or false"); },
       [](const TrainConfig& c) { return std::string(c.paradigm.keep_head ? "true" : "false"); }},
      SIZE_KEY("paradigm.stage_cap", paradigm.stage_cap),
      TEXT_KEY("paradigm.source_root", paradigm.source_root),
      SIZE_KEY("paradigm.source_per_class", paradigm.source_per_class),
  };
  return defs;
}

#undef SIZE_KEY
#undef REAL_KEY
#undef TEXT_KEY

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& d : key_defs()) k.push_back(d.key);
    return k;
  }();
  return keys;
}

bool is_config_key(const std::string& key) {
  const auto& keys = config_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

std::string suggest_key(const std::string& key) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& k : config_keys()) {
    const std::size_t d = edit_distance(key, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& origin) {
  std::vector<ConfigEntry> entries;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    // '#' opens a comment at line start or after whitespace
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    ConfigEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    if (e.key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": missing key before '='");
    if (e.key.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_.") != std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": invalid key '" + e.key + "'");
    }
    if (e.value.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": missing value for '" + e.key + "'");
    }
    const auto [it, fresh] = seen.emplace(e.key, lineno);
    if (!fresh) {
      throw ConfigError(origin + ": duplicate key '" + e.key + "' on lines " + std::to_string(it->second) + " and " +
                        std::to_string(lineno));
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void apply_entries(TrainConfig& config, const std::vector<ConfigEntry>& entries, const std::string& origin) {
  for (const auto& e : entries) {
    const auto& defs = key_defs();
    const auto it = std::find_if(defs.begin(), defs.end(), [&](const KeyDef& d) { return d.key == e.key; });
    if (it == defs.end()) {
      throw ConfigError(where(origin, e.line) + ": unknown key '" + e.key + "' (did you mean '" + suggest_key(e.key) +
                        "'?)");
    }
    it->set(config, Ctx{e, origin});
  }
}

namespace {

TrainConfig finish(TrainConfig config, const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<ConfigEntry> extra;
  for (const auto& [k, v] : overrides) extra.push_back({k, v, 0});
  apply_entries(config, extra, "command line");
  validate(resolved(config));
  return config;
}

}  // namespace

TrainConfig parse_config_string(const std::string& text,
                                const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig config;
  apply_entries(config, parse_config_text(text), "<memory>");
  return finish(std::move(config), overrides);
}

TrainConfig parse_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig config;
  if (!path.empty()) {
    std::string text;
    try {
      text = read_text_file(path);
    } catch (const DataError&) {
      throw ConfigError("cannot read config file " + path);
    }
    apply_entries(config, parse_config_text(text, path), path);
  }
  return finish(std::move(config), overrides);
}

std::vector<std::pair<std::string, std::string>> echo_config(const TrainConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& d : key_defs()) out.emplace_back(d.key, d.get(config));
  return out;
}

std::string format_config(const TrainConfig& config) {
  std::string s;
  for (const auto& [k, v] : echo_config(config)) {
    if (v.empty()) continue;
    s += k + " = " + v + "\n";
  }
  return s;
}

}  // namespace bct

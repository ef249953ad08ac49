#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "bct/trainer.hpp"

namespace bct {

// Flat "key = value" text, '#' starts a comment. Keys are dotted:
// data.*, model.*, loss.*, optim.*, train.*, paradigm.*.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;  // 0 for command-line overrides
};

// Syntax errors name the line; duplicate keys name both lines.
std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& origin = "<memory>");

// Applies entries in order onto `config`. Unknown keys are rejected with the
// nearest valid key; values that do not parse as the key's type are rejected.
void apply_entries(TrainConfig& config, const std::vector<ConfigEntry>& entries, const std::string& origin);

// File values (when path is non-empty), then overrides, then validation.
TrainConfig parse_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides);
TrainConfig parse_config_string(const std::string& text,
                                const std::vector<std::pair<std::string, std::string>>& overrides = {});

const std::vector<std::string>& config_keys();
bool is_config_key(const std::string& key);
// Nearest key by edit distance.
std::string suggest_key(const std::string& key);

// Every key with its resolved value, in config_keys() order. Feeding the
// rendered text back through parse_config_string reproduces the config.
std::vector<std::pair<std::string, std::string>> echo_config(const TrainConfig& config);
std::string format_config(const TrainConfig& config);

}  // namespace bct

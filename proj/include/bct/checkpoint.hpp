#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bct/layers.hpp"

namespace bct {

// BCT1 layout, all integers u32 little-endian:
//   "BCT1" | count | per parameter: name_len, name (UTF-8), rank, dims...,
//   values (IEEE-754 binary32 LE).
std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedParam>& params);
std::vector<NamedParam> decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                                          const std::string& origin = "<memory>");

void save_checkpoint(const Model& model, const std::string& path);
void save_checkpoint(const std::vector<NamedParam>& params, const std::string& path);
std::vector<NamedParam> read_checkpoint(const std::string& path);

// Copies checkpoint values into the model parameters whose names start with
// `prefix` (empty = all). Every selected model parameter must be present with
// the same shape; with an empty prefix the checkpoint may not hold extras.
// Mismatches throw ConfigError naming the parameter; format problems throw
// DataError.
void load_into(Model& model, const std::vector<NamedParam>& checkpoint, const std::string& prefix = "");
void load_checkpoint(Model& model, const std::string& path, const std::string& prefix = "");

}  // namespace bct

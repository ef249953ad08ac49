#include "bct/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "bct/error.hpp"

namespace bct {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw ConfigError(std::string("checkpoint: ") + what + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }

  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(origin_ + ": truncated checkpoint reading " + what + " at byte offset " + std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedParam>& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, to_u32(params.size(), "parameter count"));
  for (const auto& p : params) {
    put_u32(out, to_u32(p.name.size(), "name length"));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, to_u32(p.tensor.rank(), "rank"));
    for (std::size_t d : p.tensor.shape()) put_u32(out, to_u32(d, "dimension"));
    for (float v : p.tensor.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_u32(out, bits);
    }
  }
  return out;
}

std::vector<NamedParam> decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError(origin + ": bad magic, not a BCT1 checkpoint");
  }
  Reader r(bytes, origin);
  r.text(4, "magic");
  const std::uint32_t count = r.u32("parameter count");
  std::vector<NamedParam> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("name length");
    std::string name = r.text(len, "name");
    const std::uint32_t rank = r.u32("rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u32("dimension"));
      if (shape.back() == 0) throw DataError(origin + ": zero dimension in parameter " + name);
    }
    const std::size_t n = numel(shape);
    if (n > (bytes.size() - r.pos()) / 4) {
      throw DataError(origin + ": truncated checkpoint in values of " + name + " at byte offset " +
                      std::to_string(r.pos()));
    }
    std::vector<float> values(n);
    for (auto& v : values) v = r.f32("values");
    params.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (!r.done()) throw DataError(origin + ": trailing bytes after checkpoint at offset " + std::to_string(r.pos()));
  return params;
}

void save_checkpoint(const std::vector<NamedParam>& params, const std::string& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

void save_checkpoint(const Model& model, const std::string& path) { save_checkpoint(model.parameters(), path); }

std::vector<NamedParam> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path);
}

void load_into(Model& model, const std::vector<NamedParam>& checkpoint, const std::string& prefix) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& p : checkpoint) {
    if (!by_name.emplace(p.name, &p.tensor).second) throw DataError("checkpoint repeats parameter " + p.name);
  }
  std::size_t selected = 0;
  for (auto& p : model.parameters()) {
    if (p.name.compare(0, prefix.size(), prefix) != 0) continue;
    ++selected;
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("checkpoint is missing parameter " + p.name);
    if (it->second->shape() != p.tensor.shape()) {
      throw ConfigError("checkpoint parameter " + p.name + " has shape " + shape_str(it->second->shape()) +
                        ", model expects " + shape_str(p.tensor.shape()));
    }
  }
  if (selected == 0) throw ConfigError("no model parameter matches prefix '" + prefix + "'");
  if (prefix.empty()) {
    for (const auto& p : checkpoint) {
      if (!model.has_parameter(p.name)) throw ConfigError("checkpoint parameter " + p.name + " is not in the model");
    }
  }
  for (auto& p : model.parameters()) {
    if (p.name.compare(0, prefix.size(), prefix) != 0) continue;
    auto src = by_name.at(p.name)->data();
    auto dst = p.tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void load_checkpoint(Model& model, const std::string& path, const std::string& prefix) {
  load_into(model, read_checkpoint(path), prefix);
}

}  // namespace bct

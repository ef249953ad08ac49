#include "bct/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "bct/error.hpp"
#include "bct/rng.hpp"

namespace fs = std::filesystem;

namespace bct {

namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Reads one unsigned header field, skipping whitespace and comments.
std::size_t header_number(const std::vector<std::uint8_t>& bytes, std::size_t& pos, const std::string& origin,
                          const char* field) {
  while (pos < bytes.size()) {
    if (is_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
    throw DataError(origin + ": malformed PPM header, expected " + field + " at byte offset " + std::to_string(pos));
  }
  std::size_t value = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    if (value > (1u << 24)) throw DataError(origin + ": PPM " + field + " too large");
    ++pos;
  }
  return value;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

ImageU8 decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw DataError(origin + ": bad magic, expected P6");
  std::size_t pos = 2;
  ImageU8 img;
  img.width = header_number(bytes, pos, origin, "width");
  img.height = header_number(bytes, pos, origin, "height");
  const std::size_t maxval = header_number(bytes, pos, origin, "maxval");
  if (img.width == 0 || img.height == 0) throw DataError(origin + ": PPM dimensions must be positive");
  if (maxval != 255) throw DataError(origin + ": unsupported maxval " + std::to_string(maxval) + ", expected 255");
  if (pos >= bytes.size() || !is_space(bytes[pos])) {
    throw DataError(origin + ": missing whitespace after maxval at byte offset " + std::to_string(pos));
  }
  ++pos;
  const std::size_t need = img.width * img.height * 3;
  if (bytes.size() - pos < need) {
    throw DataError(origin + ": truncated payload at byte offset " + std::to_string(bytes.size()) + ", expected " +
                    std::to_string(pos + need) + " bytes");
  }
  img.rgb.assign(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + need));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const ImageU8& image) {
  if (image.rgb.size() != image.width * image.height * 3) throw ConfigError("encode_ppm: pixel buffer size mismatch");
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

ImageU8 read_ppm(const std::string& path) { return decode_ppm(read_file(path), path); }

void write_ppm(const std::string& path, const ImageU8& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path);
}

Tensor to_tensor(const ImageU8& image) {
  const std::size_t h = image.height, w = image.width, plane = h * w;
  std::vector<float> values(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) values[c * plane + i] = static_cast<float>(image.rgb[i * 3 + c]) / 255.0f;
  }
  return Tensor({3, h, w}, std::move(values));
}

Tensor load_ppm(const std::string& path) { return to_tensor(read_ppm(path)); }

Tensor resize_nearest(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw ConfigError("resize_nearest: expected [C,H,W], got " + shape_str(image.shape()));
  if (height == 0 || width == 0) throw ConfigError("resize_nearest: target size must be positive");
  const std::size_t c = image.dim(0), sh = image.dim(1), sw = image.dim(2);
  auto src = image.data();
  std::vector<float> out(c * height * width);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t sy = y * sh / height;
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t sx = x * sw / width;
        out[(ch * height + y) * width + x] = src[(ch * sh + sy) * sw + sx];
      }
    }
  }
  return Tensor({c, height, width}, std::move(out));
}

const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

void validate(const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + format_double(r.train + r.val + r.test));
  }
}

std::vector<std::string> DatasetManifest::ids(Split split) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e.id);
  }
  return out;
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.split == split; }));
}

std::size_t DatasetManifest::count(Split split, int label) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const auto& e) { return e.split == split && e.label == label; }));
}

std::string DatasetManifest::path_of(const ManifestEntry& entry) const {
  return (fs::path(root) / (entry.id + ".ppm")).string();
}

DatasetManifest scan_dataset(const DataConfig& config) {
  validate(config.ratios);
  if (config.height == 0 || config.width == 0) throw ConfigError("image size must be positive");
  std::error_code ec;
  if (!fs::is_directory(config.root, ec)) throw DataError("dataset root " + config.root + " is not a directory");
  DatasetManifest m;
  m.root = config.root;
  m.seed = config.seed;
  m.height = config.height;
  m.width = config.width;
  m.ratios = config.ratios;
  for (int label = 0; label < 2; ++label) {
    const std::string cls = "class" + std::to_string(label);
    const fs::path dir = fs::path(config.root) / cls;
    if (!fs::is_directory(dir, ec)) throw DataError("missing class directory " + dir.string());
    std::size_t found = 0;
    for (const auto& item : fs::directory_iterator(dir)) {
      if (!item.is_regular_file() || item.path().extension() != ".ppm") continue;
      // Header check surfaces unreadable files before any training.
      read_ppm(item.path().string());
      m.entries.push_back({cls + "/" + item.path().stem().string(), label, Split::train});
      ++found;
    }
    if (found == 0) throw DataError("class directory " + dir.string() + " contains no .ppm files");
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  std::vector<std::size_t> order(m.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 rng(config.seed);
  shuffle(order, rng);
  const std::size_t n = order.size();
  std::size_t n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(n * config.ratios.train)));
  std::size_t n_val =
      std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(n * config.ratios.val)));
  for (std::size_t i = 0; i < n; ++i) {
    m.entries[order[i]].split = i < n_train ? Split::train : i < n_train + n_val ? Split::val : Split::test;
  }
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out << "root=" << m.root << '\n'
      << "seed=" << m.seed << '\n'
      << "height=" << m.height << '\n'
      << "width=" << m.width << '\n'
      << "ratio_train=" << format_double(m.ratios.train) << '\n'
      << "ratio_val=" << format_double(m.ratios.val) << '\n'
      << "ratio_test=" << format_double(m.ratios.test) << '\n';
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (int label = 0; label < 2; ++label) {
      out << "count_" << to_string(s) << "_class" << label << '=' << m.count(s, label) << '\n';
    }
  }
  for (const auto& e : m.entries) out << e.id << '\t' << e.label << '\t' << to_string(e.split) << '\n';
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab != std::string::npos) {
        const auto tab2 = line.find('\t', tab + 1);
        if (tab2 == std::string::npos) throw DataError("expected id<TAB>class<TAB>split");
        ManifestEntry e;
        e.id = line.substr(0, tab);
        e.label = std::stoi(line.substr(tab + 1, tab2 - tab - 1));
        if (e.label != 0 && e.label != 1) throw DataError("class must be 0 or 1");
        e.split = parse_split(line.substr(tab2 + 1));
        m.entries.push_back(std::move(e));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw DataError("expected key=value");
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "root") m.root = value;
      else if (key == "seed") m.seed = std::stoull(value);
      else if (key == "height") m.height = std::stoull(value);
      else if (key == "width") m.width = std::stoull(value);
      else if (key == "ratio_train") m.ratios.train = std::stod(value);
      else if (key == "ratio_val") m.ratios.val = std::stod(value);
      else if (key == "ratio_test") m.ratios.test = std::stod(value);
      // count_* keys are derived and ignored.
    }
  } catch (const std::logic_error&) {
    throw DataError("manifest line " + std::to_string(lineno) + ": malformed number");
  } catch (const Error& e) {
    throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
  }
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << format_manifest(manifest);
}

DatasetManifest read_manifest(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

const char* to_string(SynthFamily family) { return family == SynthFamily::target ? "target" : "source"; }

SynthFamily parse_family(const std::string& name) {
  if (name == "target") return SynthFamily::target;
  if (name == "source") return SynthFamily::source;
  throw ConfigError("unknown synthetic family '" + name + "' (expected target or source)");
}

ImageU8 render_pattern(SynthFamily family, int label, const PatternParams& p, std::size_t size, std::size_t cell) {
  if (size < 2) throw ConfigError("synthetic image size must be >= 2");
  if (cell < 1) throw ConfigError("synthetic cell size must be >= 1");
  ImageU8 img{size, size, std::vector<std::uint8_t>(size * size * 3)};
  const double span = static_cast<double>(size - 1);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double v = 0.0;
      if (family == SynthFamily::target && label == 0) {
        double t = static_cast<double>(x) / span;
        if (p.flip) t = 1.0 - t;
        v = p.lo + (p.hi - p.lo) * t;
      } else if (family == SynthFamily::target) {
        const std::size_t parity = ((x + p.phase_x) / cell + (y + p.phase_y) / cell) % 2;
        v = parity == 0 ? p.lo : p.hi;
      } else if (label == 0) {
        const double xx = p.flip ? span - static_cast<double>(x) : static_cast<double>(x);
        v = p.lo + (p.hi - p.lo) * (xx + static_cast<double>(y)) / (2.0 * span);
      } else {
        const double d = std::hypot(static_cast<double>(x) - p.center_x, static_cast<double>(y) - p.center_y);
        const auto ring = static_cast<std::size_t>(d / static_cast<double>(cell));
        v = ring % 2 == 0 ? p.lo : p.hi;
      }
      const std::uint8_t b = quantize(v);
      std::uint8_t* px = img.rgb.data() + (y * size + x) * 3;
      px[0] = px[1] = px[2] = b;
    }
  }
  return img;
}

DatasetManifest synth_generate(const std::string& out_root, const SynthOptions& options) {
  if (options.n_per_class < 1) throw ConfigError("synth: n_per_class must be >= 1");
  if (options.class1_count && *options.class1_count < 1) throw ConfigError("synth: class1 count must be >= 1");
  if (!(options.noise_level >= 0.0 && options.noise_level <= 1.0)) {
    throw ConfigError("synth: noise level must lie in [0,1]");
  }
  std::error_code ec;
  for (const char* cls : {"class0", "class1"}) {
    fs::create_directories(fs::path(out_root) / cls, ec);
    if (ec) throw DataError("cannot create " + (fs::path(out_root) / cls).string() + ": " + ec.message());
  }
  const std::size_t counts[2] = {options.n_per_class, options.class1_count.value_or(options.n_per_class)};
  const double size = static_cast<double>(options.size);
  for (int label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < counts[label]; ++i) {
      SplitMix64 rng(SplitMix64(options.seed ^ (static_cast<std::uint64_t>(label) << 40) ^ i).next());
      PatternParams p;
      p.lo = rng.uniform(0.0, 0.3);
      p.hi = rng.uniform(0.7, 1.0);
      p.flip = (rng.next() & 1) != 0;
      p.phase_x = rng.below(2 * options.cell);
      p.phase_y = rng.below(2 * options.cell);
      p.center_x = rng.uniform(0.25, 0.75) * size;
      p.center_y = rng.uniform(0.25, 0.75) * size;
      ImageU8 img = render_pattern(options.family, label, p, options.size, options.cell);
      if (options.noise_level > 0.0) {
        for (auto& b : img.rgb) {
          const double v = b / 255.0 + rng.uniform(-options.noise_level, options.noise_level);
          b = quantize(v);
        }
      }
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.ppm", i);
      write_ppm((fs::path(out_root) / ("class" + std::to_string(label)) / name).string(), img);
    }
  }
  {
    std::ofstream out(fs::path(out_root) / "synth.txt", std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write synth.txt under " + out_root);
    out << "family=" << to_string(options.family) << '\n'
        << "class0_count=" << counts[0] << '\n'
        << "class1_count=" << counts[1] << '\n'
        << "seed=" << options.seed << '\n'
        << "noise_level=" << format_double(options.noise_level) << '\n'
        << "size=" << options.size << '\n'
        << "cell=" << options.cell << '\n';
  }
  DataConfig dc;
  dc.root = out_root;
  dc.seed = options.seed;
  dc.height = dc.width = options.size;
  return scan_dataset(dc);
}

Dataset Dataset::load(const DatasetManifest& manifest) {
  Dataset ds;
  ds.manifest_ = manifest;
  for (const auto& e : manifest.entries) {
    Tensor img = load_ppm(manifest.path_of(e));
    if (img.dim(1) != manifest.height || img.dim(2) != manifest.width) {
      img = resize_nearest(img, manifest.height, manifest.width);
    }
    Sample s{std::move(img), e.label, e.id};
    switch (e.split) {
      case Split::train: ds.train_.push_back(std::move(s)); break;
      case Split::val: ds.val_.push_back(std::move(s)); break;
      case Split::test: ds.test_.push_back(std::move(s)); break;
    }
  }
  return ds;
}

const std::vector<Sample>& Dataset::split(Split s) const {
  switch (s) {
    case Split::train: return train_;
    case Split::val: return val_;
    case Split::test: return test_;
  }
  return train_;
}

Shape Dataset::sample_shape() const { return {3, manifest_.height, manifest_.width}; }

std::vector<Batch> make_batches(const std::vector<Sample>& samples, std::size_t batch_size,
                                std::optional<std::uint64_t> seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (samples.empty()) throw ConfigError("cannot batch an empty split");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (seed) {
    SplitMix64 rng(*seed);
    shuffle(order, rng);
  }
  const Shape item = samples.front().image.shape();
  const std::size_t item_size = numel(item);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    std::vector<float> pixels(n * item_size);
    std::vector<float> onehot(n * 2, 0.0f);
    Batch b;
    for (std::size_t k = 0; k < n; ++k) {
      const Sample& s = samples[order[start + k]];
      if (s.image.shape() != item) throw ConfigError("samples in a batch must share one shape");
      std::copy(s.image.data().begin(), s.image.data().end(), pixels.begin() + static_cast<long>(k * item_size));
      onehot[k * 2 + static_cast<std::size_t>(s.label)] = 1.0f;
      b.labels.push_back(s.label);
      b.ids.push_back(s.id);
    }
    Shape shape{n};
    shape.insert(shape.end(), item.begin(), item.end());
    b.images = Tensor(std::move(shape), std::move(pixels));
    b.targets = Tensor({n, 2}, std::move(onehot));
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace bct

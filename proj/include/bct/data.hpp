#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bct/tensor.hpp"

namespace bct {

// 8-bit RGB raster, interleaved row-major.
struct ImageU8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  bool operator==(const ImageU8&) const = default;
};

// Binary PPM: "P6", width, height, 255, one whitespace byte, raw RGB.
// Header comments ('#' to end of line) are accepted. Throws DataError on a
// bad magic, maxval other than 255 or a truncated payload.
ImageU8 decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
std::vector<std::uint8_t> encode_ppm(const ImageU8& image);
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& image);

// [3,H,W] tensor with values byte/255.
Tensor to_tensor(const ImageU8& image);
Tensor load_ppm(const std::string& path);

// Nearest-neighbour resampling of image[C,H,W]; source index is
// floor(dst * src / dst_extent).
Tensor resize_nearest(const Tensor& image, std::size_t height, std::size_t width);

enum class Split { train, val, test };

const char* to_string(Split split);
Split parse_split(const std::string& name);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

void validate(const SplitRatios& ratios);

struct DataConfig {
  std::string root;
  SplitRatios ratios;
  std::uint64_t seed = 1;
  std::size_t height = 64;
  std::size_t width = 64;
};

struct ManifestEntry {
  std::string id;  // "class<k>/<file stem>"
  int label = 0;
  Split split = Split::train;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::string root;
  std::uint64_t seed = 1;
  std::size_t height = 64;
  std::size_t width = 64;
  SplitRatios ratios;
  std::vector<ManifestEntry> entries;  // sorted by id

  std::vector<std::string> ids(Split split) const;
  std::size_t count(Split split) const;
  std::size_t count(Split split, int label) const;
  std::string path_of(const ManifestEntry& entry) const;
};

// Scans <root>/class0/*.ppm and <root>/class1/*.ppm, sorts by id, shuffles
// with the seed and cuts train/val/test by the ratios (rounded, remainder to
// test). Throws DataError for a missing root, an empty class directory or an
// unreadable file, ConfigError for bad ratios.
DatasetManifest scan_dataset(const DataConfig& config);

// Line-oriented text: "key=value" header lines, then "id<TAB>class<TAB>split".
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);
void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// Desk-scale synthetic datasets. The target family renders horizontal
// gradients (class 0) against checkerboards (class 1); the source family,
// used for surrogate pretraining, renders diagonal gradients (class 0) against
// concentric rings (class 1).
enum class SynthFamily { target, source };

const char* to_string(SynthFamily family);
SynthFamily parse_family(const std::string& name);

struct SynthOptions {
  SynthFamily family = SynthFamily::target;
  std::size_t n_per_class = 100;
  // Overrides the class-1 count, e.g. 11 against 100 for a ~90/10 split.
  std::optional<std::size_t> class1_count;
  std::uint64_t seed = 1;
  double noise_level = 0.1;
  std::size_t size = 64;
  std::size_t cell = 8;
};

// Per-sample pattern parameters drawn from the sample's generator.
struct PatternParams {
  double lo = 0.0;
  double hi = 1.0;
  bool flip = false;
  std::size_t phase_x = 0;
  std::size_t phase_y = 0;
  double center_x = 0.0;
  double center_y = 0.0;
};

// Noise-free rendering of one synthetic sample.
ImageU8 render_pattern(SynthFamily family, int label, const PatternParams& params, std::size_t size,
                       std::size_t cell);

// Writes class0/ and class1/ PPM trees plus synth.txt under out_root and
// returns the scanned manifest (default ratios, same seed). Identical options
// produce byte-identical trees.
DatasetManifest synth_generate(const std::string& out_root, const SynthOptions& options);

struct Sample {
  Tensor image;  // [C,H,W], values in [0,1]
  int label = 0;
  std::string id;
};

// Decoded, resized samples for every split of a manifest.
class Dataset {
 public:
  static Dataset load(const DatasetManifest& manifest);

  const std::vector<Sample>& split(Split s) const;
  const DatasetManifest& manifest() const { return manifest_; }
  Shape sample_shape() const;

 private:
  DatasetManifest manifest_;
  std::vector<Sample> train_, val_, test_;
};

struct Batch {
  Tensor images;   // [N,C,H,W]
  Tensor targets;  // one-hot [N,2]
  std::vector<int> labels;
  std::vector<std::string> ids;
};

// Per-epoch shuffle seed.
inline std::uint64_t epoch_seed(std::uint64_t run_seed, std::size_t epoch) {
  return run_seed ^ static_cast<std::uint64_t>(epoch);
}

// Splits samples into batches, shuffled with `seed` when given, keeping the
// final short batch. Throws ConfigError for batch_size < 1 or no samples.
std::vector<Batch> make_batches(const std::vector<Sample>& samples, std::size_t batch_size,
                                std::optional<std::uint64_t> seed);

}  // namespace bct

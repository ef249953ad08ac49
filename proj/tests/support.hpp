// Shared oracles for the unit tests and the acceptance binary.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "bct/losses.hpp"
#include "bct/nn_ops.hpp"
#include "bct/rng.hpp"
#include "bct/tensor.hpp"

namespace bct::testing {

inline Tensor64 random64(const Shape& shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor64(shape, std::move(v));
}

inline Tensor random32(const Shape& shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(shape, std::move(v));
}

// Values i*step in shuffled order, so no two entries are closer than `step`.
inline Tensor64 distinct64(const Shape& shape, SplitMix64& rng, double step = 0.01) {
  std::vector<double> v(numel(shape));
  std::iota(v.begin(), v.end(), 0.0);
  shuffle(v, rng);
  for (auto& x : v) x = x * step - 0.5 * step * static_cast<double>(v.size());
  return Tensor64(shape, std::move(v));
}

// Entries >= `margin` away from zero, for kinked ops.
inline Tensor64 away_from_zero64(const Shape& shape, SplitMix64& rng, double margin = 0.05) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) {
    const double m = rng.uniform(margin, 1.0);
    x = rng.below(2) ? m : -m;
  }
  return Tensor64(shape, std::move(v));
}

template <typename T>
BasicTensor<T> one_hot(const std::vector<int>& labels, std::size_t classes) {
  std::vector<T> v(labels.size() * classes, T(0));
  for (std::size_t i = 0; i < labels.size(); ++i) v[i * classes + static_cast<std::size_t>(labels[i])] = T(1);
  return BasicTensor<T>({labels.size(), classes}, std::move(v));
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, SplitMix64& rng) {
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(rng.below(classes));
  return out;
}

// Scalar projection with fixed random weights, so every output element
// contributes a distinct coefficient to the checked gradient.
inline Tensor64 project(const Tensor64& out, SplitMix64& rng) {
  return sum(mul(out, random64(out.shape(), rng, 0.5, 1.5)));
}

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst_abs = 0.0;
  double worst_rel = 0.0;  // among entries above the absolute floor
  std::string first_failure;

  bool ok() const { return failures == 0 && checked > 0; }
  void merge(const GradCheck& o) {
    checked += o.checked;
    failures += o.failures;
    worst_abs = std::max(worst_abs, o.worst_abs);
    worst_rel = std::max(worst_rel, o.worst_rel);
    if (first_failure.empty()) first_failure = o.first_failure;
  }
};

using ScalarFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

// Central differences (step h) against the tape's gradient for every entry of
// every input; an entry passes when |a - n| <= abs_floor or
// |a - n| / max(|a|, |n|) <= rel.
inline GradCheck gradcheck(const ScalarFn& f, const std::vector<Tensor64>& inputs, double h = 1e-3,
                           double rel = 1e-5, double abs_floor = 1e-7) {
  std::vector<Tensor64> leaves;
  for (const auto& in : inputs) {
    std::vector<double> v(in.data().begin(), in.data().end());
    leaves.emplace_back(in.shape(), std::move(v), true);
  }
  f(leaves).backward();
  GradCheck report;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    std::vector<double> analytic(leaves[i].size(), 0.0);
    if (leaves[i].has_grad()) std::copy(leaves[i].grad().begin(), leaves[i].grad().end(), analytic.begin());
    for (std::size_t j = 0; j < leaves[i].size(); ++j) {
      auto eval = [&](double delta) {
        NoGradGuard guard;
        std::vector<Tensor64> probe;
        for (std::size_t k = 0; k < leaves.size(); ++k) {
          std::vector<double> v(leaves[k].data().begin(), leaves[k].data().end());
          if (k == i) v[j] += delta;
          probe.emplace_back(leaves[k].shape(), std::move(v));
        }
        return f(probe).item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double a = analytic[j];
      const double diff = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double r = scale > 0.0 ? diff / scale : 0.0;
      ++report.checked;
      report.worst_abs = std::max(report.worst_abs, diff);
      if (diff > abs_floor) report.worst_rel = std::max(report.worst_rel, r);
      if (diff > abs_floor && r > rel) {
        if (report.failures++ == 0) {
          report.first_failure = "input " + std::to_string(i) + " entry " + std::to_string(j) + ": analytic " +
                                 std::to_string(a) + " numeric " + std::to_string(numeric);
        }
      }
    }
  }
  return report;
}

// Randomized finite-difference suites, one per layer or loss. Each runs
// `trials` shapes drawn from the seed.
inline const std::vector<std::string>& grad_suite_names() {
  static const std::vector<std::string> names = {"conv2d",  "maxpool2d", "dense", "sigmoid",  "relu",    "softmax",
                                                 "ce",      "bce",       "focal_g0", "focal_g1", "focal_g2"};
  return names;
}

inline GradCheck grad_suite(const std::string& name, std::size_t trials, std::uint64_t seed) {
  SplitMix64 rng(seed);
  GradCheck total;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 1 + rng.below(2);
    GradCheck r;
    if (name == "conv2d") {
      const std::size_t c = 1 + rng.below(3), co = 1 + rng.below(3);
      const std::size_t k = 1 + rng.below(3), stride = 1 + rng.below(2), out = 1 + rng.below(3);
      std::size_t pad = rng.below(2);
      if ((out - 1) * stride + k <= 2 * pad) pad = 0;
      const std::size_t h = (out - 1) * stride + k - 2 * pad;
      const std::size_t w = h;
      const Conv2dGeometry g{stride, pad};
      SplitMix64 proj(rng.next());
      r = gradcheck(
          [&, g](const std::vector<Tensor64>& in) {
            SplitMix64 p = proj;
            return project(conv2d(in[0], in[1], in[2], g), p);
          },
          {random64({n, c, h, w}, rng), random64({co, c, k, k}, rng), random64({co}, rng)});
    } else if (name == "maxpool2d") {
      const std::size_t c = 1 + rng.below(3), window = 1 + rng.below(3), stride = 1 + rng.below(2);
      const std::size_t h = window + stride * rng.below(3);
      SplitMix64 proj(rng.next());
      r = gradcheck(
          [&](const std::vector<Tensor64>& in) {
            SplitMix64 p = proj;
            return project(maxpool2d(in[0], window, stride), p);
          },
          {distinct64({n, c, h, h}, rng)});
    } else if (name == "dense") {
      const std::size_t f = 1 + rng.below(8), fo = 1 + rng.below(8);
      SplitMix64 proj(rng.next());
      r = gradcheck(
          [&](const std::vector<Tensor64>& in) {
            SplitMix64 p = proj;
            return project(linear(in[0], in[1], in[2]), p);
          },
          {random64({n, f}, rng), random64({fo, f}, rng), random64({fo}, rng)});
    } else if (name == "sigmoid" || name == "relu" || name == "softmax") {
      const Shape shape = {n, 1 + rng.below(8)};
      SplitMix64 proj(rng.next());
      const Tensor64 x = name == "relu" ? away_from_zero64(shape, rng) : random64(shape, rng, -3.0, 3.0);
      r = gradcheck(
          [&](const std::vector<Tensor64>& in) {
            SplitMix64 p = proj;
            if (name == "sigmoid") return project(sigmoid(in[0]), p);
            if (name == "relu") return project(relu(in[0]), p);
            return project(softmax(in[0]), p);
          },
          {x});
    } else {
      // losses, differentiated through softmax w.r.t. the logits
      const std::size_t classes = name == "ce" ? 2 + rng.below(3) : 2;
      const std::size_t rows = 1 + rng.below(6);
      const auto targets = one_hot<double>(random_labels(rows, classes, rng), classes);
      const Reduction red = rng.below(2) ? Reduction::mean : Reduction::sum;
      r = gradcheck(
          [&](const std::vector<Tensor64>& in) {
            const Tensor64 s = softmax(in[0]);
            if (name == "ce") return cross_entropy(s, targets, red);
            if (name == "bce") return binary_cross_entropy(s, targets, red);
            const double gamma = name == "focal_g0" ? 0.0 : name == "focal_g1" ? 1.0 : 2.0;
            return focal_loss(s, targets, gamma, red);
          },
          {random64({rows, classes}, rng, -2.0, 2.0)});
    }
    total.merge(r);
  }
  return total;
}

// Direct quadruple loop; the oracle for conv2d.
inline std::vector<double> conv2d_reference(const Tensor64& x, const Tensor64& w, const Tensor64& b,
                                            std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * co * oh * ow, 0.0);
  const auto X = x.data();
  const auto W = w.data();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b.data()[o];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long y = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                acc += X[((s * c + ci) * h + static_cast<std::size_t>(y)) * wd + static_cast<std::size_t>(xx)] *
                       W[((o * c + ci) * kh + u) * kw + v];
              }
          out[((s * co + o) * oh + i) * ow + j] = acc;
        }
  return out;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("bct_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace bct::testing

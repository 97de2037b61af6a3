#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <unistd.h>

#include "studa/config.hpp"
#include "studa/core/nn.hpp"
#include "studa/synth/dataset.hpp"

namespace studa::test {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("studa_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

struct GradCheck {
  double rel_error = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12)
  double max_abs = 0;
  std::size_t checked = 0;
};

// Central differences on every coordinate of `params` against one backward
// pass of `loss`. `loss` must rebuild the graph on each call.
inline GradCheck grad_check(nn::ParameterSet<double>& params, const std::function<Var<double>()>& loss,
                            double eps = 1e-6) {
  params.zero_grad();
  backward(loss());
  std::vector<double> analytic, numeric;
  for (auto& [name, v] : params.items()) {
    Var<double> p = v;
    const Tensor<double> g = p.grad().size() ? p.grad() : Tensor<double>(p.shape());
    for (std::size_t i = 0; i < p.value().size(); ++i) {
      const double orig = p.value()[i];
      p.mutable_value()[i] = orig + eps;
      double up, down;
      {
        NoGradGuard ng;
        up = loss().item();
      }
      p.mutable_value()[i] = orig - eps;
      {
        NoGradGuard ng;
        down = loss().item();
      }
      p.mutable_value()[i] = orig;
      analytic.push_back(g[i]);
      numeric.push_back((up - down) / (2 * eps));
    }
  }
  GradCheck r;
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
    r.max_abs = std::max(r.max_abs, std::abs(analytic[i] - numeric[i]));
  }
  r.rel_error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  r.checked = analytic.size();
  return r;
}

// Moves every parameter off exact zeros (biases start at 0, which puts ReLU
// inputs of dead regions on the kink where central differences are invalid).
inline void jitter(nn::ParameterSet<double>& params, std::uint64_t seed, double scale = 0.05) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [name, v] : params.items()) {
    Var<double> p = v;
    for (auto& x : p.mutable_value().vec()) x += n(g);
  }
}

template <class T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& g, double lo = -1, double hi = 1) {
  Tensor<T> t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.vec()) v = static_cast<T>(u(g));
  return t;
}

// Small generator config for fast tests: 32x32 canvas, tiny splits.
inline GeneratorConfig tiny_generator(int n_source = 12, int n_target = 12, int n_val = 8) {
  GeneratorConfig g;
  g.splits = {{"source-train", 0, n_source, synth::Domain::source},
              {"source-val", 900000, n_val, synth::Domain::source},
              {"target-train", 1000000, n_target, synth::Domain::target},
              {"target-val", 2000000, n_val, synth::Domain::target}};
  return g;
}

inline std::vector<synth::LabeledImage> render_split(const GeneratorConfig& g, const std::string& split,
                                                     bool keep_labels = true) {
  const auto& s = g.split(split);
  std::vector<synth::LabeledImage> out;
  for (int i = 0; i < s.count; ++i) {
    out.push_back(synth::render_split_item(g, s, s.seed_begin + i));
    if (!keep_labels) out.back().labels.clear();
  }
  return out;
}

// Pipeline configuration small enough for a full run in seconds.
inline PipelineConfig tiny_pipeline(std::uint64_t seed = 0) {
  PipelineConfig c;
  c.dataset = tiny_generator(16, 16, 8);
  c.translation.iterations = 6;
  c.translation.log_every = 2;
  for (auto* s : {&c.pretrain, &c.source, &c.target}) {
    s->iterations = 6;
    s->log_every = 2;
    s->batch_size = 2;
  }
  c.pseudo.K = 3;
  c.rounds = 1;
  c.seed = seed;
  return c;
}

}  // namespace studa::test

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>

#include "studa/core/png_io.hpp"
#include "studa/metrics/evaluate.hpp"
#include "studa/segmentation/objectives.hpp"
#include "studa/translation/model.hpp"

namespace studa::pseudo {

namespace fs = std::filesystem;
using seg::ProbabilityMap;

// Style draws of one image: K rows of N(0, sigma2 I), from a stream keyed by
// the image, so estimates do not depend on batching or image order.
template <class T>
std::vector<Tensor<T>> draw_styles(int K, int dim, double sigma2, Rng& rng) {
  if (K < 1) throw UsageError("K must be >= 1");
  std::vector<Tensor<T>> out;
  for (int k = 0; k < K; ++k) out.push_back(translation::sample_style<T>(1, dim, sigma2, rng).vector.value());
  return out;
}

// Running Monte-Carlo means of F_s(I[x, v_k]) for a batch x [N,3,H,W].
// styles[n][k] is the k-th code of image n. Returns the mean over the first
// `k` samples for every k in `report_at` (ascending, each <= K).
template <class T>
std::vector<Tensor<T>> mc_prefix_means(const translation::TranslationModel<T>& tr, const seg::SegmentationModel<T>& Fs,
                                       const Tensor<T>& x, const std::vector<std::vector<Tensor<T>>>& styles,
                                       const std::vector<int>& report_at) {
  NoGradGuard ng;
  const int N = x.dim(0);
  if (static_cast<int>(styles.size()) != N) throw ShapeError("one style list per image required");
  const int K = static_cast<int>(styles[0].size());
  if (K < 1) throw UsageError("K must be >= 1");
  for (int k : report_at)
    if (k < 1 || k > K) throw UsageError("report point outside [1, K]");
  const auto content = tr.content(constant(x), synth::Domain::target);
  const int d = tr.arch().style_dim;
  Tensor<T> sum;
  std::vector<Tensor<T>> out;
  std::size_t next = 0;
  for (int k = 0; k < K; ++k) {
    Tensor<T> v(Shape{N, d});
    for (int n = 0; n < N; ++n) std::copy_n(styles[n][k].data(), d, v.data() + static_cast<std::size_t>(n) * d);
    const auto img = tr.decode(content, {constant(std::move(v)), 1.0}, synth::Domain::source).value();
    const auto p = Fs.predict(img);
    if (k == 0)
      sum = p;
    else
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += p[i];
    while (next < report_at.size() && report_at[next] == k + 1) {
      Tensor<T> mean = sum;
      for (auto& m : mean.vec()) m /= T(k + 1);
      out.push_back(std::move(mean));
      ++next;
    }
  }
  return out;
}

// (1/K) sum_k F_s(I[x_t, v_k]), v_k ~ N(0, I) drawn from rng.
template <class T>
ProbabilityMap<T> mc_pseudo_label(const Tensor<T>& x_t, const translation::TranslationModel<T>& tr,
                                  const seg::SegmentationModel<T>& Fs, int K, Rng& rng) {
  if (K < 1) throw UsageError("K must be >= 1");
  if (x_t.rank() != 4 || x_t.dim(0) != 1) throw ShapeError("mc_pseudo_label expects one image [1,3,H,W]");
  const auto styles = draw_styles<T>(K, tr.arch().style_dim, 1.0, rng);
  const auto p = mc_prefix_means(tr, Fs, x_t, {styles}, {K}).front();
  return {p.reshaped(Shape{p.dim(1), p.dim(2), p.dim(3)})};
}

// Weighted per-pixel mean (uniform by default).
template <class T>
ProbabilityMap<T> ensemble(const std::vector<ProbabilityMap<T>>& maps, std::vector<double> weights = {}) {
  if (maps.empty()) throw UsageError("ensemble needs at least one map");
  if (weights.empty()) weights.assign(maps.size(), 1.0 / static_cast<double>(maps.size()));
  if (weights.size() != maps.size()) throw UsageError("one weight per map required");
  double wsum = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw UsageError("ensemble weights must be non-negative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw UsageError("ensemble weights must sum to 1");
  for (const auto& m : maps)
    if (m.probs.shape() != maps[0].probs.shape()) throw ShapeError("ensemble members differ in shape");
  if (maps.size() == 1) return maps[0];
  ProbabilityMap<T> out{Tensor<T>(maps[0].probs.shape())};
  for (std::size_t k = 0; k < maps.size(); ++k)
    for (std::size_t i = 0; i < out.probs.size(); ++i) out.probs[i] += static_cast<T>(weights[k]) * maps[k].probs[i];
  return out;
}

struct ClassThresholds {
  std::vector<double> theta;  // per class, in [0, 1]
  std::vector<long> counts;   // N_c: pixels whose argmax is c
  double r = 1.0;
};

// Max-probability and argmax of every pixel of a [C,H,W] map.
template <class T>
void pixel_confidences(const ProbabilityMap<T>& p, std::vector<std::uint8_t>& arg, std::vector<T>& conf) {
  const int C = p.classes(), HW = p.height() * p.width();
  arg.resize(HW);
  conf.resize(HW);
  for (int i = 0; i < HW; ++i) {
    int best = 0;
    for (int c = 1; c < C; ++c)
      if (p.probs[static_cast<std::size_t>(c) * HW + i] > p.probs[static_cast<std::size_t>(best) * HW + i]) best = c;
    arg[i] = static_cast<std::uint8_t>(best);
    conf[i] = p.probs[static_cast<std::size_t>(best) * HW + i];
  }
}

// Incremental form of class_thresholds, so maps need not be held at once.
template <class T>
class ThresholdCollector {
 public:
  explicit ThresholdCollector(int classes) : per_class_(classes) {}

  void add(const ProbabilityMap<T>& p) {
    if (p.classes() != static_cast<int>(per_class_.size())) throw ShapeError("class count mismatch");
    pixel_confidences(p, arg_, conf_);
    for (std::size_t i = 0; i < arg_.size(); ++i) per_class_[arg_[i]].push_back(conf_[i]);
    ++maps_;
  }

  // theta_c = confidence at 1-based rank ceil(r * N_c) in descending order;
  // 1.0 when N_c = 0. Thresholds are capped at max_threshold when given.
  ClassThresholds finish(double r, std::optional<double> max_threshold = std::nullopt) {
    if (!(r > 0 && r <= 1)) throw UsageError("r must lie in (0, 1]");
    if (maps_ == 0) throw UsageError("class thresholds need at least one map");
    ClassThresholds th;
    th.r = r;
    for (auto& v : per_class_) {
      const long n = static_cast<long>(v.size());
      th.counts.push_back(n);
      if (n == 0) {
        th.theta.push_back(1.0);
        continue;
      }
      long rank = static_cast<long>(std::ceil(r * static_cast<double>(n) - 1e-9));
      rank = std::clamp(rank, 1L, n);
      std::nth_element(v.begin(), v.begin() + (rank - 1), v.end(), std::greater<T>());
      double theta = static_cast<double>(v[rank - 1]);
      if (max_threshold) theta = std::min(theta, *max_threshold);
      th.theta.push_back(theta);
    }
    return th;
  }

 private:
  std::vector<std::vector<T>> per_class_;
  std::vector<std::uint8_t> arg_;
  std::vector<T> conf_;
  long maps_ = 0;
};

template <class T>
ClassThresholds class_thresholds(const std::vector<ProbabilityMap<T>>& maps, double r,
                                 std::optional<double> max_threshold = std::nullopt) {
  if (maps.empty()) throw UsageError("class thresholds need at least one map");
  ThresholdCollector<T> col(maps[0].classes());
  for (const auto& m : maps) col.add(m);
  return col.finish(r, max_threshold);
}

struct PseudoLabelMap {
  std::vector<std::uint8_t> labels;  // H*W, 255 = ignore
  int height = 0, width = 0;
  int source_round = 0;
  std::vector<std::string> provenance;
};

// argmax (ties to the lowest index) when its probability reaches the class
// threshold, else 255.
template <class T>
PseudoLabelMap harden(const ProbabilityMap<T>& p, const ClassThresholds& th, int source_round = 0,
                      std::vector<std::string> provenance = {}) {
  if (static_cast<int>(th.theta.size()) != p.classes()) throw ShapeError("threshold count != class count");
  std::vector<std::uint8_t> arg;
  std::vector<T> conf;
  pixel_confidences(p, arg, conf);
  PseudoLabelMap out{std::move(arg), p.height(), p.width(), source_round, std::move(provenance)};
  for (std::size_t i = 0; i < out.labels.size(); ++i)
    if (static_cast<double>(conf[i]) < th.theta[out.labels[i]]) out.labels[i] = synth::kIgnoreLabel;
  return out;
}

// ---- on-disk store: <dir>/<id>.png + meta.json ----------------------------

inline nlohmann::json thresholds_json(const ClassThresholds& th) {
  return {{"r", th.r}, {"theta", th.theta}, {"counts", th.counts}};
}

// meta.json is written last and marks the store complete.
inline void write_store(const fs::path& dir, const std::map<std::string, PseudoLabelMap>& maps,
                        const nlohmann::json& meta) {
  fs::create_directories(dir);
  for (const auto& [id, m] : maps) png::write(dir / (id + ".png"), png::Image8{m.height, m.width, 1, m.labels});
  const auto tmp = dir / "meta.json.tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw Error("cannot write " + tmp.string());
    f << meta.dump(2) << '\n';
  }
  fs::rename(tmp, dir / "meta.json");
}

inline bool store_complete(const fs::path& dir) { return fs::exists(dir / "meta.json"); }

inline nlohmann::json read_store_meta(const fs::path& dir) {
  std::ifstream f(dir / "meta.json");
  if (!f) throw PrerequisiteError("pseudo-label store " + dir.string() + " is missing or incomplete");
  return nlohmann::json::parse(f);
}

// Labels for `ids`, keyed by id.
inline std::map<std::string, std::vector<std::uint8_t>> read_store(const fs::path& dir,
                                                                   const std::vector<std::string>& ids) {
  read_store_meta(dir);
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& id : ids) {
    const auto p = dir / (id + ".png");
    if (!fs::exists(p)) throw DatasetIntegrityError("pseudo-label id mismatch: missing " + p.string());
    auto img = png::read(p, 1);
    for (auto v : img.data)
      if (v >= synth::kNumClasses && v != synth::kIgnoreLabel)
        throw DatasetIntegrityError("pseudo-label value out of range in " + p.string());
    out.emplace(id, std::move(img.data));
  }
  return out;
}

}  // namespace studa::pseudo

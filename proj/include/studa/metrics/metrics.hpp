#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "studa/core/errors.hpp"
#include "studa/synth/types.hpp"

namespace studa::metrics {

// Rows are ground truth, columns prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = synth::kNumClasses)
      : classes_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {
    if (classes < 1) throw UsageError("confusion matrix needs at least one class");
  }

  int classes() const { return classes_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }
  std::uint64_t ignored() const { return ignored_; }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  ConfusionMatrix& accumulate(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                              std::uint8_t ignore_index = synth::kIgnoreLabel) {
    if (pred.size() != gt.size())
      throw ShapeError("prediction has " + std::to_string(pred.size()) + " pixels, ground truth " +
                       std::to_string(gt.size()));
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == ignore_index) {
        ++ignored_;
        continue;
      }
      if (gt[i] >= classes_ || pred[i] >= classes_)
        throw UsageError("class index out of range at pixel " + std::to_string(i));
      ++counts_[static_cast<std::size_t>(gt[i]) * classes_ + pred[i]];
    }
    return *this;
  }

  ConfusionMatrix& merge(const ConfusionMatrix& o) {
    if (o.classes_ != classes_) throw ShapeError("confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    ignored_ += o.ignored_;
    return *this;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t ignored_ = 0;
};

// TP / (TP + FP + FN) per class; nullopt when the denominator is zero.
inline std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  const int C = cm.classes();
  std::vector<std::optional<double>> out(C);
  for (int c = 0; c < C; ++c) {
    std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int k = 0; k < C; ++k) {
      if (k == c) continue;
      fp += cm.at(k, c);
      fn += cm.at(c, k);
    }
    const auto den = tp + fp + fn;
    if (den) out[c] = static_cast<double>(tp) / static_cast<double>(den);
  }
  return out;
}

// Mean of the defined IoUs over `subset` (all classes when empty).
inline double miou(const ConfusionMatrix& cm, std::span<const int> subset = {}) {
  const auto iou = iou_per_class(cm);
  std::vector<int> classes(subset.begin(), subset.end());
  if (classes.empty())
    for (int c = 0; c < cm.classes(); ++c) classes.push_back(c);
  double sum = 0;
  int n = 0;
  for (int c : classes) {
    if (c < 0 || c >= cm.classes()) throw UsageError("class " + std::to_string(c) + " outside the matrix");
    if (iou[c]) {
      sum += *iou[c];
      ++n;
    }
  }
  if (n == 0) throw UsageError("mIoU undefined: no class in the subset has a defined IoU");
  return sum / n;
}

inline double pixel_accuracy(const ConfusionMatrix& cm) {
  std::uint64_t correct = 0;
  for (int c = 0; c < cm.classes(); ++c) correct += cm.at(c, c);
  const auto t = cm.total();
  return t ? static_cast<double>(correct) / static_cast<double>(t) : 0.0;
}

}  // namespace studa::metrics

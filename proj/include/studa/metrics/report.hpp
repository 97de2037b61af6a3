#pragma once

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "studa/metrics/metrics.hpp"

namespace studa::metrics {

// {"miou", "pixel_accuracy", "ignored", "iou": [value or null per class]}
inline nlohmann::json summary_json(const ConfusionMatrix& cm) {
  nlohmann::json iou = nlohmann::json::array();
  for (const auto& v : iou_per_class(cm)) iou.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"miou", miou(cm)}, {"pixel_accuracy", pixel_accuracy(cm)}, {"ignored", cm.ignored()}, {"iou", iou}};
}

// class,iou rows; undefined classes are written as an empty field.
inline void write_class_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << "class,iou\n";
  f.precision(9);
  const auto iou = iou_per_class(cm);
  for (int c = 0; c < cm.classes(); ++c) {
    f << (c < synth::kNumClasses ? synth::kClassNames[c] : std::to_string(c)) << ',';
    if (iou[c]) f << *iou[c];
    f << '\n';
  }
}

inline void write_summary_json(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << summary_json(cm).dump(2) << '\n';
}

}  // namespace studa::metrics

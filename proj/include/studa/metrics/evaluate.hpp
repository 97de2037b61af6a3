#pragma once

#include <functional>

#include "studa/metrics/metrics.hpp"
#include "studa/segmentation/model.hpp"

namespace studa::metrics {

// Argmax over channels of a [C,H,W] or [N,C,H,W] map; ties to the lowest
// class index.
template <class T>
std::vector<std::uint8_t> argmax_channels(const Tensor<T>& probs) {
  const auto& s = probs.shape();
  if (s.size() != 3 && s.size() != 4) throw ShapeError("argmax expects [C,H,W] or [N,C,H,W]");
  const int N = s.size() == 4 ? s[0] : 1, C = s[s.size() - 3], HW = s[s.size() - 2] * s[s.size() - 1];
  std::vector<std::uint8_t> out(static_cast<std::size_t>(N) * HW);
  for (int n = 0; n < N; ++n) {
    const T* p = probs.data() + static_cast<std::size_t>(n) * C * HW;
    for (int i = 0; i < HW; ++i) {
      int best = 0;
      for (int c = 1; c < C; ++c)
        if (p[c * HW + i] > p[best * HW + i]) best = c;
      out[static_cast<std::size_t>(n) * HW + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

// Probabilities [N,C,H,W] for a batch of images.
template <class T>
using BatchPredictor = std::function<Tensor<T>(const std::vector<const synth::LabeledImage*>&)>;

template <class T>
BatchPredictor<T> model_predictor(const seg::SegmentationModel<T>& m) {
  return [&m](const std::vector<const synth::LabeledImage*>& ims) { return m.predict(synth::batch_tensor<T>(ims)); };
}

// Confusion matrix of a predictor over labeled images.
template <class T>
ConfusionMatrix evaluate(const BatchPredictor<T>& predict, const std::vector<synth::LabeledImage>& images,
                         int classes = synth::kNumClasses, int batch = 16) {
  ConfusionMatrix cm(classes);
  for (std::size_t b = 0; b < images.size(); b += batch) {
    std::vector<const synth::LabeledImage*> ims;
    std::vector<std::uint8_t> gt;
    for (std::size_t i = b; i < std::min(images.size(), b + batch); ++i) {
      if (images[i].labels.empty()) throw UsageError("evaluation image " + images[i].id + " has no labels");
      ims.push_back(&images[i]);
      gt.insert(gt.end(), images[i].labels.begin(), images[i].labels.end());
    }
    cm.accumulate(argmax_channels(predict(ims)), gt);
  }
  return cm;
}

template <class T>
ConfusionMatrix evaluate(const seg::SegmentationModel<T>& m, const std::vector<synth::LabeledImage>& images) {
  return evaluate<T>(model_predictor(m), images, m.arch().num_classes);
}

}  // namespace studa::metrics

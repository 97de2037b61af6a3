#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "studa/segmentation/model.hpp"

namespace studa::seg {

// Per-pixel class distribution of one image, [C, H, W].
template <class T>
struct ProbabilityMap {
  Tensor<T> probs;

  int classes() const { return probs.dim(0); }
  int height() const { return probs.dim(1); }
  int width() const { return probs.dim(2); }

  void validate(double tol = 1e-5) const {
    if (probs.rank() != 3) throw ShapeError("probability map needs [C,H,W], got " + shape_str(probs.shape()));
    const int C = classes(), HW = height() * width();
    for (int i = 0; i < HW; ++i) {
      double s = 0;
      for (int c = 0; c < C; ++c) {
        const double v = probs[static_cast<std::size_t>(c) * HW + i];
        if (!std::isfinite(v) || v < -tol || v > 1 + tol) throw NumericalError("probability", "entry outside [0,1]");
        s += v;
      }
      if (std::abs(s - 1.0) > tol) throw NumericalError("probability", "pixel does not sum to 1");
    }
  }
};

// Splits a [N,C,H,W] probability batch into per-image maps.
template <class T>
std::vector<ProbabilityMap<T>> split_maps(const Tensor<T>& batch) {
  std::vector<ProbabilityMap<T>> out;
  for (int n = 0; n < batch.dim(0); ++n) out.push_back({batch.slice0(n, n + 1).reshaped(Shape(batch.shape().begin() + 1, batch.shape().end()))});
  return out;
}

template <class T>
ProbabilityMap<T> predict_map(const SegmentationModel<T>& model, const synth::LabeledImage& im) {
  const auto p = model.predict(synth::image_tensor<T>(im));
  return {p.reshaped(Shape{p.dim(1), p.dim(2), p.dim(3)})};
}

// Element-wise -p log p with 0 log 0 = 0; any shape.
template <class T>
Tensor<T> weighted_self_information(const Tensor<T>& p) {
  Tensor<T> out(p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > T(0) ? -p[i] * std::log(p[i]) : T(0);
  return out;
}

template <class T>
Tensor<T> weighted_self_information(const ProbabilityMap<T>& p) {
  return weighted_self_information(p.probs);
}

struct CeValue {
  double loss = 0;
  long pixels = 0;
  bool all_ignored = false;  // warning: no pixel contributed
};

// Mean over non-ignored pixels of -log p[label]. probs is [C,H,W] or
// [N,C,H,W]; labels has one entry per pixel.
template <class T>
CeValue ce_loss(const Tensor<T>& probs, std::span<const std::uint8_t> labels,
                std::uint8_t ignore_index = synth::kIgnoreLabel) {
  const auto& s = probs.shape();
  if (s.size() != 3 && s.size() != 4) throw ShapeError("ce_loss expects [C,H,W] or [N,C,H,W]");
  const int N = s.size() == 4 ? s[0] : 1, C = s[s.size() - 3], HW = s[s.size() - 2] * s[s.size() - 1];
  if (labels.size() != static_cast<std::size_t>(N) * HW) throw ShapeError("ce_loss label count mismatch");
  CeValue r;
  double acc = 0;
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < HW; ++i) {
      const auto l = labels[static_cast<std::size_t>(n) * HW + i];
      if (l == ignore_index) continue;
      if (l >= C) throw Error("label " + std::to_string(l) + " out of range for " + std::to_string(C) + " classes");
      acc -= std::log(static_cast<double>(probs[(static_cast<std::size_t>(n) * C + l) * HW + i]));
      ++r.pixels;
    }
  r.all_ignored = r.pixels == 0;
  r.loss = r.pixels ? acc / static_cast<double>(r.pixels) : 0.0;
  return r;
}

template <class T>
CeValue ce_loss(const ProbabilityMap<T>& p, std::span<const std::uint8_t> labels,
                std::uint8_t ignore_index = synth::kIgnoreLabel) {
  return ce_loss(p.probs, labels, ignore_index);
}

// Domain labels of the entropy discriminator.
inline constexpr double kSourceSide = 1.0;
inline constexpr double kTargetSide = 0.0;

template <class T>
struct AdversarialLosses {
  Var<T> generator;      // target-side maps scored against the source label
  Var<T> discriminator;  // both sides on detached maps, halves averaged
};

template <class T>
AdversarialLosses<T> adversarial_alignment_losses(const Var<T>& source_like, const Var<T>& target,
                                                  const EntropyDiscriminator<T>& D) {
  if (!source_like.defined() || !target.defined() || source_like.value().empty() || target.value().empty())
    throw UsageError("adversarial alignment needs non-empty map sets");
  if (!source_like.value().all_finite() || !target.value().all_finite())
    throw NumericalError("adversarial", "non-finite entropy map");
  AdversarialLosses<T> out;
  out.generator = ops::bce_with_logits(D(target), T(kSourceSide));
  auto ds = ops::bce_with_logits(D(source_like.detach()), T(kSourceSide));
  auto dt = ops::bce_with_logits(D(target.detach()), T(kTargetSide));
  out.discriminator = ops::weighted_sum<T>({{T(0.5), ds}, {T(0.5), dt}});
  return out;
}

// Generic segmentation objective:
//   ce(F(labeled), y) + adv_weight * L_adv(E(F(adapt)))
//   + pseudo_weight * ce_theta(F(adapt), pseudo)
// The entropy of F(labeled) is the source-side reference for the
// discriminator. Every training objective is an instance of this form with
// different labeled / adapt inputs.
template <class T>
struct ObjectiveInputs {
  Var<T> labeled;                      // [N,3,H,W]
  std::vector<std::uint8_t> labels;    // N*H*W
  Var<T> adapt;                        // [M,3,H,W], may be undefined without adversarial/pseudo terms
  std::vector<std::uint8_t> pseudo;    // M*H*W, empty when unused
};

struct ObjectiveWeights {
  bool adversarial = true;
  double adv_weight = 1e-3;
  double pseudo_weight = 1.0;
};

template <class T>
struct ObjectiveTerms {
  Var<T> total;
  Var<T> ce;
  Var<T> adv_generator;      // undefined without adversarial term
  Var<T> adv_discriminator;  // undefined without adversarial term
  Var<T> pseudo_ce;          // undefined without pseudo-labels
  bool pseudo_all_ignored = false;

  std::vector<std::pair<std::string, double>> named() const {
    std::vector<std::pair<std::string, double>> out{{"total", total.item()}, {"ce", ce.item()}};
    if (adv_generator.defined()) {
      out.emplace_back("adv_generator", adv_generator.item());
      out.emplace_back("adv_discriminator", adv_discriminator.item());
    }
    if (pseudo_ce.defined()) out.emplace_back("pseudo_ce", pseudo_ce.item());
    return out;
  }
};

template <class T>
ObjectiveTerms<T> segmentation_objective(const SegmentationModel<T>& F, const EntropyDiscriminator<T>* D,
                                         const ObjectiveInputs<T>& in, const ObjectiveWeights& w) {
  ObjectiveTerms<T> out;
  const auto logp_l = F.log_probs(in.labeled);
  out.ce = ops::nll_loss(logp_l, std::span<const std::uint8_t>(in.labels));
  std::vector<std::pair<T, Var<T>>> terms{{T(1), out.ce}};
  const bool use_adv = w.adversarial && D != nullptr;
  const bool use_pseudo = !in.pseudo.empty();
  if (use_adv || use_pseudo) {
    if (!in.adapt.defined()) throw UsageError("objective needs adaptation images");
    const auto logp_a = F.log_probs(in.adapt);
    if (use_adv) {
      auto adv = adversarial_alignment_losses(ops::self_information_from_log(logp_l),
                                              ops::self_information_from_log(logp_a), *D);
      out.adv_generator = adv.generator;
      out.adv_discriminator = adv.discriminator;
      terms.emplace_back(T(w.adv_weight), adv.generator);
    }
    if (use_pseudo) {
      out.pseudo_ce = ops::nll_loss(logp_a, std::span<const std::uint8_t>(in.pseudo), synth::kIgnoreLabel,
                                    &out.pseudo_all_ignored);
      terms.emplace_back(T(w.pseudo_weight), out.pseudo_ce);
    }
  }
  out.total = ops::weighted_sum(terms);
  return out;
}

}  // namespace studa::seg

#pragma once

// Training loops for F (pretraining), F_t and F_s. All three share one loop:
// momentum SGD with polynomial decay on the segmenter, Adam on the entropy
// discriminator, one loss-log row per term and iteration.

#include <functional>
#include <map>

#include "studa/core/loss_log.hpp"
#include "studa/core/optim.hpp"
#include "studa/segmentation/objectives.hpp"
#include "studa/synth/batches.hpp"
#include "studa/synth/dataset.hpp"
#include "studa/translation/model.hpp"

namespace studa::seg {

using synth::LabeledImage;
using LabelIndex = std::map<std::string, std::vector<std::uint8_t>>;

struct TrainData {
  const std::vector<LabeledImage>* source = nullptr;  // labeled source-train
  const std::vector<LabeledImage>* target = nullptr;  // target-train, labels withheld
  const LabelIndex* pseudo = nullptr;                 // thresholded pseudo-labels by target id
};

struct TrainOptions {
  SegmentationConfig cfg;
  std::uint64_t seed = 0;
  const SegmentationModel<float>* init = nullptr;  // start from these weights instead of a fresh init
  LossLog* log = nullptr;
};

// How the style code of source->target translations is drawn.
struct StylePolicy {
  double sigma2 = 1.0;
  bool frozen = false;  // v fixed at the zero vector: deterministic translation
};

using Translator = translation::TranslationModel<float>;

namespace detail {

inline std::vector<const LabeledImage*> pick(const std::vector<LabeledImage>& set,
                                             const std::vector<std::size_t>& idx) {
  std::vector<const LabeledImage*> out;
  for (auto i : idx) out.push_back(&set[i]);
  return out;
}

inline std::vector<std::uint8_t> gather_labels(const std::vector<const LabeledImage*>& ims) {
  std::vector<std::uint8_t> out;
  for (const auto* im : ims) {
    if (im->labels.empty()) throw PrerequisiteError("image " + im->id + " has no labels");
    out.insert(out.end(), im->labels.begin(), im->labels.end());
  }
  return out;
}

inline std::vector<std::uint8_t> gather_pseudo(const LabelIndex& pseudo, const std::vector<const LabeledImage*>& ims) {
  std::vector<std::uint8_t> out;
  for (const auto* im : ims) {
    const auto it = pseudo.find(im->id);
    if (it == pseudo.end()) throw DatasetIntegrityError("no pseudo-label for " + im->id);
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

inline void check_pseudo_coverage(const LabelIndex& pseudo, const std::vector<LabeledImage>& target) {
  if (pseudo.size() != target.size())
    throw DatasetIntegrityError("pseudo-label id mismatch: " + std::to_string(pseudo.size()) + " maps for " +
                                std::to_string(target.size()) + " target images");
  for (const auto& im : target) {
    const auto it = pseudo.find(im.id);
    if (it == pseudo.end()) throw DatasetIntegrityError("pseudo-label id mismatch: missing " + im.id);
    if (it->second.size() != static_cast<std::size_t>(im.height) * im.width)
      throw DatasetIntegrityError("pseudo-label size mismatch for " + im.id);
  }
}

}  // namespace detail

// Content codes C_d(x), one [1,c,h,w] tensor per image. Each image is encoded
// on its own, so a cached code equals the code computed inside any batch.
inline std::vector<Tensor<float>> encode_contents(const Translator& tr, const std::vector<LabeledImage>& images,
                                                  synth::Domain domain) {
  NoGradGuard ng;
  std::vector<Tensor<float>> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(tr.content(constant(synth::image_tensor<float>(im)), domain).features.value());
  return out;
}

inline Tensor<float> gather_contents(const std::vector<Tensor<float>>& codes, const std::vector<std::size_t>& idx) {
  std::vector<Tensor<float>> parts;
  for (auto i : idx) parts.push_back(codes[i]);
  return concat0(parts);
}

// G_to(content, v) for a batch of cached codes, without a graph.
inline Tensor<float> decode_batch(const Translator& tr, const Tensor<float>& content, synth::Domain to,
                                  const StylePolicy& policy, Rng& rng) {
  NoGradGuard ng;
  const int n = content.dim(0), d = tr.arch().style_dim;
  const auto v = policy.frozen ? translation::constant_style<float>(n, d)
                               : translation::sample_style<float>(n, d, policy.sigma2, rng);
  return tr.decode({constant(content), synth::Domain::source}, v, to).value();
}

namespace detail {

// Builds the inputs of one iteration from batch indices.
using BatchFn = std::function<ObjectiveInputs<float>(const std::vector<std::size_t>& labeled,
                                                     const std::vector<std::size_t>& adapt)>;

inline SegmentationModel<float> run_training(const TrainOptions& o, Role role, std::size_t n_labeled,
                                             std::size_t n_adapt, const BatchFn& make_batch,
                                             ObjectiveWeights weights) {
  o.cfg.validate();
  synth::TrainingScope scope;
  const SegArch arch = seg_arch(o.cfg);
  SegmentationModel<float> model(arch, role, derive_seed(o.seed, "init"));
  if (o.init) model.parameters().load(o.init->parameters().snapshot());
  EntropyDiscriminator<float> D(arch.num_classes, o.cfg.disc_width, derive_seed(o.seed, "disc"));
  optim::Sgd<float> opt(model.parameters(), o.cfg.momentum, o.cfg.weight_decay);
  optim::Adam<float> dopt(D.parameters(), o.cfg.disc_beta1, o.cfg.disc_beta2);
  synth::BatchSampler ls(n_labeled, derive_seed(o.seed, "labeled-batches"));
  synth::BatchSampler as(n_adapt, derive_seed(o.seed, "adapt-batches"));
  const bool needs_adapt = weights.adversarial || weights.pseudo_weight > 0;
  if (n_labeled == 0) throw PrerequisiteError("no labeled training images");
  for (long it = 0; it < o.cfg.iterations; ++it) {
    const auto li = ls.next(o.cfg.batch_size);
    const auto ai = needs_adapt ? as.next(o.cfg.batch_size) : std::vector<std::size_t>{};
    const auto inputs = make_batch(li, ai);
    auto terms = segmentation_objective(model, &D, inputs, weights);
    const auto named = terms.named();
    for (const auto& [name, v] : named) {
      check_finite(name, v);
      if (o.log && it % o.cfg.log_every == 0) o.log->add(it, name, v);
    }
    model.parameters().zero_grad();
    D.parameters().zero_grad();
    backward(terms.total);
    opt.step(optim::poly_lr(o.cfg.lr, it, o.cfg.iterations, o.cfg.poly_power));
    if (terms.adv_discriminator.defined()) {
      D.parameters().zero_grad();
      backward(terms.adv_discriminator);
      dopt.step(optim::poly_lr(o.cfg.disc_lr, it, o.cfg.iterations, o.cfg.poly_power));
    }
  }
  model.info = {{"config", o.cfg}, {"seed", o.seed}, {"iterations", o.cfg.iterations}};
  return model;
}

}  // namespace detail

// F: cross-entropy on labeled source images plus entropy alignment of raw
// target images.
inline SegmentationModel<float> pretrain_semantic_net(const TrainOptions& o, const TrainData& data) {
  if (!data.source || !data.target) throw PrerequisiteError("pretraining needs source and target images");
  const auto& S = *data.source;
  const auto& Tg = *data.target;
  auto make = [&](const std::vector<std::size_t>& li, const std::vector<std::size_t>& ai) {
    ObjectiveInputs<float> in;
    const auto ls = detail::pick(S, li);
    in.labeled = constant(synth::batch_tensor<float>(ls));
    in.labels = detail::gather_labels(ls);
    if (!ai.empty()) in.adapt = constant(synth::batch_tensor<float>(detail::pick(Tg, ai)));
    return in;
  };
  ObjectiveWeights w{o.cfg.use_adversarial, o.cfg.adv_weight, 0.0};
  auto m = detail::run_training(o, Role::pretrain, S.size(), Tg.size(), make, w);
  return m;
}

// F_t: cross-entropy on stochastic translations T[x_s, v] (one fresh v per
// image and iteration), entropy alignment of raw target images, and the
// thresholded pseudo-label term when pseudo-labels are given.
inline SegmentationModel<float> train_target_network(const TrainOptions& o, const Translator* translator,
                                                     const TrainData& data, const StylePolicy& policy) {
  if (!translator) throw PrerequisiteError("target network training needs a trained translator");
  if (!data.source || !data.target) throw PrerequisiteError("target network training needs source and target images");
  if (!policy.frozen && !(policy.sigma2 > 0)) throw ConfigError("style variance must be positive");
  const auto& S = *data.source;
  const auto& Tg = *data.target;
  if (data.pseudo) detail::check_pseudo_coverage(*data.pseudo, Tg);
  const auto codes = encode_contents(*translator, S, synth::Domain::source);
  Rng style_rng(derive_seed(o.seed, "style"));
  auto make = [&](const std::vector<std::size_t>& li, const std::vector<std::size_t>& ai) {
    ObjectiveInputs<float> in;
    const auto ls = detail::pick(S, li);
    in.labeled = constant(decode_batch(*translator, gather_contents(codes, li), synth::Domain::target, policy, style_rng));
    in.labels = detail::gather_labels(ls);
    if (!ai.empty()) {
      const auto as = detail::pick(Tg, ai);
      in.adapt = constant(synth::batch_tensor<float>(as));
      if (data.pseudo) in.pseudo = detail::gather_pseudo(*data.pseudo, as);
    }
    return in;
  };
  ObjectiveWeights w{o.cfg.use_adversarial, o.cfg.adv_weight, data.pseudo ? o.cfg.pseudo_weight : 0.0};
  auto m = detail::run_training(o, Role::target, S.size(), Tg.size(), make, w);
  m.info["sigma2"] = policy.sigma2;
  m.info["frozen_style"] = policy.frozen;
  m.info["pseudo_labels"] = data.pseudo != nullptr;
  return m;
}

// F_s: cross-entropy on raw source images, entropy alignment of target->source
// translations I[x_t, v] (fresh v per image and iteration), and, with
// pseudo-labels, cross-entropy of I[x_t, v] against the pseudo-labels of x_t.
inline SegmentationModel<float> train_source_network(const TrainOptions& o, const Translator* translator,
                                                     const TrainData& data) {
  if (!translator) throw PrerequisiteError("source network training needs a trained translator");
  if (!data.source || !data.target) throw PrerequisiteError("source network training needs source and target images");
  const auto& S = *data.source;
  const auto& Tg = *data.target;
  if (data.pseudo) detail::check_pseudo_coverage(*data.pseudo, Tg);
  const auto codes = encode_contents(*translator, Tg, synth::Domain::target);
  Rng style_rng(derive_seed(o.seed, "style"));
  const StylePolicy policy{1.0, false};
  auto make = [&](const std::vector<std::size_t>& li, const std::vector<std::size_t>& ai) {
    ObjectiveInputs<float> in;
    const auto ls = detail::pick(S, li);
    in.labeled = constant(synth::batch_tensor<float>(ls));
    in.labels = detail::gather_labels(ls);
    if (!ai.empty()) {
      in.adapt =
          constant(decode_batch(*translator, gather_contents(codes, ai), synth::Domain::source, policy, style_rng));
      if (data.pseudo) in.pseudo = detail::gather_pseudo(*data.pseudo, detail::pick(Tg, ai));
    }
    return in;
  };
  ObjectiveWeights w{o.cfg.use_adversarial, o.cfg.adv_weight, data.pseudo ? o.cfg.pseudo_weight : 0.0};
  auto m = detail::run_training(o, Role::source, S.size(), Tg.size(), make, w);
  m.info["adversarial"] = o.cfg.use_adversarial;
  m.info["pseudo_labels"] = data.pseudo != nullptr;
  return m;
}

}  // namespace studa::seg

#pragma once

#include <map>
#include <optional>

#include "studa/core/loss_log.hpp"
#include "studa/core/optim.hpp"
#include "studa/segmentation/model.hpp"
#include "studa/synth/batches.hpp"
#include "studa/synth/dataset.hpp"
#include "studa/translation/model.hpp"

namespace studa::translation {

struct LossWeights {
  double recon = 10, cycle_content = 1, cycle_style = 1, adv = 1, sem = 1;
};

inline LossWeights loss_weights(const TranslationConfig& c) {
  return {c.w_recon, c.w_cycle_content, c.w_cycle_style, c.w_adv, c.w_sem};
}

template <class T>
struct LossBundle {
  std::map<std::string, Var<T>> terms;  // L_s, L_t, L_cycle_content, L_cycle_style, L_adv_s, L_adv_t, [L_sem]
  Var<T> generator_total;
  Var<T> discriminator_total;
  Var<T> translated_st, translated_ts;  // T[x_s, v_t] and I[x_t, v_s]
};

// Hard labels argmax F(x), ties to the lowest class.
template <class T>
std::vector<std::uint8_t> argmax_labels(const seg::SegmentationModel<T>& F, const Var<T>& x) {
  NoGradGuard ng;
  const auto lp = F.log_probs(x).value();
  const int N = lp.dim(0), C = lp.dim(1), HW = lp.dim(2) * lp.dim(3);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(N) * HW);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < HW; ++i) {
      int best = 0;
      for (int c = 1; c < C; ++c)
        if (lp[(static_cast<std::size_t>(n) * C + c) * HW + i] > lp[(static_cast<std::size_t>(n) * C + best) * HW + i])
          best = c;
      out[static_cast<std::size_t>(n) * HW + i] = static_cast<std::uint8_t>(best);
    }
  return out;
}

// All translator losses for one pair of batches. v_t / v_s are the sampled
// style codes for the two translation directions. The frozen network F, when
// given, adds the semantic-consistency term in both directions.
template <class T>
LossBundle<T> translation_loss_bundle(const TranslationModel<T>& m, const Var<T>& x_s, const Var<T>& x_t,
                                      const StyleCode<T>& v_t, const StyleCode<T>& v_s, const LossWeights& w,
                                      const seg::SegmentationModel<T>* F = nullptr) {
  using namespace ops;
  LossBundle<T> b;
  const auto c_s = m.content(x_s, Domain::source), c_t = m.content(x_t, Domain::target);
  const auto s_s = m.style(x_s, Domain::source), s_t = m.style(x_t, Domain::target);
  b.terms["L_s"] = l1_loss(m.decode(c_s, s_s, Domain::source), x_s);
  b.terms["L_t"] = l1_loss(m.decode(c_t, s_t, Domain::target), x_t);

  b.translated_st = m.decode(c_s, v_t, Domain::target);
  b.translated_ts = m.decode(c_t, v_s, Domain::source);
  const auto c_st = m.content(b.translated_st, Domain::target), c_ts = m.content(b.translated_ts, Domain::source);
  const auto s_st = m.style(b.translated_st, Domain::target), s_ts = m.style(b.translated_ts, Domain::source);
  b.terms["L_cycle_content"] = add(rms_distance(c_st.features, c_s.features), rms_distance(c_ts.features, c_t.features));
  b.terms["L_cycle_style"] = add(l1_loss(s_st.vector, v_t.vector), l1_loss(s_ts.vector, v_s.vector));
  b.terms["L_adv_t"] = mse_to_constant(m.discriminate(b.translated_st, Domain::target), T(1));
  b.terms["L_adv_s"] = mse_to_constant(m.discriminate(b.translated_ts, Domain::source), T(1));

  std::vector<std::pair<T, Var<T>>> total{{T(w.recon), b.terms["L_s"]},
                                          {T(w.recon), b.terms["L_t"]},
                                          {T(w.cycle_content), b.terms["L_cycle_content"]},
                                          {T(w.cycle_style), b.terms["L_cycle_style"]},
                                          {T(w.adv), b.terms["L_adv_s"]},
                                          {T(w.adv), b.terms["L_adv_t"]}};
  if (F) {
    const auto p_s = argmax_labels(*F, x_s), p_t = argmax_labels(*F, x_t);
    b.terms["L_sem"] = add(nll_loss(F->log_probs(b.translated_st), std::span<const std::uint8_t>(p_s)),
                           nll_loss(F->log_probs(b.translated_ts), std::span<const std::uint8_t>(p_t)));
    total.emplace_back(T(w.sem), b.terms["L_sem"]);
  }
  b.generator_total = weighted_sum(total);

  // Least-squares discriminators on detached translations.
  auto real_t = mse_to_constant(m.discriminate(x_t, Domain::target), T(1));
  auto fake_t = mse_to_constant(m.discriminate(b.translated_st.detach(), Domain::target), T(0));
  auto real_s = mse_to_constant(m.discriminate(x_s, Domain::source), T(1));
  auto fake_s = mse_to_constant(m.discriminate(b.translated_ts.detach(), Domain::source), T(0));
  b.discriminator_total = weighted_sum<T>({{T(0.5), real_t}, {T(0.5), fake_t}, {T(0.5), real_s}, {T(0.5), fake_s}});
  return b;
}

struct TranslationData {
  const std::vector<synth::LabeledImage>* source = nullptr;
  const std::vector<synth::LabeledImage>* target = nullptr;
};

// Trains the translator; `F` (frozen) enables the semantic-consistency term
// when cfg.use_sem is set. Zero iterations return the initial parameters.
inline TranslationModel<float> train_translation(const TranslationConfig& cfg, const TranslationData& data,
                                                 std::uint64_t seed, const seg::SegmentationModel<float>* F = nullptr,
                                                 LossLog* log = nullptr) {
  cfg.validate();
  if (!data.source || !data.target || data.source->empty() || data.target->empty())
    throw PrerequisiteError("translation training needs source and target images");
  if (cfg.use_sem && cfg.iterations > 0 && !F)
    throw PrerequisiteError("semantic consistency requested but no pretrained segmentation network given");
  synth::TrainingScope scope;
  TranslationModel<float> m(translator_arch(cfg), derive_seed(seed, "init"));
  optim::Adam<float> gopt(m.generator_parameters(), cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay);
  optim::Adam<float> dopt(m.discriminator_parameters(), cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay);
  synth::BatchSampler bs(data.source->size(), derive_seed(seed, "source-batches"));
  synth::BatchSampler bt(data.target->size(), derive_seed(seed, "target-batches"));
  Rng style_rng(derive_seed(seed, "style"));
  const LossWeights w = loss_weights(cfg);
  // Private frozen copy: F takes part in the graph only as a constant.
  std::optional<seg::SegmentationModel<float>> frozen;
  if (cfg.use_sem && F) {
    frozen.emplace(F->arch(), F->role(), 0);
    frozen->parameters().load(F->parameters().snapshot());
    frozen->parameters().set_trainable(false);
  }
  const seg::SegmentationModel<float>* sem = frozen ? &*frozen : nullptr;
  for (long it = 0; it < cfg.iterations; ++it) {
    std::vector<const synth::LabeledImage*> ps, pt;
    for (auto i : bs.next(cfg.batch_size)) ps.push_back(&(*data.source)[i]);
    for (auto i : bt.next(cfg.batch_size)) pt.push_back(&(*data.target)[i]);
    const auto x_s = constant(synth::batch_tensor<float>(ps)), x_t = constant(synth::batch_tensor<float>(pt));
    const auto v_t = sample_style<float>(cfg.batch_size, cfg.style_dim, 1.0, style_rng);
    const auto v_s = sample_style<float>(cfg.batch_size, cfg.style_dim, 1.0, style_rng);
    auto b = translation_loss_bundle(m, x_s, x_t, v_t, v_s, w, sem);
    for (const auto& [name, v] : b.terms) check_finite(name, v.item());
    check_finite("generator_total", b.generator_total.item());
    check_finite("discriminator_total", b.discriminator_total.item());
    if (log && it % cfg.log_every == 0) {
      for (const auto& [name, v] : b.terms) log->add(it, name, v.item());
      log->add(it, "generator_total", b.generator_total.item());
      log->add(it, "discriminator_total", b.discriminator_total.item());
    }
    const double lr = optim::step_lr(cfg.lr, it, cfg.lr_halve_every);
    m.generator_parameters().zero_grad();
    backward(b.generator_total);
    gopt.step(lr);
    m.discriminator_parameters().zero_grad();
    backward(b.discriminator_total);
    dopt.step(lr);
    m.step = it + 1;
  }
  return m;
}

// K translations of one batch with v_k ~ N(0, sigma2 I), in draw order.
template <class T>
std::vector<Tensor<T>> sample_translations(const TranslationModel<T>& m, const Tensor<T>& x, Domain from, Domain to,
                                           int K, double sigma2, Rng& rng) {
  if (K < 1) throw UsageError("K must be >= 1");
  NoGradGuard ng;
  const auto c = m.content(constant(x), from);
  std::vector<Tensor<T>> out;
  for (int k = 0; k < K; ++k)
    out.push_back(m.decode(c, sample_style<T>(x.dim(0), m.arch().style_dim, sigma2, rng), to).value());
  return out;
}

}  // namespace studa::translation

#pragma once

// Content/style translator in the MUNIT family, scaled down: per domain a
// content encoder (instance-normalized, /4 spatial), a style encoder (global
// vector), an AdaIN-modulated generator and an image discriminator.

#include <array>
#include <string>

#include "studa/config.hpp"
#include "studa/core/checkpoint.hpp"
#include "studa/core/nn.hpp"
#include "studa/synth/types.hpp"

namespace studa::translation {

using synth::Domain;

inline constexpr int kDownsample = 4;

inline int domain_index(Domain d) { return d == Domain::source ? 0 : 1; }

struct TranslatorArch {
  int image_channels = 3;
  int style_dim = 8;
  int enc_width = 16;
  int content_width = 32;
  int style_width = 16;
  int mlp_width = 32;
  int disc_width = 16;
  bool operator==(const TranslatorArch&) const = default;
};

inline TranslatorArch translator_arch(const TranslationConfig& c) {
  return {3, c.style_dim, c.enc_width, c.content_width, c.style_width, c.mlp_width, c.disc_width};
}

template <class T>
struct ContentCode {
  Var<T> features;  // [N, content_width, H/4, W/4]
  Domain domain = Domain::source;
};

template <class T>
struct StyleCode {
  Var<T> vector;  // [N, style_dim]
  double variance_scale = 1.0;
};

template <class T>
struct DomainTranslator {
  // content encoder
  nn::Conv2d<T> c_in, c_down1, c_down2, c_res1, c_res2;
  // style encoder
  nn::Conv2d<T> s_in, s_down1, s_down2;
  nn::Linear<T> s_fc;
  // generator
  nn::Linear<T> g_mlp1, g_mlp2;
  nn::Conv2d<T> g_res1, g_res2, g_up1, g_up2, g_out;
  // image discriminator
  nn::Conv2d<T> d1, d2, d3, d_out;

  DomainTranslator(nn::ParameterSet<T>& gen, nn::ParameterSet<T>& dis, const std::string& p, const TranslatorArch& a,
                   Rng& rng) {
    const int e = a.enc_width, c = a.content_width, sw = a.style_width;
    c_in = {gen, p + ".content.in", a.image_channels, e, 3, 1, 1, rng};
    c_down1 = {gen, p + ".content.down1", e, c, 3, 2, 1, rng};
    c_down2 = {gen, p + ".content.down2", c, c, 3, 2, 1, rng};
    c_res1 = {gen, p + ".content.res1", c, c, 3, 1, 1, rng};
    c_res2 = {gen, p + ".content.res2", c, c, 3, 1, 1, rng};
    s_in = {gen, p + ".style.in", a.image_channels, sw, 3, 2, 1, rng};
    s_down1 = {gen, p + ".style.down1", sw, sw, 3, 2, 1, rng};
    s_down2 = {gen, p + ".style.down2", sw, sw, 3, 2, 1, rng};
    s_fc = {gen, p + ".style.fc", sw, a.style_dim, rng, 1.0};
    g_mlp1 = {gen, p + ".gen.mlp1", a.style_dim, a.mlp_width, rng};
    g_mlp2 = {gen, p + ".gen.mlp2", a.mlp_width, 4 * c, rng, 0.5};
    g_res1 = {gen, p + ".gen.res1", c, c, 3, 1, 1, rng};
    g_res2 = {gen, p + ".gen.res2", c, c, 3, 1, 1, rng};
    g_up1 = {gen, p + ".gen.up1", c + 2, e, 3, 1, 1, rng};
    g_up2 = {gen, p + ".gen.up2", e, e, 3, 1, 1, rng};
    g_out = {gen, p + ".gen.out", e, a.image_channels, 3, 1, 1, rng, 1.0};
    d1 = {dis, p + ".disc.conv1", a.image_channels, a.disc_width, 3, 2, 1, rng};
    d2 = {dis, p + ".disc.conv2", a.disc_width, 2 * a.disc_width, 3, 2, 1, rng};
    d3 = {dis, p + ".disc.conv3", 2 * a.disc_width, 2 * a.disc_width, 3, 2, 1, rng};
    d_out = {dis, p + ".disc.out", 2 * a.disc_width, 1, 3, 1, 1, rng, 1.0};
  }
};

namespace detail {

// Two coordinate channels in [-1, 1] (x, y), broadcast over the batch.
template <class T>
Tensor<T> coordinate_planes(int n, int h, int w) {
  Tensor<T> t(Shape{n, 2, h, w});
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        t.at(b, 0, i, j) = static_cast<T>(2.0 * (j + 0.5) / w - 1.0);
        t.at(b, 1, i, j) = static_cast<T>(2.0 * (i + 0.5) / h - 1.0);
      }
  return t;
}

}  // namespace detail

template <class T>
class TranslationModel {
 public:
  TranslationModel(const TranslatorArch& arch, std::uint64_t seed) : arch_(arch) {
    Rng rng(seed);
    nets_.reserve(2);
    nets_.emplace_back(gen_params_, disc_params_, "source", arch_, rng);
    nets_.emplace_back(gen_params_, disc_params_, "target", arch_, rng);
  }
  TranslationModel(TranslationModel&&) noexcept = default;
  TranslationModel& operator=(TranslationModel&&) noexcept = default;
  TranslationModel(const TranslationModel&) = delete;
  TranslationModel& operator=(const TranslationModel&) = delete;

  const TranslatorArch& arch() const { return arch_; }
  nn::ParameterSet<T>& generator_parameters() { return gen_params_; }
  nn::ParameterSet<T>& discriminator_parameters() { return disc_params_; }
  long step = 0;

  void check_image(const Var<T>& x) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != arch_.image_channels || s[2] % kDownsample || s[3] % kDownsample)
      throw ShapeError("translator input " + shape_str(s) + " needs [N,3,H,W] with H, W divisible by 4");
  }

  ContentCode<T> content(const Var<T>& x, Domain d) const {
    check_image(x);
    const auto& n = nets_[domain_index(d)];
    using namespace ops;
    auto h = relu(instance_norm(n.c_in(x)));
    h = relu(instance_norm(n.c_down1(h)));
    h = relu(instance_norm(n.c_down2(h)));
    auto r = relu(instance_norm(n.c_res1(h)));
    r = instance_norm(n.c_res2(r));
    return {add(h, r), d};
  }

  StyleCode<T> style(const Var<T>& x, Domain d) const {
    check_image(x);
    const auto& n = nets_[domain_index(d)];
    using namespace ops;
    auto h = relu(n.s_in(x));
    h = relu(n.s_down1(h));
    h = relu(n.s_down2(h));
    return {n.s_fc(global_avg_pool(h)), 1.0};
  }

  // G_d(content, style): image in [-1, 1] at 4x the content resolution.
  Var<T> decode(const ContentCode<T>& content, const StyleCode<T>& style, Domain d) const {
    const auto& cs = content.features.shape();
    const auto& ss = style.vector.shape();
    if (cs.size() != 4 || cs[1] != arch_.content_width)
      throw ShapeError("content code " + shape_str(cs) + " does not match content width " +
                       std::to_string(arch_.content_width));
    if (ss.size() != 2 || ss[0] != cs[0] || ss[1] != arch_.style_dim)
      throw ShapeError("style code " + shape_str(ss) + " does not match [N," + std::to_string(arch_.style_dim) + "]");
    const auto& n = nets_[domain_index(d)];
    const int c = arch_.content_width;
    using namespace ops;
    auto p = n.g_mlp2(relu(n.g_mlp1(style.vector)));
    auto g1 = add_scalar(slice_columns(p, 0, c), T(1)), b1 = slice_columns(p, c, 2 * c);
    auto g2 = add_scalar(slice_columns(p, 2 * c, 3 * c), T(1)), b2 = slice_columns(p, 3 * c, 4 * c);
    const auto& h0 = content.features;
    auto r = relu(channel_affine(instance_norm(n.g_res1(h0)), g1, b1));
    r = channel_affine(instance_norm(n.g_res2(r)), g2, b2);
    auto h = add(h0, r);
    h = upsample_nearest(h, 2);
    const auto& hs = h.shape();
    h = concat_channels(h, constant(detail::coordinate_planes<T>(hs[0], hs[2], hs[3])));
    h = relu(n.g_up1(h));
    h = relu(n.g_up2(upsample_nearest(h, 2)));
    return tanh(n.g_out(h));
  }

  Var<T> translate(const Var<T>& x, Domain from, Domain to, const StyleCode<T>& v) const {
    if (from == to) throw UsageError("translate needs distinct domains");
    return decode(content(x, from), v, to);
  }

  // Patch logits [N,1,H/8,W/8] of the domain's image discriminator.
  Var<T> discriminate(const Var<T>& x, Domain d) const {
    const auto& n = nets_[domain_index(d)];
    using namespace ops;
    auto h = leaky_relu(n.d1(x), T(0.2));
    h = leaky_relu(n.d2(h), T(0.2));
    h = leaky_relu(n.d3(h), T(0.2));
    return n.d_out(h);
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.meta["kind"] = "translation";
    ck.meta["arch"] = {{"image_channels", arch_.image_channels}, {"style_dim", arch_.style_dim},
                       {"enc_width", arch_.enc_width},           {"content_width", arch_.content_width},
                       {"style_width", arch_.style_width},       {"mlp_width", arch_.mlp_width},
                       {"disc_width", arch_.disc_width}};
    ck.meta["step"] = step;
    ck.put_parameters(gen_params_);
    ck.put_parameters(disc_params_);
    return ck;
  }

  static TranslationModel from_checkpoint(const Checkpoint& ck) {
    if (ck.meta.value("kind", "") != "translation") throw CheckpointError("not a translation checkpoint");
    const auto& j = ck.meta.at("arch");
    TranslatorArch a;
    a.image_channels = j.at("image_channels").get<int>();
    a.style_dim = j.at("style_dim").get<int>();
    a.enc_width = j.at("enc_width").get<int>();
    a.content_width = j.at("content_width").get<int>();
    a.style_width = j.at("style_width").get<int>();
    a.mlp_width = j.at("mlp_width").get<int>();
    a.disc_width = j.at("disc_width").get<int>();
    TranslationModel m(a, 0);
    ck.load_parameters(m.gen_params_);
    ck.load_parameters(m.disc_params_);
    m.step = ck.meta.value("step", 0L);
    return m;
  }

 private:
  TranslatorArch arch_;
  nn::ParameterSet<T> gen_params_, disc_params_;
  std::vector<DomainTranslator<T>> nets_;
};

// v ~ N(0, sigma2 * I), one row per image.
template <class T>
StyleCode<T> sample_style(int n, int dim, double sigma2, Rng& rng) {
  if (!(sigma2 > 0)) throw UsageError("style variance must be positive");
  Tensor<T> v(Shape{n, dim});
  const double sd = std::sqrt(sigma2);
  for (auto& x : v.vec()) x = static_cast<T>(rng.normal(0.0, sd));
  return {constant(std::move(v)), sigma2};
}

template <class T>
StyleCode<T> constant_style(int n, int dim, T value = T(0)) {
  return {constant(Tensor<T>(Shape{n, dim}, value)), 1.0};
}

}  // namespace studa::translation

#pragma once

#include <string>

#include "studa/config.hpp"
#include "studa/core/checkpoint.hpp"
#include "studa/core/nn.hpp"

namespace studa::seg {

enum class Role { pretrain, source, target };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::pretrain: return "F_pretrain";
    case Role::source: return "F_source";
    case Role::target: return "F_target";
  }
  return "?";
}

inline Role role_from_name(const std::string& s) {
  if (s == "F_pretrain") return Role::pretrain;
  if (s == "F_source") return Role::source;
  if (s == "F_target") return Role::target;
  throw CheckpointError("unknown segmentation role " + s);
}

struct SegArch {
  int in_channels = 3;
  int width1 = 16, width2 = 32;
  int num_classes = synth::kNumClasses;
};

// Small fully-convolutional segmenter: stem, two strided blocks, a middle
// block, then a two-step upsampling head with a full-resolution skip.
// Output logits have the input's spatial size.
template <class T>
class SegmentationModel {
 public:
  SegmentationModel(const SegArch& arch, Role role, std::uint64_t seed) : arch_(arch), role_(role) {
    Rng rng(seed);
    const int w1 = arch.width1, w2 = arch.width2;
    stem_ = nn::Conv2d<T>(params_, "stem", arch.in_channels, w1, 3, 1, 1, rng);
    down1_ = nn::Conv2d<T>(params_, "down1", w1, w2, 3, 2, 1, rng);
    down2_ = nn::Conv2d<T>(params_, "down2", w2, w2, 3, 2, 1, rng);
    mid_ = nn::Conv2d<T>(params_, "mid", w2, w2, 3, 1, 1, rng);
    up_ = nn::Conv2d<T>(params_, "up", w2, w1, 3, 1, 1, rng);
    head_ = nn::Conv2d<T>(params_, "head", w1, arch.num_classes, 3, 1, 1, rng, 1.0);
  }

  SegmentationModel(SegmentationModel&&) noexcept = default;
  SegmentationModel& operator=(SegmentationModel&&) noexcept = default;
  SegmentationModel(const SegmentationModel&) = delete;
  SegmentationModel& operator=(const SegmentationModel&) = delete;

  Var<T> logits(const Var<T>& x) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != arch_.in_channels || s[2] % 4 || s[3] % 4)
      throw ShapeError("segmentation input " + shape_str(s) + " needs [N," + std::to_string(arch_.in_channels) +
                       ",H,W] with H, W divisible by 4");
    using namespace ops;
    auto st = relu(stem_(x));
    auto h = relu(down1_(st));
    h = relu(down2_(h));
    h = relu(mid_(h));
    h = relu(up_(upsample_nearest(h, 2)));
    h = add(upsample_nearest(h, 2), st);
    return head_(h);
  }

  Var<T> log_probs(const Var<T>& x) const { return ops::log_softmax_channels(logits(x)); }

  // Softmax probabilities [N,C,H,W], computed without a graph.
  Tensor<T> predict(const Tensor<T>& x) const {
    NoGradGuard ng;
    return ops::exp(log_probs(constant(x))).value();
  }

  nn::ParameterSet<T>& parameters() { return params_; }
  const nn::ParameterSet<T>& parameters() const { return params_; }
  const SegArch& arch() const { return arch_; }
  Role role() const { return role_; }

  // Free-form training metadata (config echo, style variance, ...), stored in
  // the checkpoint and restored on load.
  nlohmann::json info = nlohmann::json::object();

  void zero_head() {
    head_.weight.mutable_value().fill(T(0));
    head_.bias.mutable_value().fill(T(0));
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.meta["kind"] = "segmentation";
    ck.meta["role"] = role_name(role_);
    ck.meta["arch"] = {{"in_channels", arch_.in_channels},
                       {"width1", arch_.width1},
                       {"width2", arch_.width2},
                       {"num_classes", arch_.num_classes}};
    ck.meta["info"] = info;
    ck.put_parameters(params_);
    return ck;
  }

  static SegmentationModel from_checkpoint(const Checkpoint& ck) {
    if (ck.meta.value("kind", "") != "segmentation") throw CheckpointError("not a segmentation checkpoint");
    SegArch a;
    const auto& j = ck.meta.at("arch");
    a.in_channels = j.at("in_channels").get<int>();
    a.width1 = j.at("width1").get<int>();
    a.width2 = j.at("width2").get<int>();
    a.num_classes = j.at("num_classes").get<int>();
    SegmentationModel m(a, role_from_name(ck.meta.at("role").get<std::string>()), 0);
    ck.load_parameters(m.params_);
    m.info = ck.meta.value("info", nlohmann::json::object());
    return m;
  }

 private:
  SegArch arch_;
  Role role_;
  nn::ParameterSet<T> params_;
  nn::Conv2d<T> stem_, down1_, down2_, mid_, up_, head_;
};

// Four strided conv + leaky-ReLU(0.2) layers followed by a one-channel
// classification conv; input is a C-channel entropy (or probability) map.
template <class T>
class EntropyDiscriminator {
 public:
  EntropyDiscriminator(int in_channels, int width, std::uint64_t seed) {
    Rng rng(seed);
    const int widths[4] = {width, 2 * width, 2 * width, 2 * width};
    int in = in_channels;
    for (int i = 0; i < 4; ++i) {
      layers_[i] = nn::Conv2d<T>(params_, "conv" + std::to_string(i), in, widths[i], 3, 2, 1, rng);
      in = widths[i];
    }
    classifier_ = nn::Conv2d<T>(params_, "classifier", in, 1, 3, 1, 1, rng, 1.0);
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = x;
    for (const auto& l : layers_) h = ops::leaky_relu(l(h), T(0.2));
    return classifier_(h);
  }

  nn::ParameterSet<T>& parameters() { return params_; }

 private:
  nn::ParameterSet<T> params_;
  nn::Conv2d<T> layers_[4];
  nn::Conv2d<T> classifier_;
};

inline SegArch seg_arch(const SegmentationConfig& c) {
  SegArch a;
  a.width1 = c.width1;
  a.width2 = c.width2;
  return a;
}

}  // namespace studa::seg

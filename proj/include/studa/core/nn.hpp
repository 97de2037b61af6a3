#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "studa/core/ops.hpp"
#include "studa/core/rng.hpp"

namespace studa::nn {

// Ordered, named collection of trainable leaves. Names are stable and used as
// checkpoint blob keys.
template <class T>
class ParameterSet {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    for (const auto& [n, _] : params_)
      if (n == name) throw Error("duplicate parameter name " + name);
    auto v = Var<T>::leaf(std::move(init), true);
    params_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Var<T>>>& items() const { return params_; }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : params_) n += v.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : params_) v.zero_grad();
  }

  // Frozen parameters are treated as constants by the graph.
  void set_trainable(bool trainable) {
    for (auto& [_, v] : params_) v.node()->requires_grad = trainable;
  }

  std::map<std::string, Tensor<T>> snapshot() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& [n, v] : params_) out.emplace(n, v.value());
    return out;
  }

  void load(const std::map<std::string, Tensor<T>>& blobs) {
    for (auto& [n, v] : params_) {
      auto it = blobs.find(n);
      if (it == blobs.end()) throw CheckpointError("missing parameter blob " + n);
      if (it->second.shape() != v.shape())
        throw CheckpointError("parameter " + n + " shape " + shape_str(it->second.shape()) + " vs model " +
                              shape_str(v.shape()));
      v.mutable_value() = it->second;
    }
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
};

template <class T>
Tensor<T> uniform_init(Shape shape, int fan_in, Rng& rng, double gain = std::sqrt(2.0)) {
  Tensor<T> t(std::move(shape));
  const double bound = gain * std::sqrt(3.0 / std::max(1, fan_in));
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <class T>
struct Conv2d {
  Var<T> weight, bias;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParameterSet<T>& ps, const std::string& name, int in, int out, int k, int stride_, int pad_, Rng& rng,
         double gain = std::sqrt(2.0))
      : stride(stride_), pad(pad_) {
    weight = ps.add(name + ".weight", uniform_init<T>(Shape{out, in, k, k}, in * k * k, rng, gain));
    bias = ps.add(name + ".bias", Tensor<T>(Shape{out}));
  }

  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight, bias, stride, pad); }
};

template <class T>
struct Linear {
  Var<T> weight, bias;

  Linear() = default;
  Linear(ParameterSet<T>& ps, const std::string& name, int in, int out, Rng& rng, double gain = std::sqrt(2.0)) {
    weight = ps.add(name + ".weight", uniform_init<T>(Shape{out, in}, in, rng, gain));
    bias = ps.add(name + ".bias", Tensor<T>(Shape{out}));
  }

  Var<T> operator()(const Var<T>& x) const { return ops::linear(x, weight, bias); }
};

}  // namespace studa::nn

#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "studa/core/rng.hpp"

namespace studa::synth {

// Epoch-wise shuffled index stream; a batch may straddle two epochs.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = n;
  }

  std::vector<std::size_t> next(int batch) {
    std::vector<std::size_t> out;
    if (order_.empty()) return out;
    out.reserve(batch);
    while (static_cast<int>(out.size()) < batch) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_.engine());
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

}  // namespace studa::synth

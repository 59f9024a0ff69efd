#pragma once

#include <cstddef>
#include <vector>

#include "catrinet/parameters.hpp"

namespace catrinet {

struct AdamConfig {
  double lr = 0.0004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
};

/// Adam over every trainable tensor of a ParameterStore. Moment buffers are
/// keyed by store position, so the store must not grow after construction.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config);

  /// Applies one update from the gradients currently held by the store.
  /// Returns the pre-clip global gradient norm.
  double step();
  std::size_t steps() const noexcept { return t_; }

 private:
  ParameterStore& store_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace catrinet

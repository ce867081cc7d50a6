#pragma once

#include <string>
#include <vector>

#include "coast/ndarray.hpp"

namespace coast {

struct NamedParam {
  std::string name;
  NdArray value;
};

// Ordered list of named parameters; order is the canonical serialization
// order used by checkpoints.
struct ParamSet {
  std::vector<NamedParam> items;

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items) n += p.value.size();
    return n;
  }
};

// Adam with bias correction (beta1 = momentum 0.9, beta2 = 0.999).
struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<NdArray> m;  // first moments, per parameter
  std::vector<NdArray> v;  // second moments, per parameter
};

// One update over all parameters. grads must parallel params.items.
// Throws NumericalError naming the parameter if a gradient is non-finite.
void adam_step(ParamSet& params, const std::vector<NdArray>& grads,
               AdamState& state);

}  // namespace coast

#include "coast/optim.hpp"

#include <cmath>

#include "coast/errors.hpp"

namespace coast {

void adam_step(ParamSet& params, const std::vector<NdArray>& grads,
               AdamState& state) {
  const std::size_t np = params.items.size();
  if (grads.size() != np)
    throw DimensionError("adam_step: gradient count != parameter count");

  if (state.m.empty()) {
    state.m.reserve(np);
    state.v.reserve(np);
    for (const auto& p : params.items) {
      state.m.emplace_back(p.value.shape());
      state.v.emplace_back(p.value.shape());
    }
  }

  for (std::size_t i = 0; i < np; ++i) {
    if (grads[i].shape() != params.items[i].value.shape())
      throw DimensionError("adam_step: gradient shape mismatch for " +
                           params.items[i].name);
    if (!grads[i].all_finite())
      throw NumericalError("adam_step: non-finite gradient for parameter " +
                           params.items[i].name);
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);

  for (std::size_t i = 0; i < np; ++i) {
    NdArray& p = params.items[i].value;
    NdArray& m = state.m[i];
    NdArray& v = state.v[i];
    const NdArray& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace coast

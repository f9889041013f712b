#include <cmath>

#include "aghmn/train.hpp"

namespace aghmn::train {

double global_norm(const ad::GradMap& grads) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.data()) sq += v * v;
  return std::sqrt(sq);
}

double clip_gradients(ad::GradMap& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_gradients: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.storage()) v *= scale;
  }
  return norm;
}

void adam_step(ad::ParamSet& params, const ad::GradMap& grads, OptState& state) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& [name, param] : params.entries()) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("adam_step: no gradient for '" + name + "'");
    const Tensor& g = it->second;
    ad::Var handle = param;
    Tensor& value = handle.mutable_value();
    if (g.shape() != value.shape()) {
      throw DimensionError("adam_step: gradient for '" + name + "' has " + shape_str(g.shape()) + ", parameter " +
                           shape_str(value.shape()));
    }
    auto [m_it, fresh_m] = state.m.try_emplace(name, Tensor(value.shape(), 0.0));
    auto [v_it, fresh_v] = state.v.try_emplace(name, Tensor(value.shape(), 0.0));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace aghmn::train

#include "catrinet/optimizer.hpp"

#include <cmath>

#include "catrinet/errors.hpp"

namespace catrinet {

Adam::Adam(ParameterStore& store, AdamConfig config) : store_(store), config_(config) {
  if (!(config_.lr > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 ||
      config_.beta2 < 0.0 || config_.beta2 >= 1.0 || !(config_.eps > 0.0) ||
      config_.clip_norm < 0.0) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  m_.resize(store_.size());
  v_.resize(store_.size());
  for (std::size_t i = 0; i < store_.size(); ++i) {
    m_[i].assign(store_.at(i).size(), 0.0);
    v_[i].assign(store_.at(i).size(), 0.0);
  }
}

double Adam::step() {
  if (store_.size() != m_.size()) throw ContractError("parameter store changed under Adam");
  double sq = 0.0;
  for (std::size_t i = 0; i < store_.size(); ++i)
    for (double g : store_.at(i).grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NonFiniteError("non-finite gradient norm");
  const double clip =
      (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < store_.size(); ++i) {
    Tensor& p = store_.at(i);
    if (!p.requires_grad()) continue;
    auto grad = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grad[k] * clip;
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  return norm;
}

}  // namespace catrinet

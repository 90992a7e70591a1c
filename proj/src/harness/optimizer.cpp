#include "warpdetect/harness/optimizer.hpp"

#include <cmath>

#include "warpdetect/errors.hpp"

namespace wd::harness {

void AdamWConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw ConfigError("betas must be in [0, 1)");
  }
  if (!(eps > 0) || weight_decay < 0) throw ConfigError("eps must be > 0 and weight_decay >= 0");
}

AdamW::AdamW(ParameterList params, const AdamWConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void AdamW::step(const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params_.size()) throw DimensionError("AdamW::step: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].second->data();
    const auto& g = grads[k];
    if (g.size() != w.size()) throw DimensionError("AdamW::step: gradient size mismatch");
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= cfg_.lr * cfg_.weight_decay * w[i];
      w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
}

}  // namespace wd::harness

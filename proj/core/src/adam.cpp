#include "bistnet/adam.hpp"

#include <cmath>

namespace bistnet {

void AdamOptions::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("adam: learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
}

Adam::Adam(AdamOptions options) : options_(options) { options_.validate(); }

std::map<std::string, Tensor> Adam::step(const std::map<std::string, Tensor>& params,
                                         const std::map<std::string, Tensor>& grads) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : params) {
    auto g_it = grads.find(name);
    if (g_it == grads.end()) {
      out[name] = p;
      continue;
    }
    if (g_it->second.shape() != p.shape()) {
      throw ShapeError("adam: gradient for " + name + " has shape " + shape_str(g_it->second.shape()));
    }
    const std::vector<double> g = g_it->second.to_vector();
    std::vector<double>& m = m_[name];
    std::vector<double>& v = v_[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    std::vector<double> value = p.to_vector();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      value[i] -= options_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
    out[name] = Tensor::from_values(p.shape(), value, p.dtype());
  }
  return out;
}

void Adam::store(Checkpoint& ckpt) const {
  ckpt.set("adam.step", Tensor::scalar(static_cast<double>(step_), DType::f64));
  for (const auto& [name, m] : m_) {
    ckpt.set("adam.m." + name, Tensor::from_values({m.size()}, m, DType::f64));
    ckpt.set("adam.v." + name, Tensor::from_values({m.size()}, v_.at(name), DType::f64));
  }
}

void Adam::load(const Checkpoint& ckpt) {
  m_.clear();
  v_.clear();
  step_ = ckpt.contains("adam.step") ? static_cast<std::uint64_t>(ckpt.at("adam.step").item()) : 0;
  for (const auto& [name, t] : ckpt.tensors()) {
    if (name.rfind("adam.m.", 0) == 0) {
      const std::string key = name.substr(7);
      m_[key] = t.to_vector();
      v_[key] = ckpt.at("adam.v." + key).to_vector();
    }
  }
}

}  // namespace bistnet

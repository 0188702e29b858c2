#include "cdppo/params.hpp"

#include <algorithm>
#include <cmath>

namespace cdppo {

Param& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Param p;
  p.grad = Tensor(value.shape());
  p.adam_m = Tensor(value.shape());
  p.adam_v = Tensor(value.shape());
  p.value = std::move(value);
  return entries_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : entries_) p.grad.fill(0.0);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : entries_) n += p.value.size();
  return n;
}

bool ParamStore::grads_all_zero() const {
  for (const auto& [_, p] : entries_) {
    for (double g : p.grad.data()) {
      if (g != 0.0) return false;
    }
  }
  return true;
}

ParamStore ParamStore::values_copy() const {
  ParamStore out;
  for (const auto& [name, p] : entries_) out.add(name, p.value);
  return out;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  for (const auto& [name, p] : store.entries()) {
    p.grad.require_finite("gradient of '" + name + "'");
  }
  for (auto& [_, p] : store.entries()) {
    ++p.step_count;
    const double t = static_cast<double>(p.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = p.adam_m.data();
    auto v = p.adam_v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p.grad.fill(0.0);
  }
}

}  // namespace cdppo

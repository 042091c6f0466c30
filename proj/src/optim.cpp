#include "tpnet/optim.hpp"

#include <cmath>

#include "tpnet/errors.hpp"

namespace tpnet {

namespace {

void ensure_slots(NamedTensors& slots, const ParameterSet& params) {
  if (!slots.empty()) return;
  for (const auto& [name, p] : params.items()) slots.emplace_back(name, Tensor(p.shape()));
}

void restore_slots(NamedTensors& slots, const NamedTensors& state, const std::string& prefix) {
  slots.clear();
  for (const auto& [name, t] : state)
    if (name.rfind(prefix, 0) == 0) slots.emplace_back(name.substr(prefix.size()), t);
}

NamedTensors export_slots(const NamedTensors& slots, const std::string& prefix) {
  NamedTensors out;
  for (const auto& [name, t] : slots) out.emplace_back(prefix + name, t);
  return out;
}

void check_alignment(const NamedTensors& slots, const ParameterSet& params) {
  const auto& items = params.items();
  if (slots.size() != items.size())
    throw CheckpointError("optimizer state has " + std::to_string(slots.size()) +
                          " buffers for " + std::to_string(items.size()) + " parameters");
  for (std::size_t i = 0; i < items.size(); ++i)
    if (slots[i].first != items[i].first || slots[i].second.shape() != items[i].second.shape())
      throw CheckpointError("optimizer buffer '" + slots[i].first + "' does not match parameter '" +
                            items[i].first + "'");
}

}  // namespace

void Sgd::step(ParameterSet& params, double lr) {
  ensure_slots(velocity_, params);
  check_alignment(velocity_, params);
  std::size_t i = 0;
  for (const auto& [name, p] : params.items()) {
    Var handle = p;
    Tensor& w = handle.mutable_value();
    Tensor& v = velocity_[i++].second;
    if (!handle.has_grad()) continue;
    const Tensor& g = p.node()->grad;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double grad = g[k] + weight_decay_ * w[k];
      v[k] = momentum_ * v[k] + grad;
      w[k] -= lr * v[k];
    }
  }
}

NamedTensors Sgd::state() const { return export_slots(velocity_, "sgd.velocity/"); }

void Sgd::load_state(const NamedTensors& state) {
  restore_slots(velocity_, state, "sgd.velocity/");
}

void Adam::step(ParameterSet& params, double lr) {
  ensure_slots(m_, params);
  ensure_slots(v_, params);
  check_alignment(m_, params);
  check_alignment(v_, params);
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t i = 0;
  for (const auto& [name, p] : params.items()) {
    Var handle = p;
    Tensor& w = handle.mutable_value();
    Tensor& m = m_[i].second;
    Tensor& v = v_[i].second;
    ++i;
    if (!handle.has_grad()) continue;
    const Tensor& g = p.node()->grad;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double grad = g[k] + weight_decay_ * w[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * grad;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * grad * grad;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

NamedTensors Adam::state() const {
  NamedTensors out = export_slots(m_, "adam.m/");
  auto v = export_slots(v_, "adam.v/");
  out.insert(out.end(), v.begin(), v.end());
  out.emplace_back("adam.t", Tensor({1, 1, 1, 1, 1}, static_cast<double>(t_)));
  return out;
}

void Adam::load_state(const NamedTensors& state) {
  restore_slots(m_, state, "adam.m/");
  restore_slots(v_, state, "adam.v/");
  t_ = 0;
  for (const auto& [name, t] : state)
    if (name == "adam.t") t_ = static_cast<long long>(t[0]);
}

}  // namespace tpnet

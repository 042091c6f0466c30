#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tpnet/nn.hpp"

namespace tpnet {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update from the gradients currently stored on `params`.
  virtual void step(ParameterSet& params, double lr) = 0;
  // Internal buffers, for checkpointing. Names are stable.
  virtual NamedTensors state() const = 0;
  virtual void load_state(const NamedTensors& state) = 0;
};

// p <- p - lr * v,  v <- momentum * v + (g + weight_decay * p)
class Sgd final : public Optimizer {
 public:
  explicit Sgd(double momentum = 0.9, double weight_decay = 0.0)
      : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(ParameterSet& params, double lr) override;
  NamedTensors state() const override;
  void load_state(const NamedTensors& state) override;

 private:
  double momentum_, weight_decay_;
  NamedTensors velocity_;
};

// Bias-corrected adaptive moments.
class Adam final : public Optimizer {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                double weight_decay = 0.0)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}
  void step(ParameterSet& params, double lr) override;
  NamedTensors state() const override;
  void load_state(const NamedTensors& state) override;

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  long long t_ = 0;
  NamedTensors m_, v_;
};

}  // namespace tpnet

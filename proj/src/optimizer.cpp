#include "d4d/optimizer.hpp"

#include <cmath>

namespace d4d {

bool Optimizer::step(const std::vector<ParamBlock*>& params) {
  if (cfg_.gradient_clip) {
    const double c = *cfg_.gradient_clip;
    for (ParamBlock* p : params) {
      for (double& g : p->grad.data) {
        if (g > c) g = c;
        else if (g < -c) g = -c;
        // NaN passes through untouched
      }
    }
  }
  for (std::size_t s = 0; s < params.size(); ++s) {
    update(s, params[s]->value, params[s]->grad);
  }
  bool finite = true;
  for (const ParamBlock* p : params) {
    for (double v : p->value.data) {
      if (!std::isfinite(v)) {
        finite = false;
        break;
      }
    }
    if (!finite) break;
  }
  return finite;
}

namespace {

class SgdOptimizer : public Optimizer {
 public:
  explicit SgdOptimizer(const TrainConfig& cfg) : Optimizer(cfg) {}

 protected:
  void update(std::size_t slot, Tensor& value, const Tensor& grad) override {
    if (slot >= velocity_.size()) velocity_.resize(slot + 1);
    if (velocity_[slot].numel() != grad.numel()) velocity_[slot] = Tensor::zeros(grad.shape);
    Tensor& v = velocity_[slot];
    const double m = cfg_.momentum;
    const double lr = cfg_.learning_rate;
    for (std::size_t i = 0; i < grad.numel(); ++i) {
      v[i] = m * v[i] + grad[i];
      value[i] -= lr * v[i];
    }
  }

 private:
  std::vector<Tensor> velocity_;
};

class AdamOptimizer : public Optimizer {
 public:
  explicit AdamOptimizer(const TrainConfig& cfg) : Optimizer(cfg) {}

 protected:
  void update(std::size_t slot, Tensor& value, const Tensor& grad) override {
    if (slot == 0) ++t_;  // one timestep per optimizer step
    if (slot >= m_.size()) {
      m_.resize(slot + 1);
      v_.resize(slot + 1);
    }
    if (m_[slot].numel() != grad.numel()) {
      m_[slot] = Tensor::zeros(grad.shape);
      v_[slot] = Tensor::zeros(grad.shape);
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.epsilon;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    Tensor& m = m_[slot];
    Tensor& v = v_[slot];
    for (std::size_t i = 0; i < grad.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
  }

 private:
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace

std::unique_ptr<Optimizer> Optimizer::make(const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::Sgd) return std::make_unique<SgdOptimizer>(cfg);
  return std::make_unique<AdamOptimizer>(cfg);
}

}  // namespace d4d

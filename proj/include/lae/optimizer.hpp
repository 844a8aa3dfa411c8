// Adam with the warm-up / inverse-sqrt learning rate schedule and global
// gradient-norm clipping.
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "lae/model.hpp"
#include "lae/tensor.hpp"
#include "lae/util.hpp"

namespace lae {

struct LrSchedule {
  double peak = 1e-3;
  int warmup = 500;

  // lr(step) = peak * min(step/warmup, sqrt(warmup/step)); peaks exactly at
  // step == warmup.
  double lr(int64_t step) const {
    if (step < 1) throw ConfigError("schedule step must be >= 1");
    return peak * std::min(double(step) / warmup, std::sqrt(double(warmup) / double(step)));
  }
};

template <typename Real>
void scale_grads(Model<Real>& model, Real factor) {
  for (auto& [name, p] : model.params())
    if (p.trainable)
      for (Real& g : p.grad.data) g *= factor;
}

// Scales gradients so their joint L2 norm is at most max_norm. The probe
// head is excluded from both the norm and the rescale: the probe is a
// gradient-isolated observer, and letting its loss perturb the shared clip
// factor would leak probe training into the encoder updates.
template <typename Real>
double clip_global_norm(Model<Real>& model, double max_norm) {
  double sq = 0;
  for (auto& [name, p] : model.params())
    if (p.trainable && name.rfind("probe.", 0) != 0)
      for (Real g : p.grad.data) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Real factor = Real(max_norm / norm);
    for (auto& [name, p] : model.params())
      if (p.trainable && name.rfind("probe.", 0) != 0)
        for (Real& g : p.grad.data) g *= factor;
  }
  return norm;
}

template <typename Real>
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  int64_t steps_taken() const { return t_; }

  void step(Model<Real>& model, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (auto& [name, p] : model.params()) {
      if (!p.trainable) continue;
      for (Real g : p.grad.data)
        if (!std::isfinite(g))
          throw NumericError("non-finite gradient in parameter " + name);
      auto& mom = moments_[name];
      if (mom.m.numel() == 0) {
        mom.m = TensorT<Real>::zeros_like(p.value);
        mom.v = TensorT<Real>::zeros_like(p.value);
      }
      for (size_t i = 0; i < p.value.data.size(); ++i) {
        const double g = p.grad.data[i];
        double m = beta1_ * double(mom.m.data[i]) + (1.0 - beta1_) * g;
        double v = beta2_ * double(mom.v.data[i]) + (1.0 - beta2_) * g * g;
        mom.m.data[i] = Real(m);
        mom.v.data[i] = Real(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p.value.data[i] -= Real(lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  struct Moments {
    TensorT<Real> m, v;
  };
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace lae

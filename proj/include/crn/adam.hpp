#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "crn/nn.hpp"
#include "crn/tensor.hpp"

namespace crn {

template <typename Real>
struct AdamState {
  Tensor<Real> m;
  Tensor<Real> v;
  int64_t t = 0;
};

// Bias-corrected Adam over a ParamStore. Grads are consumed and zeroed by
// each step.
template <typename Real>
class AdamOpt {
 public:
  explicit AdamOpt(ParamStore<Real>& ps, double lr = 2e-4, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8)
      : ps_(&ps), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    states_.resize(ps.size());
    for (size_t i = 0; i < ps.size(); ++i) {
      states_[i].m = Tensor<Real>::zeros(ps.at(i).value.shape);
      states_[i].v = Tensor<Real>::zeros(ps.at(i).value.shape);
    }
  }

  void step() {
    for (size_t i = 0; i < ps_->size(); ++i) {
      Param<Real>& p = ps_->at(i);
      AdamState<Real>& st = states_[i];
      st.t += 1;
      const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
      const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
      for (int64_t j = 0; j < p.value.size(); ++j) {
        const size_t k = static_cast<size_t>(j);
        const double g = static_cast<double>(p.grad.data[k]);
        const double m = beta1_ * static_cast<double>(st.m.data[k]) + (1.0 - beta1_) * g;
        const double v = beta2_ * static_cast<double>(st.v.data[k]) + (1.0 - beta2_) * g * g;
        st.m.data[k] = static_cast<Real>(m);
        st.v.data[k] = static_cast<Real>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p.value.data[k] -= static_cast<Real>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
      p.zero_grad();
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  size_t size() const { return states_.size(); }
  AdamState<Real>& state(size_t i) { return states_.at(i); }
  const AdamState<Real>& state(size_t i) const { return states_.at(i); }

 private:
  ParamStore<Real>* ps_;
  double lr_, beta1_, beta2_, eps_;
  std::vector<AdamState<Real>> states_;
};

}  // namespace crn

#include "layoutgen/optim.hpp"

#include <cmath>

#include "layoutgen/errors.hpp"

namespace layoutgen::num {

AdamState AdamState::init(const ParamStore& store, double lr) {
  AdamState s;
  s.lr = lr;
  s.m.reserve(store.size());
  s.v.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    s.m.push_back(Tensor::zeros(store.value(i).shape()));
    s.v.push_back(Tensor::zeros(store.value(i).shape()));
  }
  return s;
}

void adam_step(ParamStore& store, AdamState& state) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Tensor& g = store.grad(i);
    if (!g.all_finite())
      throw NumericError("numeric failure: non-finite gradient in parameter " + store.name(i));
    Tensor& p = store.value(i);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m.at(k) = state.beta1 * m.at(k) + (1.0 - state.beta1) * g.at(k);
      v.at(k) = state.beta2 * v.at(k) + (1.0 - state.beta2) * g.at(k) * g.at(k);
      p.at(k) -= state.lr * (m.at(k) / bc1) / (std::sqrt(v.at(k) / bc2) + state.eps);
    }
  }
  store.zero_grads();
}

void sgd_step(ParamStore& store, double lr) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Tensor& g = store.grad(i);
    if (!g.all_finite())
      throw NumericError("numeric failure: non-finite gradient in parameter " + store.name(i));
    Tensor& p = store.value(i);
    for (std::size_t k = 0; k < p.numel(); ++k) p.at(k) -= lr * g.at(k);
  }
  store.zero_grads();
}

GradCheckResult finite_diff_check(const std::function<double(bool with_grad)>& loss,
                                  ParamStore& store, double h) {
  store.zero_grads();
  loss(true);
  std::vector<Tensor> analytic;
  analytic.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) analytic.push_back(store.grad(i));
  store.zero_grads();

  GradCheckResult res;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor& p = store.value(i);
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const double orig = p.at(k);
      p.at(k) = orig + h;
      const double fp = loss(false);
      p.at(k) = orig - h;
      const double fm = loss(false);
      p.at(k) = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double ana = analytic[i].at(k);
      const double rel = std::abs(numeric - ana) / std::max(1e-8, std::abs(ana));
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = store.name(i);
        res.worst_coord = k;
      }
    }
  }
  return res;
}

}  // namespace layoutgen::num

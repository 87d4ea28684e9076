#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "layoutgen/tape.hpp"
#include "layoutgen/tensor.hpp"

namespace layoutgen::num {

// Adam with bias correction. Moments are aligned with the store by parameter
// index and are part of checkpoints, so interrupted training resumes exactly.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const ParamStore& store, double lr);
};

// One update over every parameter; zeroes gradients afterwards.
// Throws NumericError if any gradient is non-finite.
void adam_step(ParamStore& store, AdamState& state);

// Plain full-batch gradient descent step (used by the downstream classifier).
void sgd_step(ParamStore& store, double lr);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_coord = 0;
};

// Central-difference check of reverse-mode gradients. `loss` must be a
// deterministic function of the store; when `with_grad` is true it must also
// run backward() so gradients land in the store. Relative error per coordinate
// is |numeric - analytic| / max(1e-8, |analytic|).
GradCheckResult finite_diff_check(const std::function<double(bool with_grad)>& loss,
                                  ParamStore& store, double h);

}  // namespace layoutgen::num

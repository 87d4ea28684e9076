#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "layoutgen/tensor.hpp"

namespace layoutgen::num {

// Named parameters with a parallel gradient slot each. Iteration order is
// insertion order, which pins optimizer and serialization order.
class ParamStore {
 public:
  std::size_t add(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Tensor& value(std::size_t i) { return entries_[i].value; }
  const Tensor& value(std::size_t i) const { return entries_[i].value; }
  Tensor& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[index_of(name)].value; }
  Tensor& grad(std::size_t i) { return entries_[i].grad; }
  const Tensor& grad(std::size_t i) const { return entries_[i].grad; }
  Tensor& grad(const std::string& name) { return entries_[index_of(name)].grad; }

  void zero_grads();
  std::size_t total_coords() const;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Handle into a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
};

// Reverse-mode tape. Each recorded op stores its output value and a closure
// that scatters the output adjoint back to its inputs. A tape records one
// forward computation; backward() may be called multiple times and gradients
// accumulate into the bound ParamStore slots.
//
// Probabilities fed to the log-based losses are clamped to
// [kProbEps, 1 - kProbEps] so losses stay finite and reproducible.
class Tape {
 public:
  static constexpr double kProbEps = 1e-7;

  Var leaf(Tensor value);
  Var param(ParamStore& store, const std::string& name);

  // out[i,j] = sum_k x[i,k] W[k,j] + b[j]. Rank-1 x is treated as one row and
  // yields a rank-1 result.
  Var affine(Var x, Var w, Var b);

  Var relu(Var x);
  Var sigmoid(Var x);
  Var exp(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);

  // log(clamp(p)) and log(clamp(1 - p)), elementwise.
  Var log_prob(Var p);
  Var log_one_minus(Var p);

  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var x, std::vector<std::size_t> idx);
  Var scatter_add_rows(Var x, std::vector<std::size_t> idx, std::size_t n_rows);
  Var gather_elems(Var x, std::vector<std::size_t> idx);
  Var row_scale(Var x, Var s);  // x[m x d] rows scaled by s[m]
  Var mean_rows(Var x);         // [n x d] -> [d]
  Var softmax_rows(Var x);

  Var slice(Var x, std::size_t begin, std::size_t end);           // rank-1 range
  Var slice_rows(Var x, std::size_t begin, std::size_t end);      // rank-2 row range
  Var reshape(Var x, std::vector<std::size_t> shape);

  Var sum(Var x);
  Var mean(Var x);
  Var sum_squares(Var x);

  enum class Reduction { kMean, kSum };

  Var mse(Var pred, Var target);
  Var bce(Var prob, Var target, Reduction red = Reduction::kMean);
  // Sum over rows of -log p[row, label[row]].
  Var cross_entropy_rows(Var probs, std::vector<std::size_t> labels);
  Var kl_diag_gaussian(Var mu, Var log_var);

  // Per row (a,b,c,d) of sigmoid outputs, produce (x0,y0,x1,y1) with
  // x1 = min(1, max(a,b)+delta), x0 = min(min(a,b), x1-delta), same for y.
  // Guarantees 0 <= x0 < x1 <= 1 with a gap of at least delta.
  Var bbox_order(Var x, double delta);

  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  // Gradient captured by the most recent backward() (for tests).
  const Tensor& grad(Var v) const { return grads_[v.id]; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::function<void(Tape&, std::uint32_t)> backprop;  // may be empty (leaves)
    ParamStore* store = nullptr;
    std::size_t param_index = 0;
    bool is_param = false;
  };

  Var push(Tensor value, std::function<void(Tape&, std::uint32_t)> backprop);
  void accum(std::uint32_t id, const Tensor& g);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace layoutgen::num

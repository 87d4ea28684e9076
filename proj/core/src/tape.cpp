#include "layoutgen/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace layoutgen::num {

namespace {

// C[n x q] = A[n x p] * B[p x q]
Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  Tensor c = Tensor::zeros({n, q});
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.data() + i * p;
    double* cr = c.data() + i * q;
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = ar[k];
      if (aik == 0.0) continue;
      const double* br = b.data() + k * q;
      for (std::size_t j = 0; j < q; ++j) cr[j] += aik * br[j];
    }
  }
  return c;
}

// C[n x p] = A[n x q] * B^T, B is [p x q]
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), q = a.cols(), p = b.rows();
  Tensor c = Tensor::zeros({n, p});
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.data() + i * q;
    double* cr = c.data() + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      const double* br = b.data() + j * q;
      double acc = 0.0;
      for (std::size_t k = 0; k < q; ++k) acc += ar[k] * br[k];
      cr[j] = acc;
    }
  }
  return c;
}

// C[p x q] = A^T * B, A is [n x p], B is [n x q]
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  Tensor c = Tensor::zeros({p, q});
  for (std::size_t k = 0; k < n; ++k) {
    const double* ar = a.data() + k * p;
    const double* br = b.data() + k * q;
    for (std::size_t i = 0; i < p; ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      double* cr = c.data() + i * q;
      for (std::size_t j = 0; j < q; ++j) cr[j] += aki * br[j];
    }
  }
  return c;
}

double clamp_prob(double p) {
  return std::min(std::max(p, Tape::kProbEps), 1.0 - Tape::kProbEps);
}

bool inside_clamp(double p) { return p >= Tape::kProbEps && p <= 1.0 - Tape::kProbEps; }

}  // namespace

std::size_t ParamStore::add(const std::string& name, Tensor init) {
  if (has(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  const std::size_t idx = entries_.size();
  Tensor grad = Tensor::zeros(init.shape());
  entries_.push_back(Entry{name, std::move(init), std::move(grad)});
  index_.emplace(entries_.back().name, idx);
  return idx;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

std::size_t ParamStore::total_coords() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

Var Tape::push(Tensor value, std::function<void(Tape&, std::uint32_t)> backprop) {
  nodes_.push_back(Node{std::move(value), std::move(backprop), nullptr, 0, false});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::param(ParamStore& store, const std::string& name) {
  const std::size_t idx = store.index_of(name);
  Var v = push(store.value(idx), nullptr);
  nodes_[v.id].store = &store;
  nodes_[v.id].param_index = idx;
  nodes_[v.id].is_param = true;
  return v;
}

Var Tape::affine(Var xv, Var wv, Var bv) {
  const Tensor& x = value(xv);
  const Tensor& w = value(wv);
  const Tensor& b = value(bv);
  const bool x_rank1 = x.rank() == 1;
  const std::size_t n = x.rows(), p = x.cols();
  if (w.rank() != 2 || w.rows() != p)
    throw std::invalid_argument("affine: x " + x.shape_str() + " does not conform with W " +
                                w.shape_str());
  const std::size_t q = w.cols();
  if (b.numel() != q)
    throw std::invalid_argument("affine: bias " + b.shape_str() + " does not conform with W " +
                                w.shape_str());

  Tensor x2 = x_rank1 ? Tensor::matrix(1, p, x.raw()) : x;
  Tensor out = matmul_nn(x2, w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) out.at(i, j) += b.at(j);
  if (x_rank1) out = Tensor::row_vector(out.raw());

  auto bp = [xv, wv, bv, x_rank1, n, p, q](Tape& t, std::uint32_t self) {
    Tensor g = t.grads_[self];
    if (g.rank() == 1) g = Tensor::matrix(1, q, g.raw());
    const Tensor& xval = t.value(xv);
    Tensor x2b = x_rank1 ? Tensor::matrix(1, p, xval.raw()) : xval;
    Tensor dx = matmul_nt(g, t.value(wv));
    if (x_rank1) dx = Tensor::row_vector(dx.raw());
    t.accum(xv.id, dx);
    t.accum(wv.id, matmul_tn(x2b, g));
    Tensor db = Tensor::zeros({q});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < q; ++j) db.at(j) += g.at(i, j);
    t.accum(bv.id, db);
  };
  return push(std::move(out), bp);
}

Var Tape::relu(Var xv) {
  Tensor out = value(xv);
  for (double& v : out.raw()) v = v > 0.0 ? v : 0.0;
  auto bp = [xv](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& x = t.value(xv);
    Tensor dx = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) dx.at(i) = x.at(i) > 0.0 ? g.at(i) : 0.0;
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

Var Tape::sigmoid(Var xv) {
  Tensor out = value(xv);
  for (double& v : out.raw()) v = 1.0 / (1.0 + std::exp(-v));
  Var res = push(std::move(out), nullptr);
  nodes_[res.id].backprop = [xv, res](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.value(res);
    Tensor dx = Tensor::zeros(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) dx.at(i) = g.at(i) * y.at(i) * (1.0 - y.at(i));
    t.accum(xv.id, dx);
  };
  return res;
}

Var Tape::exp(Var xv) {
  Tensor out = value(xv);
  for (double& v : out.raw()) v = std::exp(v);
  Var res = push(std::move(out), nullptr);
  nodes_[res.id].backprop = [xv, res](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.value(res);
    Tensor dx = Tensor::zeros(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) dx.at(i) = g.at(i) * y.at(i);
    t.accum(xv.id, dx);
  };
  return res;
}

Var Tape::add(Var av, Var bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (!a.same_shape(b))
    throw std::invalid_argument("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  axpy(out, b);
  auto bp = [av, bv](Tape& t, std::uint32_t self) {
    t.accum(av.id, t.grads_[self]);
    t.accum(bv.id, t.grads_[self]);
  };
  return push(std::move(out), bp);
}

Var Tape::sub(Var av, Var bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (!a.same_shape(b))
    throw std::invalid_argument("sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) -= b.at(i);
  auto bp = [av, bv](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    t.accum(av.id, g);
    Tensor neg = g;
    for (double& v : neg.raw()) v = -v;
    t.accum(bv.id, neg);
  };
  return push(std::move(out), bp);
}

Var Tape::mul(Var av, Var bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (!a.same_shape(b))
    throw std::invalid_argument("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) *= b.at(i);
  auto bp = [av, bv](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& a2 = t.value(av);
    const Tensor& b2 = t.value(bv);
    Tensor da = Tensor::zeros(a2.shape());
    Tensor db = Tensor::zeros(b2.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      da.at(i) = g.at(i) * b2.at(i);
      db.at(i) = g.at(i) * a2.at(i);
    }
    t.accum(av.id, da);
    t.accum(bv.id, db);
  };
  return push(std::move(out), bp);
}

Var Tape::scale(Var av, double c) {
  Tensor out = value(av);
  for (double& v : out.raw()) v *= c;
  auto bp = [av, c](Tape& t, std::uint32_t self) {
    Tensor g = t.grads_[self];
    for (double& v : g.raw()) v *= c;
    t.accum(av.id, g);
  };
  return push(std::move(out), bp);
}

Var Tape::log_prob(Var pv) {
  Tensor out = value(pv);
  for (double& v : out.raw()) v = std::log(clamp_prob(v));
  auto bp = [pv](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& p = t.value(pv);
    Tensor dp = Tensor::zeros(p.shape());
    for (std::size_t i = 0; i < p.numel(); ++i)
      dp.at(i) = inside_clamp(p.at(i)) ? g.at(i) / clamp_prob(p.at(i)) : 0.0;
    t.accum(pv.id, dp);
  };
  return push(std::move(out), bp);
}

Var Tape::log_one_minus(Var pv) {
  Tensor out = value(pv);
  for (double& v : out.raw()) v = std::log(1.0 - clamp_prob(v));
  auto bp = [pv](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& p = t.value(pv);
    Tensor dp = Tensor::zeros(p.shape());
    for (std::size_t i = 0; i < p.numel(); ++i)
      dp.at(i) = inside_clamp(p.at(i)) ? -g.at(i) / (1.0 - clamp_prob(p.at(i))) : 0.0;
    t.accum(pv.id, dp);
  };
  return push(std::move(out), bp);
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t n = value(parts[0]).rows();
  std::size_t total = 0;
  for (Var p : parts) {
    if (value(p).rank() != 2 || value(p).rows() != n)
      throw std::invalid_argument("concat_cols: row counts differ");
    total += value(p).cols();
  }
  Tensor out = Tensor::zeros({n, total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(t.data() + i * t.cols(), t.data() + (i + 1) * t.cols(),
                out.data() + i * total + off);
    off += t.cols();
  }
  auto bp = [parts, n, total](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    std::size_t off2 = 0;
    for (Var p : parts) {
      const std::size_t c = t.value(p).cols();
      Tensor dp = Tensor::zeros({n, c});
      for (std::size_t i = 0; i < n; ++i)
        std::copy(g.data() + i * total + off2, g.data() + i * total + off2 + c,
                  dp.data() + i * c);
      t.accum(p.id, dp);
      off2 += c;
    }
  };
  return push(std::move(out), bp);
}

Var Tape::gather_rows(Var xv, std::vector<std::size_t> idx) {
  const Tensor& x = value(xv);
  const std::size_t d = x.cols();
  Tensor out = Tensor::zeros({idx.size(), d});
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(x.data() + idx[k] * d, x.data() + (idx[k] + 1) * d, out.data() + k * d);
  auto bp = [xv, idx = std::move(idx), d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    Tensor dx = Tensor::zeros(t.value(xv).shape());
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < d; ++j) dx.at(idx[k], j) += g.at(k, j);
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

Var Tape::scatter_add_rows(Var xv, std::vector<std::size_t> idx, std::size_t n_rows) {
  const Tensor& x = value(xv);
  if (x.rows() != idx.size()) throw std::invalid_argument("scatter_add_rows: index count mismatch");
  const std::size_t d = x.cols();
  Tensor out = Tensor::zeros({n_rows, d});
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::size_t j = 0; j < d; ++j) out.at(idx[k], j) += x.at(k, j);
  auto bp = [xv, idx = std::move(idx), d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    Tensor dx = Tensor::zeros(t.value(xv).shape());
    for (std::size_t k = 0; k < idx.size(); ++k)
      std::copy(g.data() + idx[k] * d, g.data() + (idx[k] + 1) * d, dx.data() + k * d);
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

Var Tape::gather_elems(Var xv, std::vector<std::size_t> idx) {
  const Tensor& x = value(xv);
  Tensor out = Tensor::zeros({idx.size()});
  for (std::size_t k = 0; k < idx.size(); ++k) out.at(k) = x.at(idx[k]);
  auto bp = [xv, idx = std::move(idx)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    Tensor dx = Tensor::zeros(t.value(xv).shape());
    for (std::size_t k = 0; k < idx.size(); ++k) dx.at(idx[k]) += g.at(k);
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

Var Tape::row_scale(Var xv, Var sv) {
  const Tensor& x = value(xv);
  const Tensor& s = value(sv);
  if (s.numel() != x.rows()) throw std::invalid_argument("row_scale: scale length mismatch");
  Tensor out = x;
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) *= s.at(i);
  auto bp = [xv, sv, d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& x2 = t.value(xv);
    const Tensor& s2 = t.value(sv);
    Tensor dx = Tensor::zeros(x2.shape());
    Tensor ds = Tensor::zeros(s2.shape());
    for (std::size_t i = 0; i < x2.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dx.at(i, j) = g.at(i, j) * s2.at(i);
        acc += g.at(i, j) * x2.at(i, j);
      }
      ds.at(i) = acc;
    }
    t.accum(xv.id, dx);
    t.accum(sv.id, ds);
  };
  return push(std::move(out), bp);
}

Var Tape::mean_rows(Var xv) {
  const Tensor& x = value(xv);
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros({d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(j) += x.at(i, j) / static_cast<double>(n);
  auto bp = [xv, n, d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    Tensor dx = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) dx.at(i, j) = g.at(j) / static_cast<double>(n);
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

Var Tape::softmax_rows(Var xv) {
  const Tensor& x = value(xv);
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out.at(i, j) = std::exp(x.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) /= z;
  }
  Var res = push(std::move(out), nullptr);
  nodes_[res.id].backprop = [xv, res, n, d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& p = t.value(res);
    Tensor dx = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g.at(i, j) * p.at(i, j);
      for (std::size_t j = 0; j < d; ++j) dx.at(i, j) = p.at(i, j) * (g.at(i, j) - dot);
    }
    t.accum(xv.id, dx);
  };
  return res;
}

Var Tape::slice(Var xv, std::size_t begin, std::size_t end) {
  const Tensor& x = value(xv);
  if (x.rank() != 1 || end > x.numel() || begin > end)
    throw std::invalid_argument("slice: bad range for " + x.shape_str());
  Tensor out = Tensor::zeros({end - begin});
  std::copy(x.data() + begin, x.data() + end, out.data());
  auto bp = [xv, begin, end](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    Tensor dx = Tensor::zeros(t.value(xv).shape());
    std::copy(g.data(), g.data() + (end - begin), dx.data() + begin);
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

Var Tape::slice_rows(Var xv, std::size_t begin, std::size_t end) {
  const Tensor& x = value(xv);
  if (x.rank() != 2 || end > x.rows() || begin > end)
    throw std::invalid_argument("slice_rows: bad range for " + x.shape_str());
  const std::size_t d = x.cols();
  Tensor out = Tensor::zeros({end - begin, d});
  std::copy(x.data() + begin * d, x.data() + end * d, out.data());
  auto bp = [xv, begin, end, d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    Tensor dx = Tensor::zeros(t.value(xv).shape());
    std::copy(g.data(), g.data() + (end - begin) * d, dx.data() + begin * d);
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

Var Tape::reshape(Var xv, std::vector<std::size_t> shape) {
  const Tensor& x = value(xv);
  Tensor out(shape, x.raw());
  auto bp = [xv](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    Tensor dx(t.value(xv).shape(), g.raw());
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

Var Tape::sum(Var xv) {
  const Tensor& x = value(xv);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
  auto bp = [xv](Tape& t, std::uint32_t self) {
    const double g = t.grads_[self].at(0);
    Tensor dx = Tensor::full(t.value(xv).shape(), g);
    t.accum(xv.id, dx);
  };
  return push(Tensor::row_vector({acc}), bp);
}

Var Tape::mean(Var xv) {
  const Tensor& x = value(xv);
  const double n = static_cast<double>(x.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
  auto bp = [xv, n](Tape& t, std::uint32_t self) {
    const double g = t.grads_[self].at(0) / n;
    Tensor dx = Tensor::full(t.value(xv).shape(), g);
    t.accum(xv.id, dx);
  };
  return push(Tensor::row_vector({acc / n}), bp);
}

Var Tape::sum_squares(Var xv) {
  const Tensor& x = value(xv);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i) * x.at(i);
  auto bp = [xv](Tape& t, std::uint32_t self) {
    const double g = t.grads_[self].at(0);
    const Tensor& x2 = t.value(xv);
    Tensor dx = Tensor::zeros(x2.shape());
    for (std::size_t i = 0; i < x2.numel(); ++i) dx.at(i) = 2.0 * g * x2.at(i);
    t.accum(xv.id, dx);
  };
  return push(Tensor::row_vector({acc}), bp);
}

Var Tape::mse(Var pv, Var tv) {
  const Tensor& p = value(pv);
  const Tensor& t0 = value(tv);
  if (!p.same_shape(t0))
    throw std::invalid_argument("mse: shape mismatch " + p.shape_str() + " vs " + t0.shape_str());
  const double n = static_cast<double>(p.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = p.at(i) - t0.at(i);
    acc += d * d;
  }
  auto bp = [pv, tv, n](Tape& t, std::uint32_t self) {
    const double g = t.grads_[self].at(0);
    const Tensor& p2 = t.value(pv);
    const Tensor& t2 = t.value(tv);
    Tensor dp = Tensor::zeros(p2.shape());
    Tensor dt = Tensor::zeros(p2.shape());
    for (std::size_t i = 0; i < p2.numel(); ++i) {
      const double d = 2.0 * g * (p2.at(i) - t2.at(i)) / n;
      dp.at(i) = d;
      dt.at(i) = -d;
    }
    t.accum(pv.id, dp);
    t.accum(tv.id, dt);
  };
  return push(Tensor::row_vector({acc / n}), bp);
}

Var Tape::bce(Var pv, Var tv, Reduction red) {
  const Tensor& p = value(pv);
  const Tensor& t0 = value(tv);
  if (!p.same_shape(t0))
    throw std::invalid_argument("bce: shape mismatch " + p.shape_str() + " vs " + t0.shape_str());
  const double n = red == Reduction::kMean ? static_cast<double>(p.numel()) : 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double ph = clamp_prob(p.at(i));
    acc -= t0.at(i) * std::log(ph) + (1.0 - t0.at(i)) * std::log(1.0 - ph);
  }
  auto bp = [pv, tv, n](Tape& t, std::uint32_t self) {
    const double g = t.grads_[self].at(0);
    const Tensor& p2 = t.value(pv);
    const Tensor& t2 = t.value(tv);
    Tensor dp = Tensor::zeros(p2.shape());
    for (std::size_t i = 0; i < p2.numel(); ++i) {
      if (!inside_clamp(p2.at(i))) continue;
      const double ph = clamp_prob(p2.at(i));
      dp.at(i) = g * (-t2.at(i) / ph + (1.0 - t2.at(i)) / (1.0 - ph)) / n;
    }
    t.accum(pv.id, dp);
  };
  return push(Tensor::row_vector({acc / n}), bp);
}

Var Tape::cross_entropy_rows(Var pv, std::vector<std::size_t> labels) {
  const Tensor& p = value(pv);
  if (p.rows() != labels.size())
    throw std::invalid_argument("cross_entropy_rows: label count mismatch");
  double acc = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) acc -= std::log(clamp_prob(p.at(r, labels[r])));
  auto bp = [pv, labels = std::move(labels)](Tape& t, std::uint32_t self) {
    const double g = t.grads_[self].at(0);
    const Tensor& p2 = t.value(pv);
    Tensor dp = Tensor::zeros(p2.shape());
    for (std::size_t r = 0; r < labels.size(); ++r) {
      const double v = p2.at(r, labels[r]);
      if (inside_clamp(v)) dp.at(r, labels[r]) = -g / clamp_prob(v);
    }
    t.accum(pv.id, dp);
  };
  return push(Tensor::row_vector({acc}), bp);
}

Var Tape::kl_diag_gaussian(Var muv, Var lvv) {
  const Tensor& mu = value(muv);
  const Tensor& lv = value(lvv);
  if (!mu.same_shape(lv))
    throw std::invalid_argument("kl_diag_gaussian: shape mismatch " + mu.shape_str() + " vs " +
                                lv.shape_str());
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.numel(); ++i)
    acc += mu.at(i) * mu.at(i) + std::exp(lv.at(i)) - 1.0 - lv.at(i);
  auto bp = [muv, lvv](Tape& t, std::uint32_t self) {
    const double g = t.grads_[self].at(0);
    const Tensor& mu2 = t.value(muv);
    const Tensor& lv2 = t.value(lvv);
    Tensor dmu = Tensor::zeros(mu2.shape());
    Tensor dlv = Tensor::zeros(lv2.shape());
    for (std::size_t i = 0; i < mu2.numel(); ++i) {
      dmu.at(i) = g * mu2.at(i);
      dlv.at(i) = g * 0.5 * (std::exp(lv2.at(i)) - 1.0);
    }
    t.accum(muv.id, dmu);
    t.accum(lvv.id, dlv);
  };
  return push(Tensor::row_vector({0.5 * acc}), bp);
}

Var Tape::bbox_order(Var xv, double delta) {
  const Tensor& x = value(xv);
  if (x.rank() != 2 || x.cols() != 4)
    throw std::invalid_argument("bbox_order: expected [n x 4], got " + x.shape_str());
  const std::size_t n = x.rows();
  Tensor out = Tensor::zeros({n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x.at(i, 0), b = x.at(i, 1), c = x.at(i, 2), d = x.at(i, 3);
    const double hx = std::min(1.0, std::max(a, b) + delta);
    const double hy = std::min(1.0, std::max(c, d) + delta);
    out.at(i, 0) = std::min(std::min(a, b), hx - delta);
    out.at(i, 1) = std::min(std::min(c, d), hy - delta);
    out.at(i, 2) = hx;
    out.at(i, 3) = hy;
  }
  auto bp = [xv, delta, n](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grads_[self];
    const Tensor& x2 = t.value(xv);
    Tensor dx = Tensor::zeros({n, 4});
    for (std::size_t i = 0; i < n; ++i) {
      // One axis at a time: inputs (u, v) -> outputs (lo, hi).
      for (int axis = 0; axis < 2; ++axis) {
        const std::size_t cu = axis == 0 ? 0 : 2, cv = axis == 0 ? 1 : 3;
        const std::size_t clo = axis == 0 ? 0 : 1, chi = axis == 0 ? 2 : 3;
        const double u = x2.at(i, cu), v = x2.at(i, cv);
        const std::size_t arg_max = u >= v ? cu : cv;
        const std::size_t arg_min = u <= v ? cu : cv;
        const double hi_raw = std::max(u, v) + delta;
        const double hi = std::min(1.0, hi_raw);
        double g_hi = g.at(i, chi);
        if (std::min(u, v) <= hi - delta)
          dx.at(i, arg_min) += g.at(i, clo);
        else
          g_hi += g.at(i, clo);  // lo rides the clamped hi - delta path
        if (hi_raw <= 1.0) dx.at(i, arg_max) += g_hi;
      }
    }
    t.accum(xv.id, dx);
  };
  return push(std::move(out), bp);
}

void Tape::accum(std::uint32_t id, const Tensor& g) {
  Tensor& slot = grads_[id];
  if (slot.numel() == 0)
    slot = g;
  else
    axpy(slot, g);
}

void Tape::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw std::invalid_argument("backward: invalid var");
  if (nodes_[loss.id].value.numel() != 1)
    throw std::invalid_argument("backward: loss is not a scalar, shape " +
                                nodes_[loss.id].value.shape_str());
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id] = Tensor::full(nodes_[loss.id].value.shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (grads_[i].numel() == 0) continue;
    Node& node = nodes_[i];
    if (node.backprop) node.backprop(*this, static_cast<std::uint32_t>(i));
    if (node.is_param) axpy(node.store->grad(node.param_index), grads_[i]);
  }
}

}  // namespace layoutgen::num

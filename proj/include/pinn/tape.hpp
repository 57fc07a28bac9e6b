#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pinn/activations.hpp"
#include "pinn/params.hpp"
#include "pinn/tensor.hpp"

namespace pinn {

// A variable carries the value plus univariate Taylor coefficients (plain
// derivatives, not scaled by factorials) with respect to one or more seeded
// input coordinates. Coefficient layout: [value, seed0 d1..dm0, seed1 d1..dm1,
// ...]. The value coefficient is shared across seeds; no mixed partials are
// tracked. Every primitive both evaluates eagerly and records itself, so one
// reverse sweep yields exact parameter gradients of any scalar built from any
// coefficient.

constexpr int kMaxJetOrder = 4;

struct SeedSpec {
  int coord = 0;
  int order = 1;
};

struct VarId {
  int i = -1;
  bool valid() const { return i >= 0; }
};

namespace detail {
inline constexpr double kBinom[5][5] = {{1, 0, 0, 0, 0},
                                        {1, 1, 0, 0, 0},
                                        {1, 2, 1, 0, 0},
                                        {1, 3, 3, 1, 0},
                                        {1, 4, 6, 4, 1}};
}

class Tape {
  enum class Op {
    constant,
    input,
    param,
    dense,
    linear_const,
    activation,
    add,
    sub,
    mul,
    scale,
    add_scalar,
    lerp,
    concat_cols,
    slice_cols,
    extract,
    mean_sq,
    group_sq_sum,
    dot_const,
    combine
  };

  struct Var {
    Op op = Op::constant;
    std::vector<int> orders;   // per-seed derivative orders; empty = plain value
    std::vector<Tensor> coef;  // 1 + sum(orders) tensors, identical shapes
    int a = -1, b = -1;
    int pid_w = -1, pid_s = -1, pid_b = -1, pid_alpha = -1;
    double c0 = 0.0;
    Act act = Act::identity;
    Tensor aux;                     // exp(s) for dense, const matrix, weights vector
    std::vector<int> group;        // group_sq_sum row groups
    int j0 = 0, j1 = 0;            // column slice bounds / extract coeff index
    std::vector<std::pair<double, int>> terms;  // combine
  };

 public:
  explicit Tape(ParamSet& params) : params_(&params) {}

  void clear() { vars_.clear(); }
  ParamSet& params() { return *params_; }

  int ncoef(VarId v) const { return static_cast<int>(vars_[v.i].coef.size()); }
  const std::vector<int>& orders(VarId v) const { return vars_[v.i].orders; }
  const Tensor& value(VarId v) const { return vars_[v.i].coef[0]; }
  const Tensor& coef(VarId v, int c) const { return vars_[v.i].coef[static_cast<std::size_t>(c)]; }
  double scalar_value(VarId v) const { return vars_[v.i].coef[0][0]; }

  /// Coefficient index of the k-th derivative along seed block s (k >= 1).
  int coef_index(VarId v, int s, int k) const {
    const auto& ords = vars_[v.i].orders;
    if (s < 0 || s >= static_cast<int>(ords.size()) || k < 1 || k > ords[static_cast<std::size_t>(s)])
      throw std::invalid_argument("coef_index: no such derivative");
    int off = 1;
    for (int j = 0; j < s; ++j) off += ords[static_cast<std::size_t>(j)];
    return off + k - 1;
  }

  VarId constant(Tensor v) {
    Var n;
    n.op = Op::constant;
    n.coef.push_back(std::move(v));
    return push(std::move(n));
  }

  /// Jet with caller-supplied coefficients (no gradient flows into it).
  VarId constant_jet(std::vector<int> orders, std::vector<Tensor> coef) {
    if (coef.size() != static_cast<std::size_t>(1 + total_order(orders)))
      throw std::invalid_argument("constant_jet: coefficient count mismatch");
    for (const auto& c : coef)
      if (!c.same_shape(coef[0])) throw std::invalid_argument("constant_jet: shape mismatch");
    Var n;
    n.op = Op::constant;
    n.orders = std::move(orders);
    n.coef = std::move(coef);
    return push(std::move(n));
  }

  /// A parameter as a plain variable; adjoints accumulate into its gradient.
  VarId param(int pid) {
    Var n;
    n.op = Op::param;
    n.pid_w = pid;
    n.coef.push_back(params_->value(pid));
    return push(std::move(n));
  }

  /// Batch of input coordinates with selected columns seeded for derivatives.
  VarId input_jet(const Tensor& coords, const std::vector<SeedSpec>& seeds) {
    Var n;
    n.op = Op::input;
    n.coef.push_back(coords);
    for (const auto& s : seeds) {
      if (s.order < 1 || s.order > kMaxJetOrder)
        throw std::invalid_argument("input_jet: seed order out of range");
      if (s.coord < 0 || s.coord >= coords.cols())
        throw std::invalid_argument("input_jet: seed coordinate out of range");
      n.orders.push_back(s.order);
      Tensor d1 = Tensor::zeros(coords.shape());
      for (std::int64_t r = 0; r < coords.rows(); ++r) d1(r, s.coord) = 1.0;
      n.coef.push_back(std::move(d1));
      for (int k = 2; k <= s.order; ++k) n.coef.push_back(Tensor::zeros(coords.shape()));
    }
    return push(std::move(n));
  }

  /// y = x W^T (+ b on the value), W = diag(exp(s)) V when s is present.
  VarId dense(VarId x, int pid_w, int pid_s = -1, int pid_b = -1) {
    const Var& xv = vars_[x.i];
    const Tensor& V = params_->value(pid_w);
    if (xv.coef[0].cols() != V.cols())
      throw std::invalid_argument("dense: input width does not match weight");
    Var n;
    n.op = Op::dense;
    n.a = x.i;
    n.pid_w = pid_w;
    n.pid_s = pid_s;
    n.pid_b = pid_b;
    n.orders = xv.orders;
    std::int64_t rows = xv.coef[0].rows(), q = V.rows();
    if (pid_s >= 0) {
      const Tensor& s = params_->value(pid_s);
      n.aux = Tensor({q});
      for (std::int64_t i = 0; i < q; ++i) n.aux[i] = std::exp(s[i]);
    }
    for (std::size_t c = 0; c < xv.coef.size(); ++c) {
      Tensor y({rows, q});
      y.mat().noalias() = xv.coef[c].mat() * V.mat().transpose();
      if (pid_s >= 0)
        y.mat().array().rowwise() *=
            Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>>(n.aux.data(), q);
      if (pid_b >= 0 && c == 0) {
        const Tensor& b = params_->value(pid_b);
        y.mat().rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), q);
      }
      n.coef.push_back(std::move(y));
    }
    return push(std::move(n));
  }

  /// y = x F^T with a frozen matrix (no gradient into F).
  VarId linear_const(VarId x, const Tensor& f) {
    const Var& xv = vars_[x.i];
    if (xv.coef[0].cols() != f.cols())
      throw std::invalid_argument("linear_const: width mismatch");
    Var n;
    n.op = Op::linear_const;
    n.a = x.i;
    n.aux = f;
    n.orders = xv.orders;
    for (const auto& xc : xv.coef) {
      Tensor y({xc.rows(), f.rows()});
      y.mat().noalias() = xc.mat() * f.mat().transpose();
      n.coef.push_back(std::move(y));
    }
    return push(std::move(n));
  }

  VarId activation(VarId x, Act a) {
    const Var& xv = vars_[x.i];
    Var n;
    n.op = Op::activation;
    n.a = x.i;
    n.act = a;
    n.orders = xv.orders;
    n.coef.resize(xv.coef.size());
    for (auto& t : n.coef) t = Tensor::zeros(xv.coef[0].shape());
    apply_activation(xv, n, /*forward=*/true, nullptr, nullptr);
    return push(std::move(n));
  }

  VarId add(VarId a, VarId b) { return binary_linear(a, b, 1.0, Op::add); }
  VarId sub(VarId a, VarId b) { return binary_linear(a, b, -1.0, Op::sub); }

  /// Elementwise product with the Leibniz rule applied per seed block.
  VarId mul(VarId a, VarId b) {
    const Var& av = vars_[a.i];
    const Var& bv = vars_[b.i];
    if (!av.coef[0].same_shape(bv.coef[0])) throw std::invalid_argument("mul: shape mismatch");
    Var n;
    n.op = Op::mul;
    n.a = a.i;
    n.b = b.i;
    n.orders = merged_orders(av.orders, bv.orders);
    n.coef.resize(1 + total_order(n.orders));
    for (auto& t : n.coef) t = Tensor::zeros(av.coef[0].shape());
    std::int64_t m = av.coef[0].numel();
    ew_mul(n.coef[0].data(), av.coef[0].data(), bv.coef[0].data(), m);
    for (std::size_t s = 0; s < n.orders.size(); ++s) {
      for (int k = 1; k <= n.orders[s]; ++k) {
        double* c = coef_ptr(n, static_cast<int>(s), k);
        for (int j = 0; j <= k; ++j) {
          const double* aj = coef_ptr_or_null(av, static_cast<int>(s), j);
          const double* bj = coef_ptr_or_null(bv, static_cast<int>(s), k - j);
          if (!aj || !bj) continue;
          ew_axpy_prod(c, detail::kBinom[k][j], aj, bj, m);
        }
      }
    }
    return push(std::move(n));
  }

  VarId scale(VarId x, double k) {
    const Var& xv = vars_[x.i];
    Var n;
    n.op = Op::scale;
    n.a = x.i;
    n.c0 = k;
    n.orders = xv.orders;
    for (const auto& xc : xv.coef) {
      Tensor y = xc;
      for (std::int64_t i = 0; i < y.numel(); ++i) y[i] *= k;
      n.coef.push_back(std::move(y));
    }
    return push(std::move(n));
  }

  VarId add_scalar(VarId x, double k) {
    const Var& xv = vars_[x.i];
    Var n;
    n.op = Op::add_scalar;
    n.a = x.i;
    n.c0 = k;
    n.orders = xv.orders;
    n.coef = xv.coef;
    for (std::int64_t i = 0; i < n.coef[0].numel(); ++i) n.coef[0][i] += k;
    return push(std::move(n));
  }

  /// y = alpha * h + (1 - alpha) * x with a trainable scalar alpha.
  /// alpha == 0 reproduces x bitwise.
  VarId lerp(int pid_alpha, VarId h, VarId x) {
    const Var& hv = vars_[h.i];
    const Var& xv = vars_[x.i];
    if (hv.orders != xv.orders || !hv.coef[0].same_shape(xv.coef[0]))
      throw std::invalid_argument("lerp: operand mismatch");
    double alpha = params_->value(pid_alpha)[0];
    Var n;
    n.op = Op::lerp;
    n.a = h.i;
    n.b = x.i;
    n.pid_alpha = pid_alpha;
    n.orders = hv.orders;
    for (std::size_t c = 0; c < hv.coef.size(); ++c) {
      Tensor y = Tensor::zeros(hv.coef[0].shape());
      const double* hp = hv.coef[c].data();
      const double* xp = xv.coef[c].data();
      double* yp = y.data();
      if (alpha == 0.0) {
        std::copy(xp, xp + y.numel(), yp);
      } else {
        for (std::int64_t i = 0; i < y.numel(); ++i) yp[i] = alpha * hp[i] + (1.0 - alpha) * xp[i];
      }
      n.coef.push_back(std::move(y));
    }
    return push(std::move(n));
  }

  VarId concat_cols(VarId a, VarId b) {
    const Var& av = vars_[a.i];
    const Var& bv = vars_[b.i];
    if (av.orders != bv.orders || av.coef[0].rows() != bv.coef[0].rows())
      throw std::invalid_argument("concat_cols: operand mismatch");
    Var n;
    n.op = Op::concat_cols;
    n.a = a.i;
    n.b = b.i;
    n.orders = av.orders;
    std::int64_t rows = av.coef[0].rows(), ca = av.coef[0].cols(), cb = bv.coef[0].cols();
    for (std::size_t c = 0; c < av.coef.size(); ++c) {
      Tensor y({rows, ca + cb});
      y.mat().leftCols(ca) = av.coef[c].mat();
      y.mat().rightCols(cb) = bv.coef[c].mat();
      n.coef.push_back(std::move(y));
    }
    return push(std::move(n));
  }

  VarId slice_cols(VarId x, std::int64_t j0, std::int64_t j1) {
    const Var& xv = vars_[x.i];
    if (j0 < 0 || j1 > xv.coef[0].cols() || j0 >= j1)
      throw std::invalid_argument("slice_cols: bad range");
    Var n;
    n.op = Op::slice_cols;
    n.a = x.i;
    n.j0 = static_cast<int>(j0);
    n.j1 = static_cast<int>(j1);
    n.orders = xv.orders;
    for (const auto& xc : xv.coef) {
      Tensor y({xc.rows(), j1 - j0});
      y.mat() = xc.mat().middleCols(j0, j1 - j0);
      n.coef.push_back(std::move(y));
    }
    return push(std::move(n));
  }

  /// k-th derivative along seed block s as a plain variable (k = 0: the value).
  VarId extract(VarId x, int s, int k) {
    int idx = (k == 0) ? 0 : coef_index(x, s, k);
    Var n;
    n.op = Op::extract;
    n.a = x.i;
    n.j0 = idx;
    n.coef.push_back(vars_[x.i].coef[static_cast<std::size_t>(idx)]);
    return push(std::move(n));
  }

  /// Mean of squared entries, normalized by row count: sum(x^2) / rows.
  VarId mean_sq(VarId x) {
    const Var& xv = vars_[x.i];
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.coef[0].numel(); ++i) acc += xv.coef[0][i] * xv.coef[0][i];
    Var n;
    n.op = Op::mean_sq;
    n.a = x.i;
    n.coef.push_back(Tensor({1, 1}, {acc / static_cast<double>(xv.coef[0].rows())}));
    return push(std::move(n));
  }

  /// Per-group sums of squares over rows of a column variable.
  VarId group_sq_sum(VarId x, std::vector<int> group, int ngroups) {
    const Var& xv = vars_[x.i];
    if (static_cast<std::int64_t>(group.size()) != xv.coef[0].rows())
      throw std::invalid_argument("group_sq_sum: group size mismatch");
    Tensor out({static_cast<std::int64_t>(ngroups), 1});
    std::int64_t cols = xv.coef[0].cols();
    for (std::int64_t r = 0; r < xv.coef[0].rows(); ++r) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < cols; ++c) acc += xv.coef[0](r, c) * xv.coef[0](r, c);
      out[group[static_cast<std::size_t>(r)]] += acc;
    }
    Var n;
    n.op = Op::group_sq_sum;
    n.a = x.i;
    n.group = std::move(group);
    n.coef.push_back(std::move(out));
    return push(std::move(n));
  }

  /// factor * sum_i w[i] * x[i] as a scalar; w is a constant vector.
  VarId dot_const(VarId x, Tensor w, double factor) {
    const Var& xv = vars_[x.i];
    if (w.numel() != xv.coef[0].numel()) throw std::invalid_argument("dot_const: size mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < w.numel(); ++i) acc += w[i] * xv.coef[0][i];
    Var n;
    n.op = Op::dot_const;
    n.a = x.i;
    n.c0 = factor;
    n.aux = std::move(w);
    n.coef.push_back(Tensor({1, 1}, {acc * factor}));
    return push(std::move(n));
  }

  /// Linear combination of same-shaped plain variables.
  VarId combine(const std::vector<std::pair<double, VarId>>& terms) {
    if (terms.empty()) throw std::invalid_argument("combine: empty");
    Var n;
    n.op = Op::combine;
    Tensor acc = Tensor::zeros(vars_[terms[0].second.i].coef[0].shape());
    for (const auto& [k, v] : terms) {
      const Tensor& t = vars_[v.i].coef[0];
      if (!t.same_shape(acc)) throw std::invalid_argument("combine: shape mismatch");
      for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] += k * t[i];
      n.terms.emplace_back(k, v.i);
    }
    n.coef.push_back(std::move(acc));
    return push(std::move(n));
  }

  Grads backward(VarId out) {
    Tensor seed = Tensor::full(vars_[out.i].coef[0].shape(), 0.0);
    if (seed.numel() != 1) throw std::invalid_argument("backward: output is not scalar");
    seed[0] = 1.0;
    return backward(out, seed);
  }

  /// Reverse sweep from `out` with a caller-supplied adjoint of its value.
  Grads backward(VarId out, const Tensor& seed) {
    if (!seed.same_shape(vars_[out.i].coef[0]))
      throw std::invalid_argument("backward: seed shape mismatch");
    Grads grads(*params_);
    std::vector<std::vector<Tensor>> adj(vars_.size());
    touch_adj(adj, out.i);
    add_into(adj[static_cast<std::size_t>(out.i)][0], seed);
    for (int i = out.i; i >= 0; --i) {
      if (adj[static_cast<std::size_t>(i)].empty()) continue;
      step_backward(i, adj, grads);
      adj[static_cast<std::size_t>(i)].clear();
      adj[static_cast<std::size_t>(i)].shrink_to_fit();
    }
    return grads;
  }

 private:
  VarId push(Var&& v) {
    vars_.push_back(std::move(v));
    return VarId{static_cast<int>(vars_.size()) - 1};
  }

  static int total_order(const std::vector<int>& o) {
    int t = 0;
    for (int x : o) t += x;
    return t;
  }

  static std::vector<int> merged_orders(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a != b) throw std::invalid_argument("jet op: incompatible seed structures");
    return a;
  }

  // Pointer to coefficient (s, k) with k = 0 meaning the shared value.
  static double* coef_ptr(Var& v, int s, int k) {
    if (k == 0) return v.coef[0].data();
    int off = 1;
    for (int j = 0; j < s; ++j) off += v.orders[static_cast<std::size_t>(j)];
    return v.coef[static_cast<std::size_t>(off + k - 1)].data();
  }
  static const double* coef_ptr_or_null(const Var& v, int s, int k) {
    if (k == 0) return v.coef[0].data();
    if (v.orders.empty() || k > v.orders[static_cast<std::size_t>(s)]) return nullptr;
    int off = 1;
    for (int j = 0; j < s; ++j) off += v.orders[static_cast<std::size_t>(j)];
    return v.coef[static_cast<std::size_t>(off + k - 1)].data();
  }

  static void ew_mul(double* c, const double* a, const double* b, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
  }
  static void ew_axpy_prod(double* c, double k, const double* a, const double* b, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) c[i] += k * a[i] * b[i];
  }

  VarId binary_linear(VarId a, VarId b, double sign, Op op) {
    const Var& av = vars_[a.i];
    const Var& bv = vars_[b.i];
    if (!av.coef[0].same_shape(bv.coef[0]))
      throw std::invalid_argument("add/sub: shape mismatch");
    Var n;
    n.op = op;
    n.a = a.i;
    n.b = b.i;
    n.orders = merged_orders(av.orders, bv.orders);
    int nc = 1 + total_order(n.orders);
    n.coef.resize(static_cast<std::size_t>(nc));
    for (auto& t : n.coef) t = Tensor::zeros(av.coef[0].shape());
    std::int64_t m = av.coef[0].numel();
    for (int c = 0; c < nc; ++c) {
      const double* ap = flat_coef_or_null(av, n.orders, c);
      const double* bp = flat_coef_or_null(bv, n.orders, c);
      double* yp = n.coef[static_cast<std::size_t>(c)].data();
      for (std::int64_t i = 0; i < m; ++i)
        yp[i] = (ap ? ap[i] : 0.0) + sign * (bp ? bp[i] : 0.0);
    }
    return push(std::move(n));
  }

  // Coefficient c of a variable under the merged layout; null when the
  // variable is plain and c > 0.
  static const double* flat_coef_or_null(const Var& v, const std::vector<int>& merged, int c) {
    if (c == 0) return v.coef[0].data();
    if (v.orders.empty()) return nullptr;
    if (v.orders != merged) throw std::invalid_argument("jet op: incompatible seed structures");
    return v.coef[static_cast<std::size_t>(c)].data();
  }

  void touch_adj(std::vector<std::vector<Tensor>>& adj, int i) {
    auto& slot = adj[static_cast<std::size_t>(i)];
    if (!slot.empty()) return;
    slot.reserve(vars_[static_cast<std::size_t>(i)].coef.size());
    for (const auto& c : vars_[static_cast<std::size_t>(i)].coef)
      slot.push_back(Tensor::zeros(c.shape()));
  }

  static void add_into(Tensor& dst, const Tensor& src) {
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
  }

  // Applies the composition rule sigma(jet) per seed block. In forward mode
  // fills out.coef from in. In backward mode accumulates input adjoints and
  // recomputes derivative tables one order higher.
  void apply_activation(const Var& in, Var& out, bool forward,
                        const std::vector<Tensor>* out_adj, std::vector<Tensor>* in_adj) {
    int maxord = 0;
    for (int o : in.orders) maxord = std::max(maxord, o);
    int kmax = forward ? maxord : maxord + 1;
    std::int64_t n = in.coef[0].numel();
    std::vector<Tensor> D(static_cast<std::size_t>(kmax + 1));
    for (auto& t : D) t = Tensor::zeros(in.coef[0].shape());
    {
      const double* x0 = in.coef[0].data();
      double d[6];
      for (std::int64_t i = 0; i < n; ++i) {
        act_derivs(out.act, x0[i], kmax, d);
        for (int k = 0; k <= kmax; ++k) D[static_cast<std::size_t>(k)][i] = d[k];
      }
    }
    auto dk = [&](int k) { return D[static_cast<std::size_t>(k)].data(); };

    if (forward) {
      std::copy(dk(0), dk(0) + n, out.coef[0].data());
      for (std::size_t s = 0; s < in.orders.size(); ++s) {
        int m = in.orders[s];
        const double* x1 = coef_ptr_or_null(in, static_cast<int>(s), 1);
        const double* x2 = m >= 2 ? coef_ptr_or_null(in, static_cast<int>(s), 2) : nullptr;
        const double* x3 = m >= 3 ? coef_ptr_or_null(in, static_cast<int>(s), 3) : nullptr;
        const double* x4 = m >= 4 ? coef_ptr_or_null(in, static_cast<int>(s), 4) : nullptr;
        double* y1 = coef_ptr(out, static_cast<int>(s), 1);
        for (std::int64_t i = 0; i < n; ++i) y1[i] = dk(1)[i] * x1[i];
        if (m >= 2) {
          double* y2 = coef_ptr(out, static_cast<int>(s), 2);
          for (std::int64_t i = 0; i < n; ++i)
            y2[i] = dk(1)[i] * x2[i] + dk(2)[i] * x1[i] * x1[i];
        }
        if (m >= 3) {
          double* y3 = coef_ptr(out, static_cast<int>(s), 3);
          for (std::int64_t i = 0; i < n; ++i)
            y3[i] = dk(1)[i] * x3[i] + 3.0 * dk(2)[i] * x1[i] * x2[i] +
                    dk(3)[i] * x1[i] * x1[i] * x1[i];
        }
        if (m >= 4) {
          double* y4 = coef_ptr(out, static_cast<int>(s), 4);
          for (std::int64_t i = 0; i < n; ++i) {
            double a = x1[i], b = x2[i];
            y4[i] = dk(1)[i] * x4[i] + dk(2)[i] * (4.0 * a * x3[i] + 3.0 * b * b) +
                    6.0 * dk(3)[i] * a * a * b + dk(4)[i] * a * a * a * a;
          }
        }
      }
      return;
    }

    // Backward: ybar-weighted Jacobian-transpose of the composition above.
    // d(y_k)/d(x0) replaces each table entry D_j by D_{j+1}.
    const std::vector<Tensor>& yb = *out_adj;
    std::vector<Tensor>& xb = *in_adj;
    {
      const double* y0b = yb[0].data();
      double* x0b = xb[0].data();
      for (std::int64_t i = 0; i < n; ++i) x0b[i] += y0b[i] * dk(1)[i];
    }
    for (std::size_t s = 0; s < in.orders.size(); ++s) {
      int m = in.orders[s];
      const double* x1 = coef_ptr_or_null(in, static_cast<int>(s), 1);
      const double* x2 = m >= 2 ? coef_ptr_or_null(in, static_cast<int>(s), 2) : nullptr;
      const double* x3 = m >= 3 ? coef_ptr_or_null(in, static_cast<int>(s), 3) : nullptr;
      const double* x4 = m >= 4 ? coef_ptr_or_null(in, static_cast<int>(s), 4) : nullptr;
      auto ybk = [&](int k) {
        int off = 1;
        for (std::size_t j = 0; j < s; ++j) off += in.orders[j];
        return yb[static_cast<std::size_t>(off + k - 1)].data();
      };
      auto xbk = [&](int k) {
        if (k == 0) return xb[0].data();
        int off = 1;
        for (std::size_t j = 0; j < s; ++j) off += in.orders[j];
        return xb[static_cast<std::size_t>(off + k - 1)].data();
      };
      for (std::int64_t i = 0; i < n; ++i) {
        double d1 = dk(1)[i], d2 = dk(2)[i];
        double g0 = 0.0;
        double y1b = ybk(1)[i];
        g0 += y1b * d2 * x1[i];
        double g1 = y1b * d1;
        double g2 = 0.0, g3 = 0.0, g4 = 0.0;
        if (m >= 2) {
          double d3 = dk(3)[i];
          double y2b = ybk(2)[i];
          g0 += y2b * (d2 * x2[i] + d3 * x1[i] * x1[i]);
          g1 += y2b * 2.0 * d2 * x1[i];
          g2 += y2b * d1;
          if (m >= 3) {
            double d4 = dk(4)[i];
            double y3b = ybk(3)[i];
            g0 += y3b * (d2 * x3[i] + 3.0 * d3 * x1[i] * x2[i] + d4 * x1[i] * x1[i] * x1[i]);
            g1 += y3b * (3.0 * d2 * x2[i] + 3.0 * d3 * x1[i] * x1[i]);
            g2 += y3b * 3.0 * d2 * x1[i];
            g3 += y3b * d1;
            if (m >= 4) {
              double d5 = dk(5)[i];
              double y4b = ybk(4)[i];
              double a = x1[i], b = x2[i];
              g0 += y4b * (d2 * x4[i] + d3 * (4.0 * a * x3[i] + 3.0 * b * b) +
                           6.0 * d4 * a * a * b + d5 * a * a * a * a);
              g1 += y4b * (4.0 * d2 * x3[i] + 12.0 * d3 * a * b + 4.0 * d4 * a * a * a);
              g2 += y4b * (6.0 * d2 * b + 6.0 * d3 * a * a);
              g3 += y4b * 4.0 * d2 * a;
              g4 += y4b * d1;
            }
          }
        }
        xbk(0)[i] += g0;
        xbk(1)[i] += g1;
        if (m >= 2) xbk(2)[i] += g2;
        if (m >= 3) xbk(3)[i] += g3;
        if (m >= 4) xbk(4)[i] += g4;
      }
    }
  }

  void step_backward(int i, std::vector<std::vector<Tensor>>& adj, Grads& grads) {
    Var& v = vars_[static_cast<std::size_t>(i)];
    const std::vector<Tensor>& yb = adj[static_cast<std::size_t>(i)];
    switch (v.op) {
      case Op::constant:
      case Op::input:
        return;
      case Op::param: {
        add_into(grads.g[static_cast<std::size_t>(v.pid_w)], yb[0]);
        return;
      }
      case Op::dense: {
        Var& xv = vars_[static_cast<std::size_t>(v.a)];
        touch_adj(adj, v.a);
        auto& xb = adj[static_cast<std::size_t>(v.a)];
        const Tensor& V = params_->value(v.pid_w);
        Tensor& gV = grads.g[static_cast<std::size_t>(v.pid_w)];
        std::int64_t q = V.rows();
        bool rwf = v.pid_s >= 0;
        Tensor scaled;  // ybar with columns scaled by exp(s)
        for (std::size_t c = 0; c < yb.size(); ++c) {
          const Tensor* yc = &yb[c];
          if (rwf) {
            scaled = yb[c];
            scaled.mat().array().rowwise() *=
                Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>>(v.aux.data(), q);
            yc = &scaled;
          }
          xb[c].mat().noalias() += yc->mat() * V.mat();
          gV.mat().noalias() += yc->mat().transpose() * xv.coef[c].mat();
        }
        if (rwf) {
          Tensor& gs = grads.g[static_cast<std::size_t>(v.pid_s)];
          const Tensor* b = v.pid_b >= 0 ? &params_->value(v.pid_b) : nullptr;
          for (std::size_t c = 0; c < yb.size(); ++c) {
            const Tensor& y = v.coef[c];
            const Tensor& g = yb[c];
            for (std::int64_t r = 0; r < y.rows(); ++r)
              for (std::int64_t j = 0; j < q; ++j) {
                double pre = y(r, j) - ((c == 0 && b) ? (*b)[j] : 0.0);
                gs[j] += g(r, j) * pre;
              }
          }
        }
        if (v.pid_b >= 0) {
          Tensor& gb = grads.g[static_cast<std::size_t>(v.pid_b)];
          const Tensor& g0 = yb[0];
          for (std::int64_t r = 0; r < g0.rows(); ++r)
            for (std::int64_t j = 0; j < q; ++j) gb[j] += g0(r, j);
        }
        return;
      }
      case Op::linear_const: {
        touch_adj(adj, v.a);
        auto& xb = adj[static_cast<std::size_t>(v.a)];
        for (std::size_t c = 0; c < yb.size(); ++c)
          xb[c].mat().noalias() += yb[c].mat() * v.aux.mat();
        return;
      }
      case Op::activation: {
        touch_adj(adj, v.a);
        apply_activation(vars_[static_cast<std::size_t>(v.a)], v, /*forward=*/false, &yb,
                         &adj[static_cast<std::size_t>(v.a)]);
        return;
      }
      case Op::add:
      case Op::sub: {
        double sign = v.op == Op::add ? 1.0 : -1.0;
        touch_adj(adj, v.a);
        touch_adj(adj, v.b);
        accumulate_linear(vars_[static_cast<std::size_t>(v.a)], adj[static_cast<std::size_t>(v.a)],
                          v.orders, yb, 1.0);
        accumulate_linear(vars_[static_cast<std::size_t>(v.b)], adj[static_cast<std::size_t>(v.b)],
                          v.orders, yb, sign);
        return;
      }
      case Op::mul: {
        const Var& av = vars_[static_cast<std::size_t>(v.a)];
        const Var& bv = vars_[static_cast<std::size_t>(v.b)];
        touch_adj(adj, v.a);
        touch_adj(adj, v.b);
        auto& ab = adj[static_cast<std::size_t>(v.a)];
        auto& bb = adj[static_cast<std::size_t>(v.b)];
        std::int64_t m = av.coef[0].numel();
        // value coefficient
        ew_axpy_prod(ab[0].data(), 1.0, yb[0].data(), bv.coef[0].data(), m);
        ew_axpy_prod(bb[0].data(), 1.0, yb[0].data(), av.coef[0].data(), m);
        for (std::size_t s = 0; s < v.orders.size(); ++s) {
          for (int k = 1; k <= v.orders[s]; ++k) {
            int off = 1;
            for (std::size_t j = 0; j < s; ++j) off += v.orders[j];
            const double* cb = yb[static_cast<std::size_t>(off + k - 1)].data();
            for (int j = 0; j <= k; ++j) {
              const double* bjv = coef_ptr_or_null(bv, static_cast<int>(s), k - j);
              const double* ajv = coef_ptr_or_null(av, static_cast<int>(s), j);
              double w = detail::kBinom[k][j];
              if (bjv) {
                double* dst = adj_coef_ptr(av, ab, static_cast<int>(s), j);
                if (dst) ew_axpy_prod(dst, w, cb, bjv, m);
              }
              if (ajv) {
                double* dst = adj_coef_ptr(bv, bb, static_cast<int>(s), k - j);
                if (dst) ew_axpy_prod(dst, w, cb, ajv, m);
              }
            }
          }
        }
        return;
      }
      case Op::scale: {
        touch_adj(adj, v.a);
        auto& xb = adj[static_cast<std::size_t>(v.a)];
        for (std::size_t c = 0; c < yb.size(); ++c) {
          const double* yp = yb[c].data();
          double* xp = xb[c].data();
          for (std::int64_t k = 0; k < yb[c].numel(); ++k) xp[k] += v.c0 * yp[k];
        }
        return;
      }
      case Op::add_scalar: {
        touch_adj(adj, v.a);
        auto& xb = adj[static_cast<std::size_t>(v.a)];
        for (std::size_t c = 0; c < yb.size(); ++c) add_into(xb[c], yb[c]);
        return;
      }
      case Op::lerp: {
        double alpha = params_->value(v.pid_alpha)[0];
        touch_adj(adj, v.a);
        touch_adj(adj, v.b);
        auto& hb = adj[static_cast<std::size_t>(v.a)];
        auto& xb = adj[static_cast<std::size_t>(v.b)];
        const Var& hv = vars_[static_cast<std::size_t>(v.a)];
        const Var& xv = vars_[static_cast<std::size_t>(v.b)];
        double galpha = 0.0;
        for (std::size_t c = 0; c < yb.size(); ++c) {
          const double* yp = yb[c].data();
          const double* hp = hv.coef[c].data();
          const double* xp = xv.coef[c].data();
          double* hbp = hb[c].data();
          double* xbp = xb[c].data();
          for (std::int64_t k = 0; k < yb[c].numel(); ++k) {
            hbp[k] += alpha * yp[k];
            xbp[k] += (1.0 - alpha) * yp[k];
            galpha += yp[k] * (hp[k] - xp[k]);
          }
        }
        grads.g[static_cast<std::size_t>(v.pid_alpha)][0] += galpha;
        return;
      }
      case Op::concat_cols: {
        touch_adj(adj, v.a);
        touch_adj(adj, v.b);
        auto& ab = adj[static_cast<std::size_t>(v.a)];
        auto& bb = adj[static_cast<std::size_t>(v.b)];
        std::int64_t ca = ab[0].cols();
        std::int64_t cb = bb[0].cols();
        for (std::size_t c = 0; c < yb.size(); ++c) {
          ab[c].mat() += yb[c].mat().leftCols(ca);
          bb[c].mat() += yb[c].mat().rightCols(cb);
        }
        return;
      }
      case Op::slice_cols: {
        touch_adj(adj, v.a);
        auto& xb = adj[static_cast<std::size_t>(v.a)];
        for (std::size_t c = 0; c < yb.size(); ++c)
          xb[c].mat().middleCols(v.j0, v.j1 - v.j0) += yb[c].mat();
        return;
      }
      case Op::extract: {
        touch_adj(adj, v.a);
        add_into(adj[static_cast<std::size_t>(v.a)][static_cast<std::size_t>(v.j0)], yb[0]);
        return;
      }
      case Op::mean_sq: {
        touch_adj(adj, v.a);
        const Var& xv = vars_[static_cast<std::size_t>(v.a)];
        double w = 2.0 * yb[0][0] / static_cast<double>(xv.coef[0].rows());
        double* xp = adj[static_cast<std::size_t>(v.a)][0].data();
        const double* x0 = xv.coef[0].data();
        for (std::int64_t k = 0; k < xv.coef[0].numel(); ++k) xp[k] += w * x0[k];
        return;
      }
      case Op::group_sq_sum: {
        touch_adj(adj, v.a);
        const Var& xv = vars_[static_cast<std::size_t>(v.a)];
        double* xp = adj[static_cast<std::size_t>(v.a)][0].data();
        const double* x0 = xv.coef[0].data();
        std::int64_t cols = xv.coef[0].cols();
        for (std::int64_t r = 0; r < xv.coef[0].rows(); ++r) {
          double gb = yb[0][v.group[static_cast<std::size_t>(r)]];
          for (std::int64_t c = 0; c < cols; ++c)
            xp[r * cols + c] += 2.0 * gb * x0[r * cols + c];
        }
        return;
      }
      case Op::dot_const: {
        touch_adj(adj, v.a);
        double w = yb[0][0] * v.c0;
        double* xp = adj[static_cast<std::size_t>(v.a)][0].data();
        for (std::int64_t k = 0; k < v.aux.numel(); ++k) xp[k] += w * v.aux[k];
        return;
      }
      case Op::combine: {
        for (const auto& [k, src] : v.terms) {
          touch_adj(adj, src);
          double* xp = adj[static_cast<std::size_t>(src)][0].data();
          const double* yp = yb[0].data();
          for (std::int64_t t = 0; t < yb[0].numel(); ++t) xp[t] += k * yp[t];
        }
        return;
      }
    }
  }

  // Adjoint accumulation for add/sub where an operand may be plain.
  static void accumulate_linear(const Var& operand, std::vector<Tensor>& ob,
                                const std::vector<int>& merged, const std::vector<Tensor>& yb,
                                double sign) {
    std::size_t nc = operand.orders.empty() ? 1 : yb.size();
    (void)merged;
    for (std::size_t c = 0; c < nc; ++c) {
      const double* yp = yb[c].data();
      double* op = ob[c].data();
      for (std::int64_t k = 0; k < yb[c].numel(); ++k) op[k] += sign * yp[k];
    }
  }

  // Adjoint pointer for coefficient (s, k); null when the operand is plain
  // and k > 0 (no such input coefficient exists).
  static double* adj_coef_ptr(const Var& v, std::vector<Tensor>& vb, int s, int k) {
    if (k == 0) return vb[0].data();
    if (v.orders.empty() || k > v.orders[static_cast<std::size_t>(s)]) return nullptr;
    int off = 1;
    for (int j = 0; j < s; ++j) off += v.orders[static_cast<std::size_t>(j)];
    return vb[static_cast<std::size_t>(off + k - 1)].data();
  }

  ParamSet* params_;
  std::vector<Var> vars_;
};

}  // namespace pinn

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pinn/nets.hpp"
#include "pinn/tape.hpp"

namespace pinn {

// Interior residuals in moved-to-left-hand-side form, so the residual loss is
// the mean square of what these return. All arguments are plain (order-0)
// variables of shape [n x 1], typically extracted from jet coefficients of a
// network pass.

inline VarId residual_allen_cahn(Tape& t, VarId u, VarId u_t, VarId u_xx) {
  VarId u3 = t.mul(t.mul(u, u), u);
  return t.combine({{1.0, u_t}, {-0.0001, u_xx}, {5.0, u3}, {-5.0, u}});
}

inline VarId residual_kdv(Tape& t, VarId u, VarId u_t, VarId u_x, VarId u_xxx, double eta = 1.0,
                          double mu = 0.022) {
  return t.combine({{1.0, u_t}, {eta, t.mul(u, u_x)}, {mu * mu, u_xxx}});
}

struct GreyScottParams {
  double eps1 = 0.2, eps2 = 0.1;
  double b1 = 40.0, b2 = 100.0;
  double c1 = 1000.0, c2 = 1000.0;
};

inline std::pair<VarId, VarId> residual_grey_scott(Tape& t, VarId u, VarId v, VarId u_t,
                                                   VarId lap_u, VarId v_t, VarId lap_v,
                                                   const GreyScottParams& p = {}) {
  VarId uv2 = t.mul(u, t.mul(v, v));
  VarId ru = t.add_scalar(
      t.combine({{1.0, u_t}, {-p.eps1, lap_u}, {p.b1, u}, {p.c1, uv2}}), -p.b1);
  VarId rv = t.combine({{1.0, v_t}, {-p.eps2, lap_v}, {p.b2, v}, {-p.c2, uv2}});
  return {ru, rv};
}

struct GinzburgLandauParams {
  double eps = 0.004;
  double mu = 10.0;
  double coupling = 1.5;  // gamma = mu * (1 + coupling i), scaled by mu
};

inline std::pair<VarId, VarId> residual_ginzburg_landau(Tape& t, VarId u, VarId v, VarId u_t,
                                                        VarId lap_u, VarId v_t, VarId lap_v,
                                                        const GinzburgLandauParams& p = {}) {
  VarId s = t.add(t.mul(u, u), t.mul(v, v));
  VarId a = t.sub(u, t.scale(v, p.coupling));
  VarId b = t.add(v, t.scale(u, p.coupling));
  VarId ru = t.combine({{1.0, u_t}, {-p.eps, lap_u}, {-p.mu, u}, {p.mu, t.mul(a, s)}});
  VarId rv = t.combine({{1.0, v_t}, {-p.eps, lap_v}, {-p.mu, v}, {p.mu, t.mul(b, s)}});
  return {ru, rv};
}

/// Steady incompressible momentum + continuity residuals.
inline std::array<VarId, 3> residual_ns_steady(Tape& t, VarId u, VarId v, VarId u_x, VarId u_y,
                                               VarId v_x, VarId v_y, VarId p_x, VarId p_y,
                                               VarId lap_u, VarId lap_v, double re) {
  double nu = 1.0 / re;
  VarId ru = t.combine({{1.0, t.mul(u, u_x)}, {1.0, t.mul(v, u_y)}, {1.0, p_x}, {-nu, lap_u}});
  VarId rv = t.combine({{1.0, t.mul(u, v_x)}, {1.0, t.mul(v, v_y)}, {1.0, p_y}, {-nu, lap_v}});
  VarId rdiv = t.add(u_x, v_y);
  return {ru, rv, rdiv};
}

/// Smoothed lid profile; vanishes at both corners.
inline double cavity_lid_velocity(double x, double c0 = 50.0) {
  return 1.0 - std::cosh(c0 * (x - 0.5)) / std::cosh(0.5 * c0);
}

/// u_theta at the given points minus targets.
inline VarId ic_residual(Tape& t, VarId pred, const Tensor& targets) {
  if (!t.value(pred).same_shape(targets))
    throw std::invalid_argument("ic_residual: prediction/target shape mismatch");
  return t.sub(pred, t.constant(targets));
}

/// Per-component values and pure derivatives of a network output jet.
struct FieldJets {
  std::vector<VarId> val;                       // [out]
  std::vector<std::vector<std::vector<VarId>>> d;  // [out][seed][order-1]
};

inline FieldJets extract_fields(Tape& t, VarId out, int out_dim,
                                const std::vector<SeedSpec>& seeds) {
  FieldJets f;
  for (int j = 0; j < out_dim; ++j) {
    VarId comp = out_dim == 1 ? out : t.slice_cols(out, j, j + 1);
    f.val.push_back(t.extract(comp, 0, 0));
    std::vector<std::vector<VarId>> per_seed;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      std::vector<VarId> per_order;
      for (int k = 1; k <= seeds[s].order; ++k)
        per_order.push_back(t.extract(comp, static_cast<int>(s), k));
      per_seed.push_back(std::move(per_order));
    }
    f.d.push_back(std::move(per_seed));
  }
  return f;
}

/// Everything the trainer needs to know about one benchmark. Coordinate
/// layout: time-dependent problems use (t, x[, y]); the steady cavity uses
/// (x, y).
struct BenchmarkSpec {
  std::string name;
  bool has_time = true;
  int space_dim = 1;
  int out_dim = 1;
  double t_final = 1.0;
  std::vector<double> lo, hi;  // spatial box
  std::vector<SeedSpec> seeds;
  std::vector<PeriodicDim> periodic;
  std::function<Tensor(const Tensor&)> ic;  // [n x space] -> [n x out]
  // The spec argument carries run-time problem parameters (cavity Reynolds).
  std::function<std::vector<VarId>(Tape&, const FieldJets&, const BenchmarkSpec&)> residual;
  std::vector<std::string> residual_names;
  bool has_bc_walls = false;
  double reynolds = 100.0;

  int coord_dim() const { return space_dim + (has_time ? 1 : 0); }
};

inline BenchmarkSpec make_benchmark(const std::string& name) {
  BenchmarkSpec b;
  b.name = name;
  if (name == "allen_cahn") {
    b.space_dim = 1;
    b.out_dim = 1;
    b.t_final = 1.0;
    b.lo = {-1.0};
    b.hi = {1.0};
    b.seeds = {{1, 2}, {0, 1}};  // x to order 2, t to order 1
    b.periodic = {{1, 2.0, 5}};
    b.ic = [](const Tensor& x) {
      Tensor g({x.rows(), 1});
      for (std::int64_t i = 0; i < x.rows(); ++i)
        g[i] = x(i, 0) * x(i, 0) * std::cos(M_PI * x(i, 0));
      return g;
    };
    b.residual = [](Tape& t, const FieldJets& f, const BenchmarkSpec&) {
      return std::vector<VarId>{
          residual_allen_cahn(t, f.val[0], f.d[0][1][0], f.d[0][0][1])};
    };
    b.residual_names = {"res"};
  } else if (name == "kdv") {
    b.space_dim = 1;
    b.out_dim = 1;
    b.t_final = 1.0;
    b.lo = {-1.0};
    b.hi = {1.0};
    b.seeds = {{1, 3}, {0, 1}};
    b.periodic = {{1, 2.0, 5}};
    b.ic = [](const Tensor& x) {
      Tensor g({x.rows(), 1});
      for (std::int64_t i = 0; i < x.rows(); ++i) g[i] = std::cos(M_PI * x(i, 0));
      return g;
    };
    b.residual = [](Tape& t, const FieldJets& f, const BenchmarkSpec&) {
      return std::vector<VarId>{
          residual_kdv(t, f.val[0], f.d[0][1][0], f.d[0][0][0], f.d[0][0][2])};
    };
    b.residual_names = {"res"};
  } else if (name == "grey_scott") {
    b.space_dim = 2;
    b.out_dim = 2;
    b.t_final = 1.0;  // trained horizon; the full data-generation run goes to 2
    b.lo = {-1.0, -1.0};
    b.hi = {1.0, 1.0};
    b.seeds = {{1, 2}, {2, 2}, {0, 1}};  // x, y to order 2, t to order 1
    b.periodic = {{1, 2.0, 5}, {2, 2.0, 5}};
    b.ic = [](const Tensor& xy) {
      Tensor g({xy.rows(), 2});
      for (std::int64_t i = 0; i < xy.rows(); ++i) {
        double x = xy(i, 0), y = xy(i, 1);
        g(i, 0) = 1.0 - std::exp(-10.0 * ((x + 0.05) * (x + 0.05) + (y + 0.02) * (y + 0.02)));
        g(i, 1) = 1.0 - std::exp(-10.0 * ((x - 0.05) * (x - 0.05) + (y - 0.02) * (y - 0.02)));
      }
      return g;
    };
    b.residual = [](Tape& t, const FieldJets& f, const BenchmarkSpec&) {
      VarId lap_u = t.add(f.d[0][0][1], f.d[0][1][1]);
      VarId lap_v = t.add(f.d[1][0][1], f.d[1][1][1]);
      auto [ru, rv] = residual_grey_scott(t, f.val[0], f.val[1], f.d[0][2][0], lap_u,
                                          f.d[1][2][0], lap_v);
      return std::vector<VarId>{ru, rv};
    };
    b.residual_names = {"res_u", "res_v"};
  } else if (name == "ginzburg_landau") {
    b.space_dim = 2;
    b.out_dim = 2;
    b.t_final = 1.0;
    b.lo = {-1.0, -1.0};
    b.hi = {1.0, 1.0};
    b.seeds = {{1, 2}, {2, 2}, {0, 1}};
    b.periodic = {{1, 2.0, 5}, {2, 2.0, 5}};
    b.ic = [](const Tensor& xy) {
      Tensor g({xy.rows(), 2});
      for (std::int64_t i = 0; i < xy.rows(); ++i) {
        double x = xy(i, 0), y = xy(i, 1);
        double env = std::exp(-25.0 * (x * x + y * y));
        g(i, 0) = 10.0 * y * env;
        g(i, 1) = 10.0 * x * env;
      }
      return g;
    };
    b.residual = [](Tape& t, const FieldJets& f, const BenchmarkSpec&) {
      VarId lap_u = t.add(f.d[0][0][1], f.d[0][1][1]);
      VarId lap_v = t.add(f.d[1][0][1], f.d[1][1][1]);
      auto [ru, rv] = residual_ginzburg_landau(t, f.val[0], f.val[1], f.d[0][2][0], lap_u,
                                               f.d[1][2][0], lap_v);
      return std::vector<VarId>{ru, rv};
    };
    b.residual_names = {"res_u", "res_v"};
  } else if (name == "cavity") {
    b.has_time = false;
    b.space_dim = 2;
    b.out_dim = 3;  // u, v, p
    b.lo = {0.0, 0.0};
    b.hi = {1.0, 1.0};
    b.seeds = {{0, 2}, {1, 2}};
    b.has_bc_walls = true;
    b.residual = [](Tape& t, const FieldJets& f, const BenchmarkSpec& spec) {
      VarId lap_u = t.add(f.d[0][0][1], f.d[0][1][1]);
      VarId lap_v = t.add(f.d[1][0][1], f.d[1][1][1]);
      auto r = residual_ns_steady(t, f.val[0], f.val[1], f.d[0][0][0], f.d[0][1][0],
                                  f.d[1][0][0], f.d[1][1][0], f.d[2][0][0], f.d[2][1][0],
                                  lap_u, lap_v, spec.reynolds);
      return std::vector<VarId>{r[0], r[1], r[2]};
    };
    b.residual_names = {"res_u", "res_v", "res_div"};
  } else {
    throw std::invalid_argument("unknown benchmark: " + name);
  }
  return b;
}

}  // namespace pinn

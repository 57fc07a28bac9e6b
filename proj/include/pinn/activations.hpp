#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace pinn {

enum class Act { identity, tanh_, gelu, swish, sin_, cos_ };

inline Act act_from_string(const std::string& s) {
  if (s == "identity") return Act::identity;
  if (s == "tanh") return Act::tanh_;
  if (s == "gelu") return Act::gelu;
  if (s == "swish") return Act::swish;
  if (s == "sin") return Act::sin_;
  if (s == "cos") return Act::cos_;
  throw std::invalid_argument("unknown activation: " + s);
}

inline const char* act_name(Act a) {
  switch (a) {
    case Act::identity: return "identity";
    case Act::tanh_: return "tanh";
    case Act::gelu: return "gelu";
    case Act::swish: return "swish";
    case Act::sin_: return "sin";
    case Act::cos_: return "cos";
  }
  return "?";
}

/// Writes sigma^(0..kmax)(x) into d[0..kmax]. Closed forms: tanh derivatives
/// are polynomials in tanh(x), swish derivatives polynomials in sigmoid(x),
/// gelu derivatives use Hermite polynomials times the Gaussian pdf.
/// Supports kmax <= 5, enough for order-4 jets plus one reverse sweep.
inline void act_derivs(Act a, double x, int kmax, double* d) {
  switch (a) {
    case Act::identity: {
      d[0] = x;
      if (kmax >= 1) d[1] = 1.0;
      for (int k = 2; k <= kmax; ++k) d[k] = 0.0;
      return;
    }
    case Act::sin_: {
      double s = std::sin(x), c = std::cos(x);
      const double cyc[4] = {s, c, -s, -c};
      for (int k = 0; k <= kmax; ++k) d[k] = cyc[k & 3];
      return;
    }
    case Act::cos_: {
      double s = std::sin(x), c = std::cos(x);
      const double cyc[4] = {c, -s, -c, s};
      for (int k = 0; k <= kmax; ++k) d[k] = cyc[k & 3];
      return;
    }
    case Act::tanh_: {
      double t = std::tanh(x), t2 = t * t;
      d[0] = t;
      if (kmax >= 1) d[1] = 1.0 - t2;
      if (kmax >= 2) d[2] = t * (-2.0 + 2.0 * t2);
      if (kmax >= 3) d[3] = -2.0 + t2 * (8.0 - 6.0 * t2);
      if (kmax >= 4) d[4] = t * (16.0 + t2 * (-40.0 + 24.0 * t2));
      if (kmax >= 5) d[5] = 16.0 + t2 * (-136.0 + t2 * (240.0 - 120.0 * t2));
      return;
    }
    case Act::swish: {
      double p = 1.0 / (1.0 + std::exp(-x));
      // P_k(p) = k-th derivative of sigmoid as a polynomial in p.
      double P[6];
      P[0] = p;
      P[1] = p * (1.0 - p);
      P[2] = p * (1.0 + p * (-3.0 + 2.0 * p));
      P[3] = p * (1.0 + p * (-7.0 + p * (12.0 - 6.0 * p)));
      P[4] = p * (1.0 + p * (-15.0 + p * (50.0 + p * (-60.0 + 24.0 * p))));
      P[5] = p * (1.0 + p * (-31.0 + p * (180.0 + p * (-390.0 + p * (360.0 - 120.0 * p)))));
      d[0] = x * p;
      for (int k = 1; k <= kmax; ++k) d[k] = x * P[k] + k * P[k - 1];
      return;
    }
    case Act::gelu: {
      // Exact gelu: x * Phi(x) with Phi the standard normal cdf.
      const double inv_sqrt2 = 0.70710678118654752440;
      const double inv_sqrt2pi = 0.39894228040143267794;
      double Phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      double phi = inv_sqrt2pi * std::exp(-0.5 * x * x);
      // F[k] = Phi^(k); phi^(j) = (-1)^j He_j(x) phi with probabilists' Hermite.
      double F[6];
      F[0] = Phi;
      if (kmax >= 1) F[1] = phi;
      if (kmax >= 2) F[2] = -x * phi;
      if (kmax >= 3) F[3] = (x * x - 1.0) * phi;
      if (kmax >= 4) F[4] = (3.0 * x - x * x * x) * phi;
      if (kmax >= 5) F[5] = (x * x * x * x - 6.0 * x * x + 3.0) * phi;
      d[0] = x * Phi;
      for (int k = 1; k <= kmax; ++k) d[k] = x * F[k] + k * F[k - 1];
      return;
    }
  }
  throw std::logic_error("act_derivs: unreachable");
}

inline double act_eval(Act a, double x) {
  double d[1];
  act_derivs(a, x, 0, d);
  return d[0];
}

}  // namespace pinn

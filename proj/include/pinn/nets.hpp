#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinn/rng.hpp"
#include "pinn/tape.hpp"
#include "pinn/tensor.hpp"

namespace pinn {

struct PeriodicDim {
  int coord = 0;
  double period = 2.0;
  int harmonics = 5;
};

struct EmbeddingConfig {
  int fourier_dim = 0;  // Gaussian feature count; -1 = fill to network width, 0 = none
  double fourier_scale = 1.0;
  std::vector<PeriodicDim> periodic;

  bool identity() const { return fourier_dim == 0 && periodic.empty(); }
};

/// Coordinate features: [cos(F x); sin(F x)] where F stacks Gaussian rows over
/// the non-periodic coordinates and fixed integer harmonics 2*pi*k/P over the
/// periodic ones. Periodic coordinates therefore enter the network only
/// through functions with exact period P.
class Embedding {
 public:
  static Embedding build(const EmbeddingConfig& cfg, int in_dim, Rng rng) {
    Embedding e;
    e.in_dim_ = in_dim;
    if (cfg.identity()) {
      e.identity_ = true;
      e.out_dim_ = in_dim;
      return e;
    }
    if (cfg.fourier_dim < 0) throw std::invalid_argument("Embedding: unresolved fourier_dim");
    int nharm = 0;
    for (const auto& p : cfg.periodic) nharm += p.harmonics;
    std::int64_t rows = cfg.fourier_dim + nharm;
    e.freq_ = Tensor({rows, in_dim});
    std::vector<bool> is_periodic(static_cast<std::size_t>(in_dim), false);
    for (const auto& p : cfg.periodic) {
      if (p.coord < 0 || p.coord >= in_dim || p.period <= 0 || p.harmonics < 1)
        throw std::invalid_argument("Embedding: bad periodic spec");
      is_periodic[static_cast<std::size_t>(p.coord)] = true;
    }
    std::int64_t r = 0;
    for (; r < cfg.fourier_dim; ++r)
      for (int c = 0; c < in_dim; ++c)
        e.freq_(r, c) = is_periodic[static_cast<std::size_t>(c)]
                            ? 0.0
                            : rng.normal() * cfg.fourier_scale;
    for (const auto& p : cfg.periodic)
      for (int k = 1; k <= p.harmonics; ++k, ++r)
        e.freq_(r, p.coord) = 2.0 * M_PI * static_cast<double>(k) / p.period;
    e.out_dim_ = static_cast<int>(2 * rows);
    return e;
  }

  bool identity() const { return identity_; }
  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  const Tensor& freq() const { return freq_; }

  VarId apply(Tape& t, VarId coords) const {
    if (identity_) return coords;
    VarId z = t.linear_const(coords, freq_);
    return t.concat_cols(t.activation(z, Act::cos_), t.activation(z, Act::sin_));
  }

 private:
  Tensor freq_;
  bool identity_ = false;
  int in_dim_ = 0, out_dim_ = 0;
};

/// Weight reparameterization W = diag(exp(s)) V with s ~ N(mu, sigma^2).
/// The materialized product reproduces the wrapped W exactly.
struct RwfFactor {
  Tensor s;  // [out]
  Tensor v;  // [out x in]
};

inline RwfFactor rwf_wrap(Rng& rng, const Tensor& w, double mu, double sigma) {
  if (sigma < 0) throw std::invalid_argument("rwf_wrap: sigma must be >= 0");
  RwfFactor f;
  f.s = rng.normal_tensor({w.rows()}, mu, sigma);
  f.v = w;
  for (std::int64_t i = 0; i < w.rows(); ++i) {
    double inv = std::exp(-f.s[i]);
    for (std::int64_t j = 0; j < w.cols(); ++j) f.v(i, j) *= inv;
  }
  return f;
}

inline Tensor rwf_materialize(const RwfFactor& f) {
  Tensor w = f.v;
  for (std::int64_t i = 0; i < w.rows(); ++i) {
    double e = std::exp(f.s[i]);
    for (std::int64_t j = 0; j < w.cols(); ++j) w(i, j) *= e;
  }
  return w;
}

enum class ArchKind { mlp, resnet, modified_mlp, piratenet };

inline ArchKind arch_from_string(const std::string& s) {
  if (s == "mlp") return ArchKind::mlp;
  if (s == "resnet") return ArchKind::resnet;
  if (s == "modified_mlp") return ArchKind::modified_mlp;
  if (s == "piratenet") return ArchKind::piratenet;
  throw std::invalid_argument("unknown architecture: " + s);
}

inline const char* arch_name(ArchKind a) {
  switch (a) {
    case ArchKind::mlp: return "mlp";
    case ArchKind::resnet: return "resnet";
    case ArchKind::modified_mlp: return "modified_mlp";
    case ArchKind::piratenet: return "piratenet";
  }
  return "?";
}

struct ArchConfig {
  ArchKind arch = ArchKind::piratenet;
  int in_dim = 2;
  int out_dim = 1;
  int depth = 9;  // hidden layers; a PirateNet block counts as 3
  int width = 256;
  Act act = Act::tanh_;
  bool rwf = false;
  double rwf_mu = 1.0;
  double rwf_sigma = 0.1;
  double alpha_init = 0.0;
  bool gating = true;
  EmbeddingConfig embed;
};

namespace detail {
struct DenseIds {
  int w = -1, s = -1, b = -1;
};
}  // namespace detail

/// One of the four backbones. Construction registers all trainable arrays in
/// the ParamSet; the frozen Fourier matrix is reproduced from (config, seed)
/// rather than trained.
class Network {
 public:
  Network(const ArchConfig& cfg, ParamSet& ps, Rng rng) : cfg_(cfg) {
    EmbeddingConfig ecfg = cfg.embed;
    if (ecfg.fourier_dim == -1) {
      int nharm = 0;
      for (const auto& p : ecfg.periodic) nharm += p.harmonics;
      int m = cfg.width / 2 - nharm;
      if (m < 1 || cfg.width % 2 != 0)
        throw std::invalid_argument("Network: width too small for auto-sized embedding");
      ecfg.fourier_dim = m;
    }
    embed_ = Embedding::build(ecfg, cfg.in_dim, rng.split(0));
    Rng wr = rng.split(1);
    int feat = embed_.out_dim();

    switch (cfg.arch) {
      case ArchKind::piratenet: {
        if (cfg.depth % 3 != 0 || cfg.depth < 3)
          throw std::invalid_argument("piratenet: depth must be a positive multiple of 3");
        if (feat != cfg.width)
          throw std::invalid_argument("piratenet: embedding dim must equal width");
        nblocks_ = cfg.depth / 3;
        gate_u_ = make_dense(ps, wr, "gate_u", feat, cfg.width);
        gate_v_ = make_dense(ps, wr, "gate_v", feat, cfg.width);
        for (int l = 0; l < nblocks_; ++l) {
          std::string p = "block" + std::to_string(l);
          blocks_.push_back({make_dense(ps, wr, p + ".d1", cfg.width, cfg.width),
                             make_dense(ps, wr, p + ".d2", cfg.width, cfg.width),
                             make_dense(ps, wr, p + ".d3", cfg.width, cfg.width)});
          alpha_pids_.push_back(ps.add(p + ".alpha", Tensor::scalar(cfg.alpha_init)));
        }
        final_ = make_dense(ps, wr, "final", cfg.width, cfg.out_dim, /*bias=*/false);
        break;
      }
      case ArchKind::modified_mlp: {
        gate_u_ = make_dense(ps, wr, "gate_u", feat, cfg.width);
        gate_v_ = make_dense(ps, wr, "gate_v", feat, cfg.width);
        int in = feat;
        for (int l = 0; l < cfg.depth; ++l) {
          layers_.push_back(make_dense(ps, wr, "layer" + std::to_string(l), in, cfg.width));
          in = cfg.width;
        }
        final_ = make_dense(ps, wr, "final", in, cfg.out_dim);
        break;
      }
      case ArchKind::mlp: {
        int in = feat;
        for (int l = 0; l < cfg.depth; ++l) {
          layers_.push_back(make_dense(ps, wr, "layer" + std::to_string(l), in, cfg.width));
          in = cfg.width;
        }
        final_ = make_dense(ps, wr, "final", in, cfg.out_dim);
        break;
      }
      case ArchKind::resnet: {
        if (feat != cfg.width)
          throw std::invalid_argument("resnet: embedding dim must equal width");
        for (int l = 0; l < cfg.depth; ++l)
          layers_.push_back(make_dense(ps, wr, "layer" + std::to_string(l), cfg.width, cfg.width));
        final_ = make_dense(ps, wr, "final", cfg.width, cfg.out_dim);
        break;
      }
    }
  }

  const ArchConfig& config() const { return cfg_; }
  const Embedding& embedding() const { return embed_; }
  const std::vector<int>& alpha_pids() const { return alpha_pids_; }
  int final_weight_pid() const { return final_.w; }

  VarId forward(Tape& t, VarId coords) const { return head(t, trunk(t, coords)); }

  /// Features entering the final linear layer.
  VarId trunk(Tape& t, VarId coords) const {
    VarId phi = embed_.apply(t, coords);
    switch (cfg_.arch) {
      case ArchKind::piratenet: {
        VarId u = t.activation(apply_dense(t, gate_u_, phi), cfg_.act);
        VarId v = t.activation(apply_dense(t, gate_v_, phi), cfg_.act);
        VarId d = t.sub(u, v);
        VarId x = phi;
        for (int l = 0; l < nblocks_; ++l) {
          const auto& b = blocks_[static_cast<std::size_t>(l)];
          VarId f = t.activation(apply_dense(t, b.d1, x), cfg_.act);
          VarId z1 = cfg_.gating ? t.add(v, t.mul(f, d)) : f;
          VarId g = t.activation(apply_dense(t, b.d2, z1), cfg_.act);
          VarId z2 = cfg_.gating ? t.add(v, t.mul(g, d)) : g;
          VarId h = t.activation(apply_dense(t, b.d3, z2), cfg_.act);
          x = t.lerp(alpha_pids_[static_cast<std::size_t>(l)], h, x);
        }
        return x;
      }
      case ArchKind::modified_mlp: {
        VarId u = t.activation(apply_dense(t, gate_u_, phi), cfg_.act);
        VarId v = t.activation(apply_dense(t, gate_v_, phi), cfg_.act);
        VarId d = t.sub(u, v);
        VarId x = phi;
        for (const auto& l : layers_) {
          VarId f = t.activation(apply_dense(t, l, x), cfg_.act);
          x = t.add(v, t.mul(f, d));
        }
        return x;
      }
      case ArchKind::mlp: {
        VarId x = phi;
        for (const auto& l : layers_) x = t.activation(apply_dense(t, l, x), cfg_.act);
        return x;
      }
      case ArchKind::resnet: {
        // pre-activation blocks, identity skip every two dense layers
        VarId x = phi;
        std::size_t i = 0;
        while (i + 1 < layers_.size()) {
          VarId s1 = apply_dense(t, layers_[i], t.activation(x, cfg_.act));
          VarId s2 = apply_dense(t, layers_[i + 1], t.activation(s1, cfg_.act));
          x = t.add(x, s2);
          i += 2;
        }
        if (i < layers_.size())
          x = t.add(x, apply_dense(t, layers_[i], t.activation(x, cfg_.act)));
        return x;
      }
    }
    throw std::logic_error("trunk: unreachable");
  }

  VarId head(Tape& t, VarId features) const { return apply_dense(t, final_, features); }

  /// Replaces the final linear layer with a given [out x feat] matrix. With
  /// RWF enabled the direction matrix is refit so the materialized weight
  /// equals `w` exactly.
  void set_final_weight(ParamSet& ps, const Tensor& w) const {
    if (final_.s >= 0) {
      const Tensor& s = ps.value(final_.s);
      Tensor v = w;
      for (std::int64_t i = 0; i < v.rows(); ++i) {
        double inv = std::exp(-s[i]);
        for (std::int64_t j = 0; j < v.cols(); ++j) v(i, j) *= inv;
      }
      ps.value(final_.w) = v;
    } else {
      ps.value(final_.w) = w;
    }
  }

  /// Materialized final layer weight [out x feat].
  Tensor final_weight(const ParamSet& ps) const {
    Tensor w = ps.value(final_.w);
    if (final_.s >= 0) {
      const Tensor& s = ps.value(final_.s);
      for (std::int64_t i = 0; i < w.rows(); ++i) {
        double e = std::exp(s[i]);
        for (std::int64_t j = 0; j < w.cols(); ++j) w(i, j) *= e;
      }
    }
    return w;
  }

 private:
  detail::DenseIds make_dense(ParamSet& ps, Rng& rng, const std::string& name, int in, int out,
                              bool bias = true) {
    detail::DenseIds ids;
    Tensor w = glorot_sample(rng, in, out);
    if (cfg_.rwf) {
      RwfFactor f = rwf_wrap(rng, w, cfg_.rwf_mu, cfg_.rwf_sigma);
      ids.s = ps.add(name + ".s", std::move(f.s));
      ids.w = ps.add(name + ".v", std::move(f.v));
    } else {
      ids.w = ps.add(name + ".w", std::move(w));
    }
    if (bias) ids.b = ps.add(name + ".b", Tensor::zeros({out}));
    return ids;
  }

  VarId apply_dense(Tape& t, const detail::DenseIds& ids, VarId x) const {
    return t.dense(x, ids.w, ids.s, ids.b);
  }

  struct Block {
    detail::DenseIds d1, d2, d3;
  };

  ArchConfig cfg_;
  Embedding embed_;
  int nblocks_ = 0;
  detail::DenseIds gate_u_, gate_v_, final_;
  std::vector<detail::DenseIds> layers_;
  std::vector<Block> blocks_;
  std::vector<int> alpha_pids_;
};

/// Plain forward evaluation without derivative seeds.
inline Tensor net_eval(const Network& net, ParamSet& ps, const Tensor& coords) {
  Tape t(ps);
  return t.value(net.forward(t, t.constant(coords)));
}

/// Pure input-coordinate derivatives d^k u / d x_coord^k for k = 1..order via
/// one seeded jet pass. Returns one tensor per order, each [batch x out].
inline std::vector<Tensor> derivatives_of(const Network& net, ParamSet& ps, const Tensor& coords,
                                          int coord, int order) {
  if (order < 1 || order > kMaxJetOrder)
    throw std::invalid_argument("derivatives_of: order out of range");
  Tape t(ps);
  VarId out = net.forward(t, t.input_jet(coords, {{coord, order}}));
  std::vector<Tensor> result;
  for (int k = 1; k <= order; ++k) result.push_back(t.coef(out, t.coef_index(out, 0, k)));
  return result;
}

/// Least-squares replacement of the final linear layer: fits the network
/// output to `targets` at `coords` through the frozen trunk features,
/// taking the minimum-norm solution.
inline void physics_informed_init(const Network& net, ParamSet& ps, const Tensor& coords,
                                  const Tensor& targets) {
  if (coords.rows() != targets.rows())
    throw std::invalid_argument("physics_informed_init: row mismatch");
  Tape t(ps);
  Tensor feat = t.value(net.trunk(t, t.constant(coords)));
  if (targets.cols() != net.config().out_dim)
    throw std::invalid_argument("physics_informed_init: target width mismatch");
  Tensor w = lstsq_min_norm(feat, targets);  // [feat x out]
  net.set_final_weight(ps, transpose(w));
}

}  // namespace pinn

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/LU>
#include <cmath>

#include "pinn/nets.hpp"
#include "pinn/rng.hpp"

using namespace pinn;

namespace {

ArchConfig pirate_cfg(int blocks, int width, double alpha = 0.0) {
  ArchConfig cfg;
  cfg.arch = ArchKind::piratenet;
  cfg.in_dim = 2;
  cfg.depth = 3 * blocks;
  cfg.width = width;
  cfg.alpha_init = alpha;
  cfg.embed.fourier_dim = -1;
  cfg.embed.fourier_scale = 2.0;
  cfg.embed.periodic.push_back({1, 2.0, 5});
  return cfg;
}

}  // namespace

TEST_CASE("embedding at x=0: cos half ones, sin half zeros") {
  EmbeddingConfig cfg;
  cfg.fourier_dim = 7;
  cfg.fourier_scale = 3.0;
  Embedding e = Embedding::build(cfg, 2, Rng(5));
  ParamSet ps;
  Tape t(ps);
  Tensor zero({3, 2});
  Tensor phi = t.value(e.apply(t, t.constant(zero)));
  REQUIRE(phi.cols() == 14);
  for (std::int64_t i = 0; i < phi.rows(); ++i) {
    for (std::int64_t j = 0; j < 7; ++j) CHECK(phi(i, j) == 1.0);
    for (std::int64_t j = 7; j < 14; ++j) CHECK(phi(i, j) == 0.0);
  }
}

TEST_CASE("embedding is periodic in declared coordinates") {
  EmbeddingConfig cfg;
  cfg.fourier_dim = 4;
  cfg.periodic.push_back({1, 2.0, 3});
  Embedding e = Embedding::build(cfg, 2, Rng(6));
  ParamSet ps;
  Tape t(ps);
  Rng rng(7);
  Tensor a = rng.uniform_tensor({5, 2}, -1, 1);
  Tensor b = a;
  for (std::int64_t i = 0; i < b.rows(); ++i) b(i, 1) += 2.0;
  Tensor pa = t.value(e.apply(t, t.constant(a)));
  Tensor pb = t.value(e.apply(t, t.constant(b)));
  for (std::int64_t i = 0; i < pa.numel(); ++i) CHECK(pa[i] == Catch::Approx(pb[i]).margin(1e-12));
}

TEST_CASE("pirate block with alpha=0 is a bit-exact identity, jets included") {
  ArchConfig cfg = pirate_cfg(4, 24);
  ParamSet ps;
  Network net(cfg, ps, Rng(11));
  Rng rng(12);
  Tensor coords = rng.uniform_tensor({6, 2}, -1, 1);
  Tape t(ps);
  VarId x = t.input_jet(coords, {{1, 2}, {0, 1}});
  VarId phi = net.embedding().apply(t, x);
  VarId trunk = net.trunk(t, x);
  for (int c = 0; c < t.ncoef(trunk); ++c)
    for (std::int64_t i = 0; i < t.coef(trunk, c).numel(); ++i)
      CHECK(t.coef(trunk, c)[i] == t.coef(phi, c)[i]);
}

TEST_CASE("piratenet at init equals final layer applied to the embedding") {
  for (int blocks : {1, 3, 6}) {
    ArchConfig cfg = pirate_cfg(blocks, 32);
    cfg.rwf = true;
    ParamSet ps;
    Network net(cfg, ps, Rng(13));
    Rng rng(14);
    Tensor coords = rng.uniform_tensor({8, 2}, -1, 1);
    Tensor out = net_eval(net, ps, coords);

    ParamSet tmp;
    Tape t(tmp);
    Tensor phi = t.value(net.embedding().apply(t, t.constant(coords)));
    Tensor w = net.final_weight(ps);
    Tensor expect = matmul(phi, transpose(w));
    for (std::int64_t i = 0; i < out.numel(); ++i)
      CHECK(std::abs(out[i] - expect[i]) < 1e-12);
  }
}

TEST_CASE("pirate block alpha arms") {
  // alpha = 1: output equals the fully nonlinear branch; alpha = 0.5: halfway,
  // both against an independent recomputation with plain matrix algebra
  ArchConfig cfg = pirate_cfg(1, 8);
  cfg.embed.fourier_dim = 4;
  cfg.embed.fourier_scale = 1.0;
  cfg.embed.periodic.clear();
  for (double alpha : {1.0, 0.5}) {
    cfg.alpha_init = alpha;
    ParamSet ps;
    Network net(cfg, ps, Rng(15));
    Rng rng(16);
    Tensor coords = rng.uniform_tensor({5, 2}, -1, 1);
    Tensor out = net_eval(net, ps, coords);

    auto W = [&](const std::string& n) { return ps.value(ps.find(n)).mat(); };
    auto bvec = [&](const std::string& n) {
      const Tensor& b = ps.value(ps.find(n));
      return Eigen::Map<const Eigen::RowVectorXd>(b.data(), b.numel());
    };
    ParamSet tmp;
    Tape t(tmp);
    RowMat phi = t.value(net.embedding().apply(t, t.constant(coords))).mat();
    auto act = [](RowMat m) { return m.array().tanh().matrix().eval(); };
    RowMat u = act(((phi * W("gate_u.w").transpose()).rowwise() + bvec("gate_u.b")));
    RowMat v = act(((phi * W("gate_v.w").transpose()).rowwise() + bvec("gate_v.b")));
    RowMat f = act(((phi * W("block0.d1.w").transpose()).rowwise() + bvec("block0.d1.b")));
    RowMat z1 = f.cwiseProduct(u) + (RowMat::Ones(f.rows(), f.cols()) - f).cwiseProduct(v);
    RowMat g = act(((z1 * W("block0.d2.w").transpose()).rowwise() + bvec("block0.d2.b")));
    RowMat z2 = g.cwiseProduct(u) + (RowMat::Ones(g.rows(), g.cols()) - g).cwiseProduct(v);
    RowMat h = act(((z2 * W("block0.d3.w").transpose()).rowwise() + bvec("block0.d3.b")));
    RowMat x1 = alpha * h + (1.0 - alpha) * phi;
    RowMat expect = x1 * W("final.w").transpose();
    for (std::int64_t i = 0; i < out.rows(); ++i)
      CHECK(out(i, 0) == Catch::Approx(expect(i, 0)).margin(1e-13));
  }
}

TEST_CASE("hand-computed two-unit pirate block") {
  // width 2, alpha = 1, weights overwritten with small integers; the expected
  // output is worked out with scalar arithmetic below
  ArchConfig cfg;
  cfg.arch = ArchKind::piratenet;
  cfg.in_dim = 1;
  cfg.depth = 3;
  cfg.width = 2;
  cfg.alpha_init = 1.0;
  cfg.embed.fourier_dim = 1;
  cfg.embed.fourier_scale = 1.0;
  ParamSet ps;
  Network net(cfg, ps, Rng(17));
  auto set = [&](const std::string& n, std::vector<double> v) {
    Tensor& p = ps.value(ps.find(n));
    REQUIRE(static_cast<std::size_t>(p.numel()) == v.size());
    for (std::int64_t i = 0; i < p.numel(); ++i) p[i] = v[static_cast<std::size_t>(i)];
  };
  // embedding frequency is frozen; overwrite everything trainable
  set("gate_u.w", {1, 0, 0, 1});
  set("gate_u.b", {0, 0});
  set("gate_v.w", {0, 0, 0, 0});
  set("gate_v.b", {0, 0});
  set("block0.d1.w", {1, 1, 0, 0});
  set("block0.d1.b", {0, 0});
  set("block0.d2.w", {1, 0, 0, 1});
  set("block0.d2.b", {0, 0});
  set("block0.d3.w", {0, 1, 1, 0});
  set("block0.d3.b", {0, 0});
  set("final.w", {1, 1});

  double freq = net.embedding().freq()[0];
  double x0 = 0.4;
  Tensor coords({1, 1}, {x0});
  double out = net_eval(net, ps, coords)[0];

  double c = std::cos(freq * x0), s = std::sin(freq * x0);
  double u0 = std::tanh(c), u1 = std::tanh(s);
  double f0 = std::tanh(c + s), f1 = std::tanh(0.0);
  double z10 = f0 * u0, z11 = f1 * u1;  // V = tanh(0) = 0 gates
  double g0 = std::tanh(z10), g1 = std::tanh(z11);
  double z20 = g0 * u0, z21 = g1 * u1;
  double h0 = std::tanh(z21), h1 = std::tanh(z20);  // d3 swaps the two units
  double expect = h0 + h1;
  CHECK(out == Catch::Approx(expect).margin(1e-14));
}

TEST_CASE("zero final layer gives identically zero output") {
  ArchConfig cfg = pirate_cfg(2, 16, 0.7);
  ParamSet ps;
  Network net(cfg, ps, Rng(18));
  Tensor& w = ps.value(net.final_weight_pid());
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = 0.0;
  Rng rng(19);
  Tensor out = net_eval(net, ps, rng.uniform_tensor({7, 2}, -1, 1));
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("modified mlp with U == V collapses the gate") {
  ArchConfig cfg;
  cfg.arch = ArchKind::modified_mlp;
  cfg.in_dim = 2;
  cfg.depth = 4;
  cfg.width = 10;
  cfg.embed.fourier_dim = 5;
  ParamSet ps;
  Network net(cfg, ps, Rng(20));
  ps.value(ps.find("gate_v.w")) = ps.value(ps.find("gate_u.w"));
  ps.value(ps.find("gate_v.b")) = ps.value(ps.find("gate_u.b"));
  Rng rng(21);
  Tensor coords = rng.uniform_tensor({6, 2}, -1, 1);
  Tape t(ps);
  VarId cv = t.constant(coords);
  Tensor trunk = t.value(net.trunk(t, cv));
  VarId phi = net.embedding().apply(t, cv);
  Tensor u = t.value(t.activation(t.dense(phi, ps.find("gate_u.w"), -1, ps.find("gate_u.b")),
                                  cfg.act));
  // gate output equals U regardless of f
  for (std::int64_t i = 0; i < trunk.numel(); ++i) CHECK(trunk[i] == u[i]);
}

TEST_CASE("mlp of depth 1 equals a single affine map plus activation") {
  ArchConfig cfg;
  cfg.arch = ArchKind::mlp;
  cfg.in_dim = 2;
  cfg.depth = 1;
  cfg.width = 9;
  ParamSet ps;
  Network net(cfg, ps, Rng(22));
  Rng rng(23);
  Tensor coords = rng.uniform_tensor({5, 2}, -1, 1);
  Tensor out = net_eval(net, ps, coords);
  RowMat w1 = ps.value(ps.find("layer0.w")).mat();
  RowMat wf = ps.value(ps.find("final.w")).mat();
  const Tensor& b1 = ps.value(ps.find("layer0.b"));
  RowMat h = (coords.mat() * w1.transpose()).rowwise() +
             Eigen::Map<const Eigen::RowVectorXd>(b1.data(), b1.numel());
  RowMat expect = h.array().tanh().matrix() * wf.transpose();
  for (std::int64_t i = 0; i < out.rows(); ++i)
    CHECK(out(i, 0) == Catch::Approx(expect(i, 0)).margin(1e-13));
}

TEST_CASE("resnet with zeroed residual branches propagates the embedding") {
  ArchConfig cfg;
  cfg.arch = ArchKind::resnet;
  cfg.in_dim = 2;
  cfg.depth = 5;  // two 2-layer blocks plus a 1-layer block
  cfg.width = 12;
  cfg.embed.fourier_dim = 6;
  ParamSet ps;
  Network net(cfg, ps, Rng(24));
  for (int l = 0; l < cfg.depth; ++l) {
    Tensor& w = ps.value(ps.find("layer" + std::to_string(l) + ".w"));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = 0.0;
  }
  Rng rng(25);
  Tensor coords = rng.uniform_tensor({4, 2}, -1, 1);
  Tape t(ps);
  VarId cv = t.constant(coords);
  Tensor trunk = t.value(net.trunk(t, cv));
  Tensor phi = t.value(net.embedding().apply(t, cv));
  for (std::int64_t i = 0; i < trunk.numel(); ++i) CHECK(trunk[i] == phi[i]);
}

TEST_CASE("rwf factorization is exact at init") {
  Rng rng(26);
  Tensor w = glorot_sample(rng, 7, 5);

  // sigma = 0 pins every scale exponent at mu
  RwfFactor f0 = rwf_wrap(rng, w, 0.7, 0.0);
  for (std::int64_t i = 0; i < f0.s.numel(); ++i) CHECK(f0.s[i] == 0.7);
  Tensor m0 = rwf_materialize(f0);
  for (std::int64_t i = 0; i < w.numel(); ++i) CHECK(m0[i] == Catch::Approx(w[i]).margin(1e-14));

  RwfFactor f = rwf_wrap(rng, w, 1.0, 0.1);
  Tensor m = rwf_materialize(f);
  for (std::int64_t i = 0; i < w.numel(); ++i) CHECK(m[i] == Catch::Approx(w[i]).margin(1e-14));
}

TEST_CASE("parameter count of piratenet is comparable to modified mlp of equal depth") {
  for (int blocks : {2, 4}) {
    ArchConfig pc = pirate_cfg(blocks, 64);
    ParamSet pp;
    Network pirate(pc, pp, Rng(27));

    ArchConfig mc = pc;
    mc.arch = ArchKind::modified_mlp;
    mc.depth = 3 * blocks;
    ParamSet mp;
    Network mod(mc, mp, Rng(27));

    auto np = static_cast<double>(pp.total_scalars());
    auto nm = static_cast<double>(mp.total_scalars());
    CHECK(std::abs(np - nm) / nm < 0.15);
  }
}

TEST_CASE("network output at init is linear in the trunk features") {
  ArchConfig cfg = pirate_cfg(2, 16);
  ParamSet ps;
  Network net(cfg, ps, Rng(28));
  Rng rng(29);
  Tensor f1 = rng.normal_tensor({6, 16});
  Tensor f2 = rng.normal_tensor({6, 16});
  double a = 1.7, b = -0.4;
  Tensor mix({6, 16});
  for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = a * f1[i] + b * f2[i];
  Tape t(ps);
  Tensor h_mix = t.value(net.head(t, t.constant(mix)));
  Tensor h1 = t.value(net.head(t, t.constant(f1)));
  Tensor h2 = t.value(net.head(t, t.constant(f2)));
  for (std::int64_t i = 0; i < h_mix.numel(); ++i)
    CHECK(h_mix[i] == Catch::Approx(a * h1[i] + b * h2[i]).margin(1e-12));
}

TEST_CASE("derivatives_of a linear map") {
  ArchConfig cfg;
  cfg.arch = ArchKind::mlp;
  cfg.in_dim = 1;
  cfg.depth = 0;
  cfg.width = 1;
  ParamSet ps;
  Network net(cfg, ps, Rng(30));
  ps.value(net.final_weight_pid())[0] = 3.0;
  ps.value(ps.find("final.b"))[0] = 0.0;
  Tensor coords({4, 1}, {-1.0, 0.0, 0.5, 2.0});
  auto d = derivatives_of(net, ps, coords, 0, 3);
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(d[0][i] == 3.0);
    CHECK(d[1][i] == 0.0);
    CHECK(d[2][i] == 0.0);
  }
}

TEST_CASE("mlp first derivative matches the weight-product formula") {
  ArchConfig cfg;
  cfg.arch = ArchKind::mlp;
  cfg.in_dim = 1;
  cfg.depth = 3;
  cfg.width = 8;
  ParamSet ps;
  Network net(cfg, ps, Rng(31));
  Rng rng(32);
  Tensor coords = rng.uniform_tensor({5, 1}, -1, 1);
  auto d = derivatives_of(net, ps, coords, 0, 1);

  for (std::int64_t i = 0; i < coords.rows(); ++i) {
    Eigen::VectorXd g(1);
    g(0) = coords(i, 0);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(1, 1);
    for (int l = 0; l < cfg.depth; ++l) {
      RowMat w = ps.value(ps.find("layer" + std::to_string(l) + ".w")).mat();
      const Tensor& b = ps.value(ps.find("layer" + std::to_string(l) + ".b"));
      Eigen::VectorXd pre = w * g + Eigen::Map<const Eigen::VectorXd>(b.data(), b.numel());
      Eigen::VectorXd sdot = (1.0 - pre.array().tanh().square()).matrix();
      jac = (sdot.asDiagonal() * (w * jac)).eval();
      g = pre.array().tanh().matrix();
    }
    RowMat wf = ps.value(net.final_weight_pid()).mat();
    double expect = (wf * jac)(0, 0);
    CHECK(d[0](i, 0) == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("physics-informed init reproduces targets inside the feature span") {
  ArchConfig cfg = pirate_cfg(2, 24);
  ParamSet ps;
  Network net(cfg, ps, Rng(33));
  Rng rng(34);
  Tensor coords = rng.uniform_tensor({40, 2}, -1, 1);

  // targets built as a fixed linear functional of the trunk features
  Tape t(ps);
  Tensor feat = t.value(net.trunk(t, t.constant(coords)));
  Tensor wstar = rng.normal_tensor({static_cast<std::int64_t>(24), 1});
  Tensor targets = matmul(feat, wstar);

  physics_informed_init(net, ps, coords, targets);
  Tensor pred = net_eval(net, ps, coords);
  for (std::int64_t i = 0; i < pred.numel(); ++i)
    CHECK(pred[i] == Catch::Approx(targets[i]).margin(1e-8));
}

TEST_CASE("physics-informed init with zero target zeroes the final layer") {
  ArchConfig cfg = pirate_cfg(1, 16);
  cfg.rwf = true;
  ParamSet ps;
  Network net(cfg, ps, Rng(35));
  Rng rng(36);
  Tensor coords = rng.uniform_tensor({30, 2}, -1, 1);
  physics_informed_init(net, ps, coords, Tensor({30, 1}));
  Tensor w = net.final_weight(ps);
  for (std::int64_t i = 0; i < w.numel(); ++i) CHECK(w[i] == 0.0);
  Tensor out = net_eval(net, ps, coords);
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("physics-informed init matches the normal-equations oracle residual") {
  ArchConfig cfg = pirate_cfg(3, 32);
  cfg.rwf = true;
  ParamSet ps;
  Network net(cfg, ps, Rng(37));

  // replicate the initial profile over a grid of times
  const int nx = 48, nt = 8;
  Tensor coords({nx * nt, 2});
  Tensor targets({nx * nt, 1});
  for (int it = 0; it < nt; ++it)
    for (int ix = 0; ix < nx; ++ix) {
      double x = -1.0 + 2.0 * ix / (nx - 1);
      coords(it * nx + ix, 0) = static_cast<double>(it) / (nt - 1);
      coords(it * nx + ix, 1) = x;
      targets(it * nx + ix, 0) = x * x * std::cos(M_PI * x);
    }

  Tape t(ps);
  Tensor feat = t.value(net.trunk(t, t.constant(coords)));
  physics_informed_init(net, ps, coords, targets);
  Tensor pred = net_eval(net, ps, coords);
  double fit_res = (pred.mat() - targets.mat()).norm();

  Eigen::MatrixXd A = feat.mat();
  Eigen::MatrixXd gram = A.transpose() * A;
  gram.diagonal().array() += 1e-10;  // oracle regularization for near-rank-deficiency
  Eigen::MatrixXd w_oracle = gram.ldlt().solve(A.transpose() * targets.mat());
  double oracle_res = (A * w_oracle - targets.mat()).norm();
  CHECK(std::abs(fit_res - oracle_res) < 1e-8);
}

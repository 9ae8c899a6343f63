#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "jumplab/errors.hpp"
#include "jumplab/girsanov.hpp"
#include "jumplab/model.hpp"
#include "jumplab/stats.hpp"

using namespace jumplab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec1(double x) {
  VectorXd v(1);
  v[0] = x;
  return v;
}

model::CoefficientSet jump_ou() {
  model::LinearParams p;
  return model::make_linear(p);
}

model::CoefficientSet zero_drift_unit_sigma() {
  model::LinearParams p;
  p.jump_rate = 0.0;
  auto c = model::make_linear(p);
  c.drift = [](Eigen::Ref<const VectorXd>, Eigen::Ref<VectorXd> out) {
    out.setZero();
  };
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("girsanov");

TEST_CASE("bridge construction and truncation") {
  const auto c = zero_drift_unit_sigma();
  // b = 0, start 0 -> target 1 over [0,1]: J(t) = t, h = 1
  const auto b = girsanov::make_bridge(vec1(0.0), 10.0, vec1(1.0), 0.0, 1.0, c);
  CHECK(b.start[0] == 0.0);
  CHECK(b.j_at(0.0)[0] == 0.0);
  CHECK(b.j_at(1.0)[0] == 1.0);
  for (double t : {0.0, 0.3, 0.9}) {
    CHECK(b.j_at(t)[0] == doctest::Approx(t).epsilon(1e-15));
    CHECK(b.h_at(c, t)[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  // truncation: |x_t0| > n resets the start to the origin
  const auto tb = girsanov::make_bridge(vec1(25.0), 10.0, vec1(1.0), 0.0, 1.0, c);
  CHECK(tb.start[0] == 0.0);
  CHECK_THROWS_AS(girsanov::make_bridge(vec1(0.0), 10.0, vec1(1.0), 1.0, 1.0, c),
                  precondition_error);
}

TEST_CASE("bridge identity dJ/dt = b(J) + h holds exactly") {
  const auto c = jump_ou();
  const auto b = girsanov::make_bridge(vec1(0.4), 10.0, vec1(3.0), 0.2, 1.0, c);
  CHECK(b.j_at(0.2)[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(b.j_at(1.0)[0] == doctest::Approx(3.0).epsilon(1e-15));
  const VectorXd slope = b.slope();
  VectorXd drift(1);
  for (int i = 0; i <= 1000; ++i) {
    const double t = 0.2 + 0.8 * i / 1000.0;
    c.drift(b.j_at(t), drift);
    // h is defined as slope - b(J), so the identity is exact in fp
    CHECK(std::abs(slope[0] - drift[0] - b.h_at(c, t)[0]) == 0.0);
    // finite differences agree to discretization accuracy
    const double eps = 1e-6;
    if (t > 0.2 + eps && t < 1.0 - eps) {
      const double fd = (b.j_at(t + eps)[0] - b.j_at(t - eps)[0]) / (2 * eps);
      CHECK(std::abs(fd - drift[0] - b.h_at(c, t)[0]) < 1e-8);
    }
  }
}

TEST_CASE("bihari bound values and monotonicity") {
  // lambda0 = 0: plain affine bound
  CHECK(girsanov::bihari_bound(0.25, 2.0, 0.0, 0.0, 1.0) ==
        doctest::Approx(2.25).epsilon(1e-15));
  // direct evaluation: (0.11)^{exp(-0.1)}
  const double direct = std::pow(0.11, std::exp(-0.1));
  CHECK(girsanov::bihari_bound(0.01, 1.0, 1.0, 0.0, 0.1) ==
        doctest::Approx(direct).epsilon(1e-15));
  CHECK(direct == doctest::Approx(0.13572).epsilon(1e-4));
  // e0 = 0 and a short window make the bound vanish
  CHECK(girsanov::bihari_bound(0.0, 1.0, 1.0, 0.0, 1e-4) < 2e-4);
  // monotone in e0 and c
  CHECK(girsanov::bihari_bound(0.2, 1.0, 1.0, 0.0, 0.5) >
        girsanov::bihari_bound(0.1, 1.0, 1.0, 0.0, 0.5));
  CHECK(girsanov::bihari_bound(0.1, 2.0, 1.0, 0.0, 0.5) >
        girsanov::bihari_bound(0.1, 1.0, 1.0, 0.0, 0.5));
  // exponent degrades with |lambda0|: for a base below one the bound grows
  CHECK(girsanov::bihari_bound(0.05, 0.1, 2.0, 0.0, 1.0) >
        girsanov::bihari_bound(0.05, 0.1, 1.0, 0.0, 1.0));
}

TEST_CASE("zero control gives unit weight exactly") {
  const auto c = zero_drift_unit_sigma();
  girsanov::BridgeSpec spec;
  spec.t0 = 0.0;
  spec.horizon = 1.0;
  spec.truncation = 10.0;
  spec.target = vec1(0.0);  // slope 0 and b = 0: h vanishes identically
  Rng rng(31);
  const auto cp = girsanov::simulate_controlled(c, vec1(0.0), spec, 0.01, rng);
  for (double lx : cp.log_xi) CHECK(lx == 0.0);
  CHECK(cp.sup_h == 0.0);
}

TEST_CASE("xi is a mean-one martingale at every checkpoint") {
  const auto c = jump_ou();
  girsanov::BridgeSpec spec;
  spec.t0 = 0.05;
  spec.horizon = 0.5;
  spec.target = vec1(3.0);
  const auto ens = girsanov::run_controlled_ensemble(
      c, vec1(3.0), spec, 1e-3, 20000, 41, 8, {0.1, 0.25, 0.5});
  for (std::size_t cp = 0; cp < ens.checkpoints.size(); ++cp) {
    std::vector<double> xi(ens.log_xi_at[cp].size());
    for (std::size_t i = 0; i < xi.size(); ++i)
      xi[i] = std::exp(ens.log_xi_at[cp][i]);
    const auto ms = stats::mean_stderr(xi);
    CAPTURE(ens.checkpoints[cp]);
    CHECK(std::abs(ms.mean - 1.0) < 3.0 * ms.stderr_);
  }
}

TEST_CASE("reweighted controlled law matches the plain law") {
  const auto c = jump_ou();
  girsanov::BridgeSpec spec;
  spec.t0 = 0.05;
  spec.horizon = 0.5;
  spec.target = vec1(3.0);
  const std::size_t n = 20000;
  const auto ens =
      girsanov::run_controlled_ensemble(c, vec1(3.0), spec, 1e-3, n, 42, 8);

  sim::EnsembleSpec es;
  es.x0 = vec1(3.0);
  es.horizon = 0.5;
  es.dt = 1e-3;
  es.n_paths = n;
  es.checkpoints = {0.5};
  es.master_seed = 43;
  es.threads = 8;
  const auto plain = sim::run_ensemble(c, es);

  const std::vector<std::function<double(double)>> phis = {
      [](double x) { return std::tanh(x); },
      [](double x) { return std::cos(x); },
      [](double x) { return std::exp(-(x - 2.0) * (x - 2.0)); }};
  for (std::size_t f = 0; f < phis.size(); ++f) {
    std::vector<double> weighted(n), direct(n);
    for (std::size_t i = 0; i < n; ++i) {
      weighted[i] = std::exp(ens.log_xi_terminal[i]) * phis[f](ens.terminal[i][0]);
      direct[i] = phis[f](plain.checkpoint_states[0](i, 0));
    }
    const auto mw = stats::mean_stderr(weighted);
    const auto md = stats::mean_stderr(direct);
    CAPTURE(f);
    CHECK(std::abs(mw.mean - md.mean) <
          3.0 * std::hypot(mw.stderr_, md.stderr_));
  }
}

TEST_CASE("terminal spread shrinks as the window closes and n grows") {
  const auto c = jump_ou();
  auto spread = [&](double t0, double trunc, std::uint64_t seed) {
    girsanov::BridgeSpec spec;
    spec.t0 = t0;
    spec.horizon = 1.0;
    spec.truncation = trunc;
    spec.target = vec1(1.0);
    const auto ens =
        girsanov::run_controlled_ensemble(c, vec1(2.0), spec, 1e-3, 4000, seed, 8);
    std::vector<double> sq(ens.terminal.size());
    for (std::size_t i = 0; i < sq.size(); ++i)
      sq[i] = (ens.terminal[i] - spec.target).squaredNorm();
    return stats::mean_stderr(sq);
  };
  // t0 -> T shrinks the uncontrolled window
  const auto s1 = spread(0.5, 100.0, 51);
  const auto s2 = spread(0.8, 100.0, 52);
  const auto s3 = spread(0.95, 100.0, 53);
  CHECK(s2.mean < s1.mean + 2.0 * std::hypot(s1.stderr_, s2.stderr_));
  CHECK(s3.mean < s2.mean + 2.0 * std::hypot(s2.stderr_, s3.stderr_));
  // growing the truncation level removes the reset-to-zero starts
  const auto t1 = spread(0.5, 0.1, 54);
  const auto t2 = spread(0.5, 1.0, 55);
  const auto t3 = spread(0.5, 100.0, 56);
  CHECK(t2.mean < t1.mean + 2.0 * std::hypot(t1.stderr_, t2.stderr_));
  CHECK(t3.mean < t2.mean + 2.0 * std::hypot(t2.stderr_, t3.stderr_));
}

TEST_CASE("singular sigma raises a nondegeneracy error") {
  auto c = zero_drift_unit_sigma();
  c.diffusion = [](Eigen::Ref<const VectorXd>, Eigen::Ref<MatrixXd> out) {
    out.setZero();
  };
  girsanov::BridgeSpec spec;
  spec.t0 = 0.0;
  spec.horizon = 1.0;
  spec.target = vec1(1.0);  // nonzero control needs sigma^{-1}
  Rng rng(61);
  CHECK_THROWS_AS(girsanov::simulate_controlled(c, vec1(0.0), spec, 0.01, rng),
                  nondegeneracy_error);
}

TEST_CASE("irreducibility probe: easy target reaches certainty") {
  const auto c = jump_ou();
  const auto rep = girsanov::irreducibility_probe(
      c, vec1(0.0), vec1(0.0), 50.0, 1.0, 0.5, -1.0, 1e-2, 2000, 71, 4);
  CHECK(rep.weighted_p > 0.9);
  CHECK(rep.positivity_demonstrated);
  CHECK(rep.p_miss == 0.0);
  CHECK(rep.hits == 2000);
}

TEST_CASE("irreducibility probe: miss bound comparison and hard-miss flag") {
  const auto c = jump_ou();
  // calibrated bound dominates the observed miss probability
  const auto rep = girsanov::irreducibility_probe(
      c, vec1(0.0), vec1(1.0), 1.0, 1.0, 0.5, -1.0, 1e-3, 4000, 72, 8);
  const double miss_se = std::sqrt(std::max(rep.p_miss * (1 - rep.p_miss), 1e-9) /
                                   4000.0);
  CHECK(rep.p_miss <= rep.chebyshev_bound + 3.0 * miss_se);
  CHECK(rep.sup_h_max < 1e3);

  // an effectively unreachable ball: all paths miss, flagged without throwing
  const auto far = girsanov::irreducibility_probe(
      c, vec1(0.0), vec1(50.0), 1e-8, 0.05, 0.01, -1.0, 1e-3, 100, 73, 2);
  CHECK(far.hits == 0);
  CHECK_FALSE(far.positivity_demonstrated);
  CHECK(far.weighted_p == 0.0);
}

TEST_CASE("controlled runs are bit-identical across worker counts") {
  const auto c = jump_ou();
  girsanov::BridgeSpec spec;
  spec.t0 = 0.25;
  spec.horizon = 0.5;
  spec.target = vec1(1.0);
  const auto a =
      girsanov::run_controlled_ensemble(c, vec1(0.0), spec, 5e-3, 300, 81, 1);
  const auto b =
      girsanov::run_controlled_ensemble(c, vec1(0.0), spec, 5e-3, 300, 81, 8);
  CHECK(a.log_xi_terminal == b.log_xi_terminal);
  for (std::size_t i = 0; i < a.terminal.size(); ++i)
    CHECK(a.terminal[i] == b.terminal[i]);
}

TEST_SUITE_END();

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "jumplab/errors.hpp"
#include "jumplab/model.hpp"

using namespace jumplab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// bare diffusion-only coefficient set for checker tests
model::CoefficientSet custom_set(int dim, model::DriftFn b,
                                 model::DiffusionFn sig) {
  model::CoefficientSet c;
  c.dim = dim;
  c.drift = std::move(b);
  c.diffusion = std::move(sig);
  c.kernel.total_rate = 0.0;
  c.jump_lipschitz = [](Eigen::Ref<const VectorXd>) { return 1e-12; };
  return c;
}

model::DiffusionFn identity_sigma() {
  return [](Eigen::Ref<const VectorXd>, Eigen::Ref<MatrixXd> out) {
    out.setIdentity();
  };
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("kappa log family point values") {
  const auto k1 = model::ModulusKappa::log_family(1.0, 1.0, 2.0);
  CHECK(model::kappa_eval(k1, std::exp(-1.0)) == doctest::Approx(1.0).epsilon(1e-14));
  const auto k2 = model::ModulusKappa::log_family(2.0, 1.0, 2.0);
  CHECK(model::kappa_eval(k2, std::exp(-4.0)) == doctest::Approx(4.0).epsilon(1e-14));
  const auto k3 = model::ModulusKappa::log_family(3.0, 1.0, 2.0);
  CHECK(model::kappa_eval(k3, 2.0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS_AS(model::kappa_eval(k1, 0.0), precondition_error);
  CHECK_THROWS_AS(model::kappa_eval(k1, -1.0), precondition_error);
}

TEST_CASE("kappa log family shape: nonincreasing then constant") {
  const auto k = model::ModulusKappa::log_family(1.5, 1.0, 2.0);
  const double knee = std::exp(-1.0);  // e^{-K}
  double prev = std::numeric_limits<double>::infinity();
  for (double x = 1e-10; x <= knee; x *= 1.9) {
    const double v = k(x);
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
  const double plateau = k(knee);
  for (double x : {0.5, 1.0, 2.0, 10.0})
    CHECK(k(x) == doctest::Approx(plateau).epsilon(1e-14));
}

TEST_CASE("kappa grows at most logarithmically near zero") {
  const auto k = model::ModulusKappa::log_family(2.0, 1.0, 1.0 + 1e-12);
  double worst = 0.0;
  for (double x = 0.5; x >= 1e-12; x /= 2.0)
    worst = std::max(worst, k(x) / std::log(1.0 / x));
  CHECK(worst < 10.0);
}

TEST_CASE("rho_delta branch values and continuity") {
  const double d2 = std::exp(-2.0);
  CHECK(model::rho_delta(std::exp(-4.0), d2) ==
        doctest::Approx(4.0 * std::exp(-4.0)).epsilon(1e-14));
  // continuity at the knee: both branches give 2 e^{-2}
  const double left = model::rho_delta(d2, d2);
  CHECK(left == doctest::Approx(2.0 * d2).epsilon(1e-14));
  const double right = (std::log(1.0 / d2) - 1.0) * d2 + d2;
  CHECK(right == doctest::Approx(left).epsilon(1e-14));
  CHECK(model::rho_delta(1.0, d2) ==
        doctest::Approx(1.0 + d2).epsilon(1e-14));
  CHECK(model::rho_delta(0.0, d2) == 0.0);
  CHECK_THROWS_AS(model::rho_delta(1.0, 0.5), precondition_error);
  CHECK_THROWS_AS(model::rho_delta(1.0, 0.0), precondition_error);
  CHECK_THROWS_AS(model::rho_delta(-1.0, d2), precondition_error);
}

TEST_CASE("rho_delta is concave and nondecreasing on samples") {
  Rng rng(21);
  const double delta = 0.2;
  for (int rep = 0; rep < 2000; ++rep) {
    const double x = rng.uniform01() * 3.0;
    const double y = rng.uniform01() * 3.0;
    const double t = rng.uniform01();
    const double lhs = model::rho_delta(t * x + (1 - t) * y, delta);
    const double rhs = t * model::rho_delta(x, delta) +
                       (1 - t) * model::rho_delta(y, delta);
    CHECK(lhs >= rhs - 1e-12);
  }
  double prev = 0.0;
  for (double x = 1e-6; x < 3.0; x *= 1.1) {
    const double v = model::rho_delta(x, delta);
    CHECK(v >= prev - 1e-15);
    prev = v;
  }
}

TEST_CASE("envelope: x^2 kappa(x) <= rho_delta(x^2) for the log modulus") {
  // beta1 = 1 variant of the family, delta = e^{-2}
  const auto kappa = model::ModulusKappa::custom(
      [](double x) { return std::max(std::log(1.0 / x), 1.0); });
  const double delta = std::exp(-2.0);
  for (double x = 1e-8; x <= 1.0; x *= 1.2) {
    CHECK(x * x * kappa(x) <= model::rho_delta(x * x, delta) + 1e-12);
  }
}

TEST_CASE("checker: linear contraction satisfies the diffusion conditions") {
  auto c = custom_set(
      2,
      [](Eigen::Ref<const VectorXd> x, Eigen::Ref<VectorXd> out) { out = -x; },
      identity_sigma());
  c.lambda0 = 0.0;
  c.lambda1 = 2.0;
  c.lambda2 = 1.0;
  const auto rep = model::check_conditions(
      c,
      {model::Condition::monotone, model::Condition::growth,
       model::Condition::elliptic},
      model::CloudSpec{}, 7);
  for (const auto& e : rep.entries) {
    CAPTURE(e.name);
    CHECK(e.satisfied == model::Satisfied::yes);
  }
  // monotone slack is -2|x-y|^2 <= 0 everywhere: strictly negative worst
  CHECK(rep.entry("monotone").worst_violation < 0.0);
}

TEST_CASE("checker: quadratic drift growth violates the linear bound") {
  auto c = custom_set(
      1,
      [](Eigen::Ref<const VectorXd> x, Eigen::Ref<VectorXd> out) {
        out = x * x.norm();
      },
      identity_sigma());
  c.lambda1 = 1.0;
  const auto rep = model::check_conditions(c, {model::Condition::growth},
                                           model::CloudSpec{}, 7);
  const auto& e = rep.entry("growth");
  CHECK(e.satisfied == model::Satisfied::no);
  REQUIRE(e.witness.size() == 1);
  CHECK(e.witness[0].norm() > 5.0);  // worst point sits at large |x|
}

TEST_CASE("checker: dissipativity slack matches the analytic value") {
  // b = -x, sigma = I, f = u/2 with unit-rate uniform marks:
  // lhs = -2x^2 + 1 + 1/12, rhs = -x^2 + 2, slack = -x^2 - 11/12
  model::LinearParams p;
  p.dim = 1;
  p.theta = 1.0;
  p.sigma = 1.0;
  p.jump_rate = 1.0;
  p.jump_scale = 0.5;
  auto c = model::make_linear(p);
  c.lambda3 = 1.0;
  c.lambda4 = 2.0;
  c.r = 2.0;
  // tiny cloud radius pins the worst sample at x ~ 0, where the analytic
  // slack is exactly -11/12
  model::CloudSpec tiny;
  tiny.radius = 1e-6;
  const auto rep = model::check_conditions(c, {model::Condition::dissipative},
                                           tiny, 11);
  const auto& e = rep.entry("dissipative");
  CHECK(e.satisfied == model::Satisfied::yes);
  CHECK(e.worst_violation == doctest::Approx(-11.0 / 12.0).epsilon(1e-6));
  // and the default cloud still reports satisfied
  const auto rep2 = model::check_conditions(c, {model::Condition::dissipative},
                                            model::CloudSpec{}, 11);
  CHECK(rep2.entry("dissipative").satisfied == model::Satisfied::yes);
}

TEST_CASE("checker: jump lipschitz cap is flagged when gamma >= 1 is needed") {
  model::LinearParams p;
  p.dim = 1;
  p.jump_scale = 1.2;  // sup L = 1.2 cannot sit below any gamma < 1
  auto c = model::make_linear(p);
  const auto rep = model::check_conditions(
      c, {model::Condition::jump_lipschitz}, model::CloudSpec{}, 3);
  CHECK(rep.entry("jump_lipschitz").satisfied == model::Satisfied::no);
  // scaled down, the same family passes
  p.jump_scale = 0.5;
  auto c2 = model::make_linear(p);
  const auto rep2 = model::check_conditions(
      c2, {model::Condition::jump_lipschitz}, model::CloudSpec{}, 3);
  CHECK(rep2.entry("jump_lipschitz").satisfied == model::Satisfied::yes);
}

TEST_CASE("checker: built-in families audit as declared") {
  model::LinearParams lin;
  lin.jump_scale = 0.5;
  const auto rep = model::check_conditions(model::make_linear(lin),
                                           model::all_conditions(),
                                           model::CloudSpec{}, 5);
  CHECK(rep.all_satisfied());

  model::PolynomialParams poly;  // b = -x|x|
  const auto prep = model::check_conditions(
      model::make_polynomial_drift(poly),
      {model::Condition::growth, model::Condition::dissipative,
       model::Condition::monotone},
      model::CloudSpec{}, 5);
  CHECK(prep.entry("growth").satisfied == model::Satisfied::no);
  CHECK(prep.entry("dissipative").satisfied == model::Satisfied::yes);
  CHECK(prep.entry("monotone").satisfied == model::Satisfied::yes);

  model::LogModulusParams lm;
  lm.pert = 0.3;
  lm.sigma_ampl = 0.2;
  lm.jump_scale = 0.5;
  const auto lrep = model::check_conditions(model::make_log_modulus(lm),
                                            model::all_conditions(),
                                            model::CloudSpec{}, 5);
  for (const auto& e : lrep.entries) {
    CAPTURE(e.name);
    CAPTURE(e.worst_violation);
    CHECK(e.satisfied == model::Satisfied::yes);
  }
}

TEST_CASE("checker is deterministic given the seed") {
  model::LinearParams p;
  p.jump_scale = 0.5;
  const auto c = model::make_linear(p);
  const auto a = model::check_conditions(c, model::all_conditions(),
                                         model::CloudSpec{}, 99);
  const auto b = model::check_conditions(c, model::all_conditions(),
                                         model::CloudSpec{}, 99);
  CHECK(a.to_json().dump() == b.to_json().dump());
  const auto other = model::check_conditions(c, model::all_conditions(),
                                             model::CloudSpec{}, 100);
  CHECK(a.to_json().dump() != other.to_json().dump());
}

TEST_CASE("checker: non-finite coefficient output is an evaluation error") {
  auto c = custom_set(
      1,
      [](Eigen::Ref<const VectorXd> x, Eigen::Ref<VectorXd> out) {
        out[0] = x[0] > 5.0 ? std::numeric_limits<double>::quiet_NaN() : -x[0];
      },
      identity_sigma());
  CHECK_THROWS_AS(model::check_conditions(c, {model::Condition::growth},
                                          model::CloudSpec{}, 7),
                  evaluation_error);
}

TEST_CASE("coefficient set validation") {
  model::LinearParams p;
  auto c = model::make_linear(p);
  c.lambda2 = 0.0;
  CHECK_THROWS_AS(c.validate(), precondition_error);
  c.lambda2 = 1.0;
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), precondition_error);
  c.gamma = 0.5;
  c.r = 1.5;
  CHECK_THROWS_AS(c.validate(), precondition_error);
}

TEST_CASE("model hash distinguishes parameterizations") {
  model::LinearParams a, b;
  b.theta = 2.0;
  CHECK(model::make_linear(a).model_hash() != model::make_linear(b).model_hash());
  CHECK(model::make_linear(a).model_hash() == model::make_linear(a).model_hash());
}

TEST_SUITE_END();

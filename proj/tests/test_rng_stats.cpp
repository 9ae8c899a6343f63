#include <doctest.h>

#include <cmath>

#include "jumplab/rng.hpp"
#include "jumplab/stats.hpp"

using namespace jumplab;

TEST_SUITE_BEGIN("rng_stats");

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_equal_other = true;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next(), vb = b.next(), vc = c.next();
    all_equal = all_equal && va == vb;
    any_equal_other = any_equal_other && va == vc;
  }
  CHECK(all_equal);
  CHECK_FALSE(any_equal_other);
  CHECK(derive_seed(1, "path", 0) != derive_seed(1, "path", 1));
  CHECK(derive_seed(1, "path", 0) != derive_seed(2, "path", 0));
  CHECK(derive_seed(1, "path", 0) != derive_seed(1, "marks", 0));
  CHECK(derive_seed(7, "path", 3) == derive_seed(7, "path", 3));
}

TEST_CASE("normal sampler moments") {
  Rng rng(7);
  const int n = 400000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  const double mean = s / n, var = s2 / n, kurt = s4 / n;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 0.01);
  CHECK(std::abs(kurt - 3.0) < 0.1);
}

TEST_CASE("exponential sampler mean") {
  Rng rng(11);
  const int n = 200000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += rng.exponential(3.0);
  CHECK(std::abs(s / n - 1.0 / 3.0) < 0.005);
}

TEST_CASE("wilson interval") {
  const auto e = stats::wilson(50, 100);
  CHECK(e.p == doctest::Approx(0.5));
  CHECK(e.lo < 0.5);
  CHECK(e.hi > 0.5);
  CHECK(e.hi - e.lo ==
        doctest::Approx(2 * 1.96 * 0.05).epsilon(0.05));  // ~2 z sqrt(pq/n)
  const auto full = stats::wilson(100, 100);
  CHECK(full.p == 1.0);
  CHECK(full.hi == 1.0);
  CHECK(full.lo > 0.95);
  const auto none = stats::wilson(0, 100);
  CHECK(none.p == 0.0);
  CHECK(none.lo == 0.0);
}

TEST_CASE("two-sample KS: same law accepts, shifted law rejects") {
  Rng rng(5);
  std::vector<double> a(20000), b(20000), c(20000);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  for (auto& v : c) v = rng.normal() + 0.1;
  CHECK(stats::ks_two_sample(a, b).p > 0.001);
  CHECK(stats::ks_two_sample(a, c).p < 1e-6);
}

TEST_CASE("one-sample KS against the exact exponential CDF") {
  Rng rng(9);
  std::vector<double> xs(50000);
  for (auto& v : xs) v = rng.exponential(2.0);
  const auto r = stats::ks_one_sample(
      xs, [](double x) { return 1.0 - std::exp(-2.0 * x); });
  CHECK(r.p > 0.001);
}

TEST_CASE("kolmogorov survival function") {
  CHECK(stats::kolmogorov_q(0.0) == 1.0);
  CHECK(stats::kolmogorov_q(0.5) > stats::kolmogorov_q(1.0));
  CHECK(stats::kolmogorov_q(3.0) < 1e-6);
}

TEST_CASE("linear fit recovers an exact line") {
  std::vector<double> x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back(i);
    y.push_back(3.0 - 0.7 * i);
  }
  const auto f = stats::linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(-0.7).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quantile interpolation") {
  std::vector<double> xs = {4.0, 1.0, 3.0, 2.0};
  CHECK(stats::quantile(xs, 0.0) == 1.0);
  CHECK(stats::quantile(xs, 1.0) == 4.0);
  CHECK(stats::quantile(xs, 0.5) == doctest::Approx(2.5));
}

TEST_CASE("kahan summation keeps tiny terms") {
  stats::KahanSum k;
  k.add(1.0);
  for (int i = 0; i < 10000; ++i) k.add(1e-16);
  CHECK(k.value() == doctest::Approx(1.0 + 1e-12).epsilon(1e-10));
}

TEST_SUITE_END();

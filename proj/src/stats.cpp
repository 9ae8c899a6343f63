#include "jumplab/stats.hpp"

#include <algorithm>
#include <cmath>

#include "jumplab/errors.hpp"

namespace jumplab::stats {

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) {
    const double d = x - out.mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(xs.size() - 1);
  out.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

ProbEstimate wilson(long k, long n, double z) {
  ProbEstimate e;
  e.k = k;
  e.n = n;
  if (n <= 0) return e;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  e.p = p;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  e.lo = (k == 0) ? 0.0 : std::max(0.0, center - half);
  e.hi = (k == n) ? 1.0 : std::min(1.0, center + half);
  return e;
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  const double a2 = -2.0 * lambda * lambda;
  double fac = 2.0, sum = 0.0, termbf = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = fac * std::exp(a2 * j * j);
    sum += term;
    if (std::abs(term) <= 0.001 * termbf || std::abs(term) <= 1.0e-8 * sum)
      return std::min(1.0, std::max(0.0, sum));
    fac = -fac;
    termbf = std::abs(term);
  }
  return 1.0;  // failed to converge: no evidence against
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw usage_error("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double xa = a[i], xb = b[j];
    if (xa <= xb) fa = static_cast<double>(++i) / na;
    if (xb <= xa) fb = static_cast<double>(++j) / nb;
    d = std::max(d, std::abs(fa - fb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw usage_error("linear_fit: need >= 2 points with matching lengths");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) throw usage_error("linear_fit: degenerate abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssres = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ssres += r * r;
  }
  // flat data fitted by a flat line is a perfect fit
  f.r2 = (syy <= 1e-300) ? 1.0 : 1.0 - ssres / syy;
  return f;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw usage_error("quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  if (q <= 0.0) return xs.front();
  if (q >= 1.0) return xs.back();
  const double pos = q * static_cast<double>(xs.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= xs.size()) return xs.back();
  return xs[i] * (1.0 - frac) + xs[i + 1] * frac;
}

}  // namespace jumplab::stats

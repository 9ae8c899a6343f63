#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "jumplab/rng.hpp"

namespace jumplab::stats {

// Compensated summation; used where terms span many orders of magnitude.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = sum_ + y;
    c_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

// Two-pass mean / standard error of the mean.
MeanStderr mean_stderr(const std::vector<double>& xs);

struct ProbEstimate {
  double p = 0.0;
  double lo = 0.0;   // Wilson 95% interval
  double hi = 0.0;
  long k = 0;
  long n = 0;
};

ProbEstimate wilson(long k, long n, double z = 1.959963984540054);

// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda);

struct KsResult {
  double d = 0.0;  // sup |F1 - F2|
  double p = 0.0;  // asymptotic p-value
};

// Two-sample KS on raw samples (inputs copied and sorted internally).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// One-sample KS against a CDF given as sorted sample + callable.
template <class Cdf>
KsResult ks_one_sample(std::vector<double> xs, Cdf&& cdf);

double normal_cdf(double x);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

// q in [0,1]; linear interpolation between order statistics.
double quantile(std::vector<double> xs, double q);

// --- impl ---

template <class Cdf>
KsResult ks_one_sample(std::vector<double> xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    const double hi = (static_cast<double>(i) + 1.0) / n - f;
    const double lo = f - static_cast<double>(i) / n;
    if (hi > d) d = hi;
    if (lo > d) d = lo;
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

}  // namespace jumplab::stats

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "jumplab/model.hpp"
#include "jumplab/rng.hpp"

namespace jumplab::ergodic {

// Axis-aligned histogram grid. Gridded total variation is kept to d <= 3;
// higher dimensions use smooth_distance below.
struct GridSpec {
  Eigen::VectorXd lo, hi;
  std::vector<int> bins;  // per axis

  static GridSpec regular(Eigen::VectorXd lo, Eigen::VectorXd hi,
                          int bins_per_axis);
  // Box covering `coverage` of the sample mass per axis, padded by `pad`
  // of the resulting width on each side.
  static GridSpec from_samples(const std::vector<Eigen::VectorXd>& samples,
                               int bins_per_axis, double coverage = 0.999,
                               double pad = 0.05);

  int dim() const { return static_cast<int>(lo.size()); }
  long cell_count() const;
  // flat cell index, or -1 when x is outside the box
  long cell_of(Eigen::Ref<const Eigen::VectorXd> x) const;
  Eigen::VectorXd cell_center(long idx) const;
  Eigen::VectorXd cell_lo(long idx) const;
  Eigen::VectorXd cell_hi(long idx) const;
  bool same_as(const GridSpec& other) const;
  void validate() const;
};

// Histogram measure on a fixed grid plus an overflow bucket. Counts stay
// integral until normalization, so merging partial histograms is exact and
// order-independent.
class EmpiricalMeasure {
 public:
  explicit EmpiricalMeasure(GridSpec grid);

  void add(Eigen::Ref<const Eigen::VectorXd> x);
  void merge(const EmpiricalMeasure& other);  // same grid required

  const GridSpec& grid() const { return grid_; }
  long count() const { return count_; }
  double mass(long cell) const;
  double overflow() const;
  double total_mass() const;  // sum of masses + overflow (== 1 given samples)

  // raw-sample moments per axis (no binning bias)
  double mean(int axis) const;
  double variance(int axis) const;

  // merge `factor` adjacent bins per axis (factor must divide every bin count)
  EmpiricalMeasure coarsen(int factor) const;

  // draw a point from the in-box part of the measure (cell by mass, uniform
  // within the cell); returns the cell index through *cell when non-null
  Eigen::VectorXd draw_point(Rng& rng, long* cell = nullptr) const;

  nlohmann::ordered_json to_json() const;

 private:
  GridSpec grid_;
  std::vector<std::int64_t> counts_;
  std::int64_t overflow_count_ = 0;
  std::int64_t count_ = 0;
  // per-axis accumulators
  Eigen::VectorXd sum_, sum_sq_;
  mutable std::vector<double> cdf_;  // lazy, for draw_point
};

// 1/2 sum |m1 - m2| over cells + 1/2 |overflow difference|; grids must match.
double tv_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

// Rough analytic floor of the TV estimator between two empirical measures of
// effective sizes n1, n2 whose common law is `ref`: the expected TV of two
// noise-only histograms. Used to pick the fit window.
double tv_noise_floor(const EmpiricalMeasure& ref, double n1, double n2);

// Smooth test-function distance for d > 3: sup over a seeded dictionary of
// tanh ridge functions of |mean_a phi - mean_b phi|.
double smooth_distance(const std::vector<Eigen::VectorXd>& a,
                       const std::vector<Eigen::VectorXd>& b,
                       int n_features, std::uint64_t seed);

enum class KBMode { single_path, ensemble };

struct KBSpec {
  Eigen::VectorXd x0;
  double horizon = 100.0;
  double dt = 1e-3;
  double burn_in = -1.0;  // < 0: 10% of horizon (single-path default)
  KBMode mode = KBMode::single_path;
  std::size_t n_paths = 1;  // ensemble mode
  std::uint64_t seed = 0;
  int threads = 1;
};

// Time-average (occupation) measure: one long path sampled at its uniform
// grid nodes over [burn_in, T], or an ensemble with one uniformly-drawn
// sample time per path.
EmpiricalMeasure krylov_bogoliubov(const model::CoefficientSet& coeffs,
                                   const KBSpec& spec, const GridSpec& grid);

// Data-driven grid: decimated pre-pass of the same run.
GridSpec auto_grid(const model::CoefficientSet& coeffs, const KBSpec& spec,
                   int bins_per_axis, std::size_t max_samples = 200000);

struct RateFit {
  std::vector<double> times, tv, stderr_;
  std::vector<int> window;  // indices used by the fit
  double alpha = 0.0;       // decay rate (-slope of log tv)
  double log_c = 0.0;       // intercept
  double r2 = 0.0;
  double alpha_lo = 0.0, alpha_hi = 0.0;  // bootstrap 95%
  nlohmann::ordered_json to_json() const;
};

// Least squares on (t, log tv) over the usable window: t at or past the
// mixing knee (first tv < 0.9 tv[0]) and tv above 3x its stderr. Bootstrap
// CI by residual resampling. Throws insufficient_signal_error with < 4
// usable points.
RateFit rate_fit(const std::vector<double>& times,
                 const std::vector<double>& tvs,
                 const std::vector<double>& stderrs, std::uint64_t seed);

// f' = -l3 f^{r/2} + l4, f(0) = f0, integrated with an adaptive implicit
// trapezoid scheme (stiff-safe for large f0). Requires r > 2.
double drift_ode_bound(double r, double lambda3, double lambda4, double f0,
                       double t);

// Closed form for l4 = 0: (f0^{1-r/2} + l3 (r/2-1) t)^{1/(1-r/2)}.
double drift_ode_closed_form(double r, double lambda3, double f0, double t);

struct SpectralProbe {
  std::vector<double> times;
  std::vector<double> gammas;
  // series[g][t_idx] = empirical L^gamma(mu) norm of p_t phi - mu(phi)
  std::vector<std::vector<double>> series;
  double mu_phi = 0.0;
  nlohmann::ordered_json to_json() const;
};

// Starts paths from mu-distributed points, estimates p_t phi per start cell,
// and reports |p_t phi - mu(phi)| in the empirical L^gamma(mu) norms.
SpectralProbe spectral_probe(
    const model::CoefficientSet& coeffs, const EmpiricalMeasure& mu,
    const std::function<double(Eigen::Ref<const Eigen::VectorXd>)>& phi,
    const std::vector<double>& times, const std::vector<double>& gammas,
    std::size_t n_paths, double dt, std::uint64_t seed, int threads);

}  // namespace jumplab::ergodic

#include "jumplab/ergodic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jumplab/detail/stepper.hpp"
#include "jumplab/errors.hpp"
#include "jumplab/sim.hpp"
#include "jumplab/stats.hpp"

namespace jumplab::ergodic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// --- GridSpec ---

GridSpec GridSpec::regular(VectorXd lo, VectorXd hi, int bins_per_axis) {
  GridSpec g;
  g.lo = std::move(lo);
  g.hi = std::move(hi);
  g.bins.assign(static_cast<std::size_t>(g.lo.size()), bins_per_axis);
  g.validate();
  return g;
}

GridSpec GridSpec::from_samples(const std::vector<VectorXd>& samples,
                                int bins_per_axis, double coverage,
                                double pad) {
  if (samples.empty())
    throw precondition_error("GridSpec::from_samples: no samples");
  const int d = static_cast<int>(samples.front().size());
  VectorXd lo(d), hi(d);
  std::vector<double> axis(samples.size());
  const double ql = (1.0 - coverage) / 2.0;
  for (int a = 0; a < d; ++a) {
    for (std::size_t i = 0; i < samples.size(); ++i) axis[i] = samples[i][a];
    const double l = stats::quantile(axis, ql);
    const double h = stats::quantile(axis, 1.0 - ql);
    const double w = std::max(h - l, 1e-12);
    lo[a] = l - pad * w;
    hi[a] = h + pad * w;
  }
  return regular(std::move(lo), std::move(hi), bins_per_axis);
}

void GridSpec::validate() const {
  if (lo.size() != hi.size() || static_cast<std::size_t>(lo.size()) != bins.size())
    throw precondition_error("GridSpec: inconsistent dimensions");
  if (dim() < 1) throw precondition_error("GridSpec: dim must be >= 1");
  if (dim() > 3)
    throw precondition_error(
        "GridSpec: gridded measures support d <= 3; use smooth_distance");
  long cells = 1;
  for (std::size_t a = 0; a < bins.size(); ++a) {
    if (bins[a] < 1) throw precondition_error("GridSpec: bins must be >= 1");
    if (!(hi[static_cast<int>(a)] > lo[static_cast<int>(a)]))
      throw precondition_error("GridSpec: hi must exceed lo");
    cells *= bins[a];
    if (cells > (1L << 24))
      throw precondition_error("GridSpec: too many cells");
  }
}

long GridSpec::cell_count() const {
  long c = 1;
  for (int b : bins) c *= b;
  return c;
}

long GridSpec::cell_of(Eigen::Ref<const VectorXd> x) const {
  long idx = 0;
  for (int a = 0; a < dim(); ++a) {
    if (!(x[a] >= lo[a] && x[a] < hi[a])) {
      // points exactly on the upper face belong to the last bin
      if (x[a] == hi[a]) {
        idx = idx * bins[static_cast<std::size_t>(a)] +
              (bins[static_cast<std::size_t>(a)] - 1);
        continue;
      }
      return -1;
    }
    const double w = (hi[a] - lo[a]) / bins[static_cast<std::size_t>(a)];
    long k = static_cast<long>((x[a] - lo[a]) / w);
    if (k >= bins[static_cast<std::size_t>(a)])
      k = bins[static_cast<std::size_t>(a)] - 1;
    idx = idx * bins[static_cast<std::size_t>(a)] + k;
  }
  return idx;
}

VectorXd GridSpec::cell_lo(long idx) const {
  VectorXd out(dim());
  for (int a = dim() - 1; a >= 0; --a) {
    const long b = bins[static_cast<std::size_t>(a)];
    const long k = idx % b;
    idx /= b;
    const double w = (hi[a] - lo[a]) / static_cast<double>(b);
    out[a] = lo[a] + static_cast<double>(k) * w;
  }
  return out;
}

VectorXd GridSpec::cell_hi(long idx) const {
  VectorXd l = cell_lo(idx);
  for (int a = 0; a < dim(); ++a)
    l[a] += (hi[a] - lo[a]) / bins[static_cast<std::size_t>(a)];
  return l;
}

VectorXd GridSpec::cell_center(long idx) const {
  VectorXd l = cell_lo(idx);
  for (int a = 0; a < dim(); ++a)
    l[a] += 0.5 * (hi[a] - lo[a]) / bins[static_cast<std::size_t>(a)];
  return l;
}

bool GridSpec::same_as(const GridSpec& other) const {
  return bins == other.bins && lo == other.lo && hi == other.hi;
}

// --- EmpiricalMeasure ---

EmpiricalMeasure::EmpiricalMeasure(GridSpec grid) : grid_(std::move(grid)) {
  grid_.validate();
  counts_.assign(static_cast<std::size_t>(grid_.cell_count()), 0);
  sum_ = VectorXd::Zero(grid_.dim());
  sum_sq_ = VectorXd::Zero(grid_.dim());
}

void EmpiricalMeasure::add(Eigen::Ref<const VectorXd> x) {
  const long c = grid_.cell_of(x);
  if (c < 0)
    ++overflow_count_;
  else
    ++counts_[static_cast<std::size_t>(c)];
  ++count_;
  sum_ += x;
  sum_sq_ += x.cwiseProduct(x);
  cdf_.clear();
}

void EmpiricalMeasure::merge(const EmpiricalMeasure& other) {
  if (!grid_.same_as(other.grid_))
    throw usage_error("EmpiricalMeasure::merge: grid mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  overflow_count_ += other.overflow_count_;
  count_ += other.count_;
  sum_ += other.sum_;
  sum_sq_ += other.sum_sq_;
  cdf_.clear();
}

double EmpiricalMeasure::mass(long cell) const {
  if (count_ == 0) return 0.0;
  return static_cast<double>(counts_[static_cast<std::size_t>(cell)]) /
         static_cast<double>(count_);
}

double EmpiricalMeasure::overflow() const {
  if (count_ == 0) return 0.0;
  return static_cast<double>(overflow_count_) / static_cast<double>(count_);
}

double EmpiricalMeasure::total_mass() const {
  if (count_ == 0) return 0.0;
  std::int64_t s = overflow_count_;
  for (auto c : counts_) s += c;
  return static_cast<double>(s) / static_cast<double>(count_);
}

double EmpiricalMeasure::mean(int axis) const {
  if (count_ == 0) throw usage_error("EmpiricalMeasure::mean: empty");
  return sum_[axis] / static_cast<double>(count_);
}

double EmpiricalMeasure::variance(int axis) const {
  if (count_ < 2) throw usage_error("EmpiricalMeasure::variance: need >= 2");
  const double m = mean(axis);
  return std::max(0.0,
                  sum_sq_[axis] / static_cast<double>(count_) - m * m);
}

EmpiricalMeasure EmpiricalMeasure::coarsen(int factor) const {
  if (factor < 1)
    throw precondition_error("coarsen: factor must be >= 1");
  GridSpec g = grid_;
  for (auto& b : g.bins) {
    if (b % factor != 0)
      throw precondition_error("coarsen: factor must divide the bin counts");
    b /= factor;
  }
  EmpiricalMeasure out(g);
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i] == 0) continue;
    const long c = g.cell_of(grid_.cell_center(static_cast<long>(i)));
    out.counts_[static_cast<std::size_t>(c)] += counts_[i];
  }
  out.overflow_count_ = overflow_count_;
  out.count_ = count_;
  out.sum_ = sum_;
  out.sum_sq_ = sum_sq_;
  return out;
}

VectorXd EmpiricalMeasure::draw_point(Rng& rng, long* cell) const {
  const std::int64_t inbox = count_ - overflow_count_;
  if (inbox <= 0) throw usage_error("draw_point: no in-box mass");
  if (cdf_.empty()) {
    cdf_.resize(counts_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      acc += static_cast<double>(counts_[i]) / static_cast<double>(inbox);
      cdf_[i] = acc;
    }
    cdf_.back() = 1.0;
  }
  const double u = rng.uniform01();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  const long c = static_cast<long>(it - cdf_.begin());
  if (cell) *cell = c;
  const VectorXd l = grid_.cell_lo(c), h = grid_.cell_hi(c);
  VectorXd x(grid_.dim());
  for (int a = 0; a < grid_.dim(); ++a) x[a] = rng.uniform(l[a], h[a]);
  return x;
}

nlohmann::ordered_json EmpiricalMeasure::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json grid;
  grid["lo"] = std::vector<double>(grid_.lo.data(), grid_.lo.data() + grid_.lo.size());
  grid["hi"] = std::vector<double>(grid_.hi.data(), grid_.hi.data() + grid_.hi.size());
  grid["bins"] = grid_.bins;
  j["grid"] = grid;
  j["count"] = count_;
  j["overflow"] = overflow();
  // sparse cells: [index, mass]
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < counts_.size(); ++i)
    if (counts_[i] != 0)
      cells.push_back({static_cast<long>(i), mass(static_cast<long>(i))});
  j["cells"] = cells;
  return j;
}

double tv_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (!a.grid().same_as(b.grid()))
    throw usage_error("tv_distance: measures live on different grids");
  double s = 0.0;
  const long n = a.grid().cell_count();
  for (long i = 0; i < n; ++i) s += std::abs(a.mass(i) - b.mass(i));
  return 0.5 * s + 0.5 * std::abs(a.overflow() - b.overflow());
}

double tv_noise_floor(const EmpiricalMeasure& ref, double n1, double n2) {
  // E|binomial noise| per cell ~ sqrt(2 m (1/n1 + 1/n2) / pi)
  const double covar = 1.0 / n1 + 1.0 / n2;
  double s = 0.0;
  const long n = ref.grid().cell_count();
  for (long i = 0; i < n; ++i) {
    const double m = ref.mass(i);
    if (m > 0.0) s += std::sqrt(2.0 * m * covar / M_PI);
  }
  const double ov = ref.overflow();
  if (ov > 0.0) s += std::sqrt(2.0 * ov * covar / M_PI);
  return 0.5 * s;
}

double smooth_distance(const std::vector<VectorXd>& a,
                       const std::vector<VectorXd>& b, int n_features,
                       std::uint64_t seed) {
  if (a.empty() || b.empty())
    throw usage_error("smooth_distance: empty sample");
  const int d = static_cast<int>(a.front().size());
  Rng rng(derive_seed(seed, "smooth-features", 0));
  double worst = 0.0;
  VectorXd w(d);
  for (int f = 0; f < n_features; ++f) {
    for (int i = 0; i < d; ++i) w[i] = rng.normal();
    w.normalize();
    const double scale = std::exp(rng.uniform(-1.0, 1.5));
    const double bias = rng.uniform(-2.0, 2.0);
    double ma = 0.0, mb = 0.0;
    for (const auto& x : a) ma += std::tanh(scale * w.dot(x) + bias);
    for (const auto& x : b) mb += std::tanh(scale * w.dot(x) + bias);
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(b.size());
    worst = std::max(worst, std::abs(ma - mb));
  }
  return worst;
}

// --- Krylov-Bogoliubov ---

namespace {

struct OccupationObserver {
  EmpiricalMeasure* measure = nullptr;
  double burn_in = 0.0;
  double dt = 0.0;
  double tol = 0.0;

  void on_start(const std::vector<double>&,
                const std::vector<sim::detail::JumpEvent>&,
                const VectorXd& x0) {
    if (burn_in <= 0.0) measure->add(x0);
  }
  void on_node(std::size_t, double t, const VectorXd& x, bool, const VectorXd&,
               double) {
    if (t < burn_in) return;
    // sample only the uniform nodes for an even-weight occupation average
    const double k = t / dt;
    if (std::abs(k - std::round(k)) <= tol) measure->add(x);
  }
  void on_finish() {}
};

}  // namespace

EmpiricalMeasure krylov_bogoliubov(const model::CoefficientSet& coeffs,
                                   const KBSpec& spec, const GridSpec& grid) {
  coeffs.validate();
  const double burn =
      spec.burn_in >= 0.0 ? spec.burn_in : 0.1 * spec.horizon;
  if (burn >= spec.horizon)
    throw precondition_error("krylov_bogoliubov: burn_in must be < horizon");
  EmpiricalMeasure mu(grid);
  if (spec.mode == KBMode::single_path) {
    Rng rng(derive_seed(spec.seed, "kb-path", 0));
    OccupationObserver obs;
    obs.measure = &mu;
    obs.burn_in = burn;
    obs.dt = spec.dt;
    obs.tol = 1e-9;
    sim::detail::run_jump_adapted(coeffs, spec.x0, spec.horizon, spec.dt, {},
                                  rng, obs);
    return mu;
  }
  // ensemble mode: one uniformly-drawn sample time per path, snapped to the
  // uniform grid so it is an exact node
  const std::size_t n = spec.n_paths;
  std::vector<VectorXd> samples(n);
  sim::parallel_for(n, spec.threads, [&](std::size_t i) {
    Rng trng(derive_seed(spec.seed, "kb-times", i));
    const double t_raw = trng.uniform(burn, spec.horizon);
    const double t = std::min(spec.horizon,
                              std::round(t_raw / spec.dt) * spec.dt);
    sim::EnsembleSpec es;
    es.x0 = spec.x0;
    es.horizon = std::max(t, spec.dt);
    es.dt = spec.dt;
    es.n_paths = 1;
    es.checkpoints = {es.horizon};
    es.master_seed = derive_seed(spec.seed, "kb-ens", i);
    const auto one = sim::run_ensemble(coeffs, es);
    samples[i] = one.checkpoint_states[0].row(0).transpose();
  });
  for (const auto& s : samples) mu.add(s);
  return mu;
}

GridSpec auto_grid(const model::CoefficientSet& coeffs, const KBSpec& spec,
                   int bins_per_axis, std::size_t max_samples) {
  // decimated pre-pass with the same seed; only the box is data-driven
  KBSpec pre = spec;
  struct Collect {
    std::vector<VectorXd>* out;
    double burn_in = 0.0;
    double dt = 0.0;
    std::size_t stride = 1, seen = 0;
    void on_start(const std::vector<double>&,
                  const std::vector<sim::detail::JumpEvent>&, const VectorXd&) {}
    void on_node(std::size_t, double t, const VectorXd& x, bool,
                 const VectorXd&, double) {
      if (t < burn_in) return;
      if (seen++ % stride == 0) out->push_back(x);
    }
    void on_finish() {}
  };
  const double burn = pre.burn_in >= 0.0 ? pre.burn_in : 0.1 * pre.horizon;
  const std::size_t nodes =
      static_cast<std::size_t>((pre.horizon - burn) / pre.dt) + 1;
  std::vector<VectorXd> samples;
  samples.reserve(std::min(nodes, max_samples) + 8);
  Collect obs;
  obs.out = &samples;
  obs.burn_in = burn;
  obs.dt = pre.dt;
  obs.stride = std::max<std::size_t>(1, nodes / max_samples);
  Rng rng(derive_seed(pre.seed, "kb-path", 0));
  sim::detail::run_jump_adapted(coeffs, pre.x0, pre.horizon, pre.dt, {}, rng,
                                obs);
  return GridSpec::from_samples(samples, bins_per_axis);
}

// --- rate fit ---

nlohmann::ordered_json RateFit::to_json() const {
  nlohmann::ordered_json j;
  j["times"] = times;
  j["tv"] = tv;
  j["stderr"] = stderr_;
  j["window"] = window;
  j["alpha"] = alpha;
  j["alpha_lo"] = alpha_lo;
  j["alpha_hi"] = alpha_hi;
  j["log_c"] = log_c;
  j["r2"] = r2;
  return j;
}

RateFit rate_fit(const std::vector<double>& times,
                 const std::vector<double>& tvs,
                 const std::vector<double>& stderrs, std::uint64_t seed) {
  if (times.size() != tvs.size() || times.size() != stderrs.size())
    throw precondition_error("rate_fit: mismatched input lengths");
  RateFit fit;
  fit.times = times;
  fit.tv = tvs;
  fit.stderr_ = stderrs;
  if (times.empty()) throw insufficient_signal_error("rate_fit: no data");

  // mixing knee: first point decisively below tv[0]
  std::size_t knee = 0;
  for (std::size_t i = 0; i < tvs.size(); ++i)
    if (tvs[i] < 0.9 * tvs[0]) {
      knee = i;
      break;
    }
  for (std::size_t i = knee; i < tvs.size(); ++i) {
    if (tvs[i] <= 3.0 * stderrs[i]) continue;  // noise floor
    if (!(tvs[i] > 0.0)) continue;
    fit.window.push_back(static_cast<int>(i));
  }
  if (fit.window.size() < 4)
    throw insufficient_signal_error(
        "rate_fit: fewer than 4 usable points above the noise floor");

  std::vector<double> xs, ys;
  for (int i : fit.window) {
    xs.push_back(times[static_cast<std::size_t>(i)]);
    ys.push_back(std::log(tvs[static_cast<std::size_t>(i)]));
  }
  const auto lf = stats::linear_fit(xs, ys);
  fit.alpha = -lf.slope;
  fit.log_c = lf.intercept;
  fit.r2 = lf.r2;

  // residual bootstrap for the alpha CI
  std::vector<double> resid(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    resid[i] = ys[i] - (lf.intercept + lf.slope * xs[i]);
  Rng rng(derive_seed(seed, "ratefit-bootstrap", 0));
  const int kBoot = 1000;
  std::vector<double> alphas;
  alphas.reserve(kBoot);
  std::vector<double> yb(xs.size());
  for (int b = 0; b < kBoot; ++b) {
    for (std::size_t i = 0; i < xs.size(); ++i)
      yb[i] = (lf.intercept + lf.slope * xs[i]) +
              resid[rng.below(resid.size())];
    alphas.push_back(-stats::linear_fit(xs, yb).slope);
  }
  fit.alpha_lo = stats::quantile(alphas, 0.025);
  fit.alpha_hi = stats::quantile(alphas, 0.975);
  return fit;
}

// --- drift ODE ---

double drift_ode_closed_form(double r, double lambda3, double f0, double t) {
  if (!(r > 2.0)) throw precondition_error("drift_ode: r must be > 2");
  const double p = 1.0 - r / 2.0;  // negative
  return std::pow(std::pow(f0, p) + lambda3 * (r / 2.0 - 1.0) * t, 1.0 / p);
}

namespace {

double ode_rhs(double f, double r, double l3, double l4) {
  return -l3 * std::pow(std::max(f, 0.0), r / 2.0) + l4;
}

// One implicit trapezoid step by Newton; f stays >= 0.
double trap_step(double f, double h, double r, double l3, double l4) {
  const double g0 = ode_rhs(f, r, l3, l4);
  double z = std::max(0.0, f + h * g0);  // explicit predictor
  for (int it = 0; it < 50; ++it) {
    const double gz = ode_rhs(z, r, l3, l4);
    const double res = z - f - 0.5 * h * (g0 + gz);
    const double dg = -l3 * (r / 2.0) * std::pow(std::max(z, 1e-300), r / 2.0 - 1.0);
    const double jac = 1.0 - 0.5 * h * dg;
    const double step = res / jac;
    z = std::max(0.0, z - step);
    if (std::abs(step) <= 1e-14 * std::max(1.0, z)) break;
  }
  return z;
}

}  // namespace

double drift_ode_bound(double r, double lambda3, double lambda4, double f0,
                       double t) {
  if (!(r > 2.0)) throw precondition_error("drift_ode_bound: r must be > 2");
  if (!(lambda3 > 0.0) || lambda4 < 0.0)
    throw precondition_error("drift_ode_bound: need lambda3 > 0, lambda4 >= 0");
  if (f0 < 0.0) throw precondition_error("drift_ode_bound: f0 must be >= 0");
  if (t <= 0.0) return f0;
  double f = f0;
  double s = 0.0;
  double h = std::min(t, 1e-3);
  const double rel_tol = 1e-11;
  while (s < t) {
    h = std::min(h, t - s);
    // step-doubling error control on the 2nd-order trapezoid rule
    const double one = trap_step(f, h, r, lambda3, lambda4);
    const double half = trap_step(trap_step(f, 0.5 * h, r, lambda3, lambda4),
                                  0.5 * h, r, lambda3, lambda4);
    const double err = std::abs(one - half) / 3.0;
    const double tol = rel_tol * std::max(1.0, std::abs(half));
    if (err <= tol) {
      f = half + (half - one) / 3.0;  // local extrapolation
      s += h;
      if (err < 0.1 * tol) h *= 2.0;
    } else {
      h *= 0.5;
      if (h < 1e-14 * std::max(1.0, t))
        throw precondition_error("drift_ode_bound: step size underflow");
    }
  }
  return f;
}

// --- spectral probe ---

nlohmann::ordered_json SpectralProbe::to_json() const {
  nlohmann::ordered_json j;
  j["times"] = times;
  j["gammas"] = gammas;
  j["mu_phi"] = mu_phi;
  j["series"] = series;
  return j;
}

SpectralProbe spectral_probe(
    const model::CoefficientSet& coeffs, const EmpiricalMeasure& mu,
    const std::function<double(Eigen::Ref<const VectorXd>)>& phi,
    const std::vector<double>& times, const std::vector<double>& gammas,
    std::size_t n_paths, double dt, std::uint64_t seed, int threads) {
  coeffs.validate();
  if (times.empty()) throw precondition_error("spectral_probe: no times");
  SpectralProbe probe;
  probe.times = times;
  probe.gammas = gammas;

  // mu-distributed starts, cell recorded
  std::vector<VectorXd> starts(n_paths);
  std::vector<long> cells(n_paths);
  {
    Rng rng(derive_seed(seed, "spectral-init", 0));
    for (std::size_t i = 0; i < n_paths; ++i)
      starts[i] = mu.draw_point(rng, &cells[i]);
  }
  double mu_phi = 0.0;
  for (const auto& s : starts) mu_phi += phi(s);
  mu_phi /= static_cast<double>(n_paths);
  probe.mu_phi = mu_phi;

  const double t_max = *std::max_element(times.begin(), times.end());
  // phi(X_t) per path and checkpoint
  MatrixXd vals(n_paths, times.size());
  sim::parallel_for(n_paths, threads, [&](std::size_t i) {
    Rng rng(sim::derive_path_seed(derive_seed(seed, "spectral", 0), i));
    sim::EnsembleSpec es;
    es.x0 = starts[i];
    es.horizon = t_max;
    es.dt = dt;
    es.n_paths = 1;
    es.checkpoints = times;
    es.master_seed = 0;  // unused below
    // run a single path directly to keep the per-path seed usage flat
    struct Thin {
      const std::vector<double>* cps;
      std::size_t idx = 0;
      std::vector<VectorXd> at;
      void on_start(const std::vector<double>&,
                    const std::vector<sim::detail::JumpEvent>&,
                    const VectorXd& x0) {
        while (idx < cps->size() && (*cps)[idx] == 0.0) {
          at.push_back(x0);
          ++idx;
        }
      }
      void on_node(std::size_t, double t, const VectorXd& x, bool,
                   const VectorXd&, double) {
        while (idx < cps->size() && (*cps)[idx] == t) {
          at.push_back(x);
          ++idx;
        }
      }
      void on_finish() {}
    } obs;
    obs.cps = &times;
    sim::detail::run_jump_adapted(coeffs, starts[i], t_max, dt, times, rng,
                                  obs);
    for (std::size_t k = 0; k < times.size(); ++k)
      vals(i, k) = phi(obs.at[k]);
  });

  // group by start cell: p_t phi per cell, then L^gamma(mu) norms
  std::vector<long> uniq = cells;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<double> cell_mass(uniq.size(), 0.0);
  double mass_total = 0.0;
  for (std::size_t c = 0; c < uniq.size(); ++c) {
    cell_mass[c] = mu.mass(uniq[c]);
    mass_total += cell_mass[c];
  }
  probe.series.assign(gammas.size(),
                      std::vector<double>(times.size(), 0.0));
  std::vector<double> cell_sum(uniq.size());
  std::vector<long> cell_n(uniq.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::fill(cell_sum.begin(), cell_sum.end(), 0.0);
    std::fill(cell_n.begin(), cell_n.end(), 0L);
    for (std::size_t i = 0; i < n_paths; ++i) {
      const auto it = std::lower_bound(uniq.begin(), uniq.end(), cells[i]);
      const std::size_t c = static_cast<std::size_t>(it - uniq.begin());
      cell_sum[c] += vals(i, k);
      ++cell_n[c];
    }
    for (std::size_t g = 0; g < gammas.size(); ++g) {
      double acc = 0.0;
      for (std::size_t c = 0; c < uniq.size(); ++c) {
        if (cell_n[c] == 0) continue;
        const double ptphi = cell_sum[c] / static_cast<double>(cell_n[c]);
        acc += (cell_mass[c] / mass_total) *
               std::pow(std::abs(ptphi - mu_phi), gammas[g]);
      }
      probe.series[g][k] = std::pow(acc, 1.0 / gammas[g]);
    }
  }
  return probe;
}

}  // namespace jumplab::ergodic

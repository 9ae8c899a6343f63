#pragma once

// Jump-adapted Euler stepping core shared by the plain, coupled and
// controlled simulators. Keeping one draw order here is what makes full
// records and thinned ensemble runs bit-identical for the same seed:
//   1. all jump times, each immediately followed by its mark
//   2. per diffusion step: optional compensator marks, then the normals.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "jumplab/errors.hpp"
#include "jumplab/model.hpp"
#include "jumplab/rng.hpp"

namespace jumplab::sim::detail {

inline constexpr int kCompensatorMarks = 64;

struct JumpEvent {
  double time;
  Eigen::VectorXd mark;
};

inline std::vector<JumpEvent> draw_jumps(const model::JumpKernel& kernel,
                                         double horizon, Rng& rng) {
  std::vector<JumpEvent> out;
  if (kernel.total_rate <= 0.0) return out;
  double t = 0.0;
  Eigen::VectorXd u(kernel.mark_dim);
  while (true) {
    t += rng.exponential(kernel.total_rate);
    if (t >= horizon) break;
    kernel.sample_mark(rng, u);
    out.push_back({t, u});
  }
  return out;
}

// Uniform nodes + jump times + extra nodes, strictly increasing from 0 to T.
inline std::vector<double> merged_nodes(double horizon, double dt,
                                        const std::vector<JumpEvent>& jumps,
                                        const std::vector<double>& extra) {
  if (!(horizon > 0.0)) throw precondition_error("merged grid: T must be > 0");
  if (!(dt > 0.0)) throw precondition_error("merged grid: dt must be > 0");
  std::vector<double> nodes;
  nodes.push_back(0.0);
  const double tol = 1e-12 * std::max(1.0, horizon);
  for (std::size_t k = 1;; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (t >= horizon - tol) break;
    nodes.push_back(t);
  }
  nodes.push_back(horizon);
  for (const auto& j : jumps) nodes.push_back(j.time);
  for (double t : extra) {
    if (t < 0.0 || t > horizon)
      throw precondition_error("merged grid: extra node outside [0,T]");
    nodes.push_back(t);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

// Per-step compensator drift integral f(x,u) nu(du): analytic when the
// kernel declares it, otherwise an unbiased per-step Monte Carlo over
// kCompensatorMarks fresh marks. Returns the estimator's stderr (0 analytic).
class Compensator {
 public:
  explicit Compensator(const model::CoefficientSet& c)
      : coeffs_(c),
        active_(c.kernel.total_rate > 0.0),
        analytic_(static_cast<bool>(c.kernel.mean_jump)),
        mark_(c.kernel.mark_dim),
        fval_(c.dim),
        sumsq_(c.dim) {}

  double eval(Eigen::Ref<const Eigen::VectorXd> x, Rng& rng,
              Eigen::Ref<Eigen::VectorXd> out) {
    if (!active_) {
      out.setZero();
      return 0.0;
    }
    if (analytic_) {
      coeffs_.kernel.mean_jump(x, out);
      return 0.0;
    }
    out.setZero();
    sumsq_.setZero();
    for (int i = 0; i < kCompensatorMarks; ++i) {
      coeffs_.kernel.sample_mark(rng, mark_);
      coeffs_.jump(x, mark_, fval_);
      out += fval_;
      sumsq_ += fval_.cwiseProduct(fval_);
    }
    const double n = static_cast<double>(kCompensatorMarks);
    out /= n;
    double var = 0.0;
    for (int i = 0; i < out.size(); ++i)
      var += std::max(0.0, sumsq_[i] / n - out[i] * out[i]);
    out *= coeffs_.kernel.total_rate;
    return coeffs_.kernel.total_rate * std::sqrt(var / n);
  }

 private:
  const model::CoefficientSet& coeffs_;
  bool active_, analytic_;
  Eigen::VectorXd mark_, fval_, sumsq_;
};

// Observer contract:
//   obs.on_start(nodes, jumps, x0)
//   obs.on_node(k, t, x_post, jumped, x_pre, comp_stderr)   for k >= 1
//   obs.on_finish()
template <class Obs>
void run_jump_adapted(const model::CoefficientSet& c,
                      const Eigen::VectorXd& x0, double horizon, double dt,
                      const std::vector<double>& extra, Rng& rng, Obs& obs) {
  const int d = c.dim;
  const auto jumps = draw_jumps(c.kernel, horizon, rng);
  const auto nodes = merged_nodes(horizon, dt, jumps, extra);

  Eigen::VectorXd x = x0;
  Eigen::VectorXd bx(d), comp(d), xi(d), fout(d), pre(d);
  Eigen::MatrixXd sig(d, d);
  Compensator compensator(c);

  obs.on_start(nodes, jumps, x);
  std::size_t jidx = 0;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const double s = nodes[k - 1];
    const double t = nodes[k];
    const double h = t - s;
    c.drift(x, bx);
    c.diffusion(x, sig);
    const double comp_se = compensator.eval(x, rng, comp);
    for (int i = 0; i < d; ++i) xi[i] = rng.normal();
    x += h * (bx - comp) + std::sqrt(h) * (sig * xi);
    bool jumped = false;
    while (jidx < jumps.size() && jumps[jidx].time == t) {
      if (!jumped) {
        pre = x;
        jumped = true;
      }
      c.jump(x, jumps[jidx].mark, fout);
      x += fout;
      ++jidx;
    }
    if (!x.allFinite())
      throw blow_up_error("simulate: state became non-finite", t);
    obs.on_node(k, t, x, jumped, pre, comp_se);
  }
  obs.on_finish();
}

}  // namespace jumplab::sim::detail

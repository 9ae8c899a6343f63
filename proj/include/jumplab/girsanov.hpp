#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "jumplab/model.hpp"
#include "jumplab/rng.hpp"
#include "jumplab/sim.hpp"

namespace jumplab::girsanov {

// Deterministic linear bridge from the (truncated) state at t0 to the target
// at T, together with the control h(t) = (target-start)/(T-t0) - b(J(t)) that
// makes dJ/dt = b(J) + h an identity.
struct BridgeControl {
  double t0 = 0.0;
  double horizon = 1.0;
  double truncation = 0.0;  // the level n in start = x_t0 * 1{|x_t0| <= n}
  Eigen::VectorXd start, target;

  Eigen::VectorXd slope() const;  // (target - start)/(horizon - t0)
  Eigen::VectorXd j_at(double t) const;
  Eigen::VectorXd h_at(const model::CoefficientSet& coeffs, double t) const;
};

// start = x_t0 when |x_t0| <= n, else 0.
BridgeControl make_bridge(const Eigen::VectorXd& x_t0, double truncation_n,
                          const Eigen::VectorXd& target, double t0,
                          double horizon, const model::CoefficientSet& coeffs);

// Template for a per-path bridge: the start is realized from the path's own
// state at t0.
struct BridgeSpec {
  double t0 = 0.0;       // in [0, horizon)
  double horizon = 1.0;
  double truncation = -1.0;  // <= 0: default 10 * (1 + |x0|)
  Eigen::VectorXd target;
};

// Controlled path: plain dynamics on [0, t0], drift + h on (t0, T], with the
// running log-weight log xi_t = -sum <H, dW> - 1/2 |H|^2 dt accumulated in
// log space (Kahan) with left-point quadrature from the same Brownian
// increments; H_t = sigma(Y_t)^{-1} h(t) on [t0, T), zero before. The sign
// makes xi the density that removes the control: E[xi_T phi(Y_T)] equals
// E[phi(X_T)] for the uncontrolled dynamics.
struct ControlledPath {
  sim::PathRecord path;       // Y over [0, T]
  BridgeControl bridge;       // realized at t0
  std::vector<double> log_xi;  // per grid node
  Eigen::VectorXd state_t0;   // Y_{t0} before truncation
  bool truncated = false;     // |Y_{t0}| > n
  double sup_h = 0.0;         // max |h| seen (control boundedness diagnostic)
  double log_xi_terminal() const { return log_xi.back(); }
};

ControlledPath simulate_controlled(const model::CoefficientSet& coeffs,
                                   const Eigen::VectorXd& x0,
                                   const BridgeSpec& spec, double dt, Rng& rng);

// Right side of the mean-square bridge bound:
// [e0 + C (T - t0)]^{exp(-|lambda0| (T - t0))}.
double bihari_bound(double e0, double c_const, double lambda0, double t0,
                    double horizon);

// Conservative calibration of the constant: C = 2 lambda1 (1 + M_Y)^2 +
// |lambda0| * dbar*log(1/dbar) with dbar = e^{-2} (cap of the concave
// envelope's first branch).
double calibrate_bihari_c(double lambda1, double lambda0, double sup_ey2);

// Thinned controlled ensemble for the probe and the martingale checks.
struct ControlledEnsemble {
  std::vector<double> checkpoints;           // times where log xi is recorded
  std::vector<std::vector<double>> log_xi_at; // per checkpoint, per path
  std::vector<Eigen::VectorXd> terminal;     // Y_T per path
  std::vector<double> log_xi_terminal;
  std::vector<double> t0_sq_norm;            // |Y_{t0}|^2 per path
  std::vector<char> truncated;
  std::vector<double> sup_h;
  // mean |Y_t|^2 on a coarse grid over [t0, T] (for the C calibration)
  std::vector<double> ey2_grid_times;
  std::vector<double> ey2_grid;
};

ControlledEnsemble run_controlled_ensemble(const model::CoefficientSet& coeffs,
                                           const Eigen::VectorXd& x0,
                                           const BridgeSpec& spec, double dt,
                                           std::size_t n_paths,
                                           std::uint64_t master_seed,
                                           int threads,
                                           std::vector<double> checkpoints = {});

struct IrreducibilityReport {
  // inputs
  Eigen::VectorXd x0, target;
  double radius = 0.0, horizon = 0.0, t0 = 0.0, truncation = 0.0, dt = 0.0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  // direct miss probability of the controlled process
  double p_miss = 0.0, p_miss_lo = 0.0, p_miss_hi = 0.0;
  // analytic comparison bound
  double e0_hat = 0.0;
  double bihari_c = 0.0;
  double chebyshev_bound = 0.0;
  // importance-sampled transition probability (the certificate)
  double weighted_p = 0.0, weighted_lo = 0.0, weighted_hi = 0.0;
  long hits = 0;
  double ess = 0.0;  // (sum xi)^2 / sum xi^2 over hit-weighted draws
  bool positivity_demonstrated = false;
  double sup_h_max = 0.0;

  nlohmann::ordered_json to_json() const;
};

// Bridges to the target, Monte Carlos the miss probability, evaluates the
// Chebyshev-style comparison bound, and importance-samples
// p_T(x0, B(target, radius)) with the weight xi_T. A positive CI lower bound
// on the weighted estimate is the empirical irreducibility certificate.
IrreducibilityReport irreducibility_probe(
    const model::CoefficientSet& coeffs, const Eigen::VectorXd& x0,
    const Eigen::VectorXd& target, double radius, double horizon, double t0,
    double truncation, double dt, std::size_t n_paths,
    std::uint64_t master_seed, int threads, double bihari_c_override = -1.0);

}  // namespace jumplab::girsanov

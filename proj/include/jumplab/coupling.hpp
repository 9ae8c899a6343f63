#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "jumplab/model.hpp"
#include "jumplab/rng.hpp"
#include "jumplab/sim.hpp"
#include "jumplab/stats.hpp"

namespace jumplab::coupling {

// Parameters of the reflection-type coupling. The cross-covariance uses the
// damped reflection direction u_delta = beta * u with
// beta^2 = (|x0-y0| / delta)^alpha frozen at the initial pair.
struct CouplingParams {
  Eigen::VectorXd x0, y0;
  double delta = 0.1;        // coupling neighbourhood, in (0, e^{-1})
  double alpha = 0.5;        // exponent, in (0,1)
  double couple_eps = -1.0;  // coalescence threshold; <= 0 means delta * 1e-4
  std::optional<double> beta_override;  // replace the computed beta in (0,1]

  double beta() const;        // damping factor
  double eps() const;         // resolved couple_eps
  void validate() const;
};

// The exponent choice used in the tail argument,
// alpha = exp(-(1+delta)(|lambda0| + 2C) t) / 3, with C supplied by the
// caller (it aggregates jump-Lipschitz constants and is not explicit).
double proof_alpha(double t, double lambda0, double c_const, double delta);

// c(x,y) = lambda2 (I - 2 u_delta u_delta^*) + sigma_l2(x) sigma_l2(y)^*.
Eigen::MatrixXd coupling_matrix(Eigen::Ref<const Eigen::VectorXd> x,
                                Eigen::Ref<const Eigen::VectorXd> y,
                                const model::CoefficientSet& coeffs,
                                const CouplingParams& params);

struct GFunctionals {
  double r = 0.0;     // |x-y|
  double g = 0.0;     // r/(1+r)
  double gp = 0.0;    // 1/(1+r)^2
  double gpp = 0.0;   // -2/(1+r)^3
  Eigen::MatrixXd G;  // a(x)+a(y)-c-c^*
  double G_bar = 0.0; // <u, G u>
  double F = 0.0;     // <x-y, b(x)-b(y)>
};

// Scalar distance test function and derivatives (defined for r >= 0).
double g_of_r(double r);
double g_prime(double r);
double g_double_prime(double r);

GFunctionals g_functionals(Eigen::Ref<const Eigen::VectorXd> x,
                           Eigen::Ref<const Eigen::VectorXd> y,
                           const model::CoefficientSet& coeffs,
                           const CouplingParams& params);

struct CoupledOptions {
  bool glue = true;
  // Brownian-bridge hitting test inside each diffusion step; removes the
  // O(sqrt(dt)) grid-monitoring bias of the coupling time (exact for
  // constant-coefficient models).
  bool bridge_correction = true;
  // assert min eig(Sigma) >= -1e-10 |Sigma|_HS at every step
  bool validate_psd = false;
  std::vector<double> checkpoints;
};

struct CoupledPathRecord {
  std::vector<double> nodes;
  std::vector<Eigen::VectorXd> x_states, y_states;  // post-jump at jump nodes
  std::vector<char> glued;                          // per node
  // node index -> pair state just before the node's shared jumps
  std::vector<std::pair<std::size_t, std::pair<Eigen::VectorXd, Eigen::VectorXd>>>
      pre_jump;
  double tau = std::numeric_limits<double>::infinity();
  double s_delta = std::numeric_limits<double>::infinity();
  long bridge_hits = 0;  // glues triggered by the bridge test
};

CoupledPathRecord simulate_coupled(const model::CoefficientSet& coeffs,
                                   const CouplingParams& params, double horizon,
                                   double dt, Rng& rng,
                                   const CoupledOptions& opts = {});

// Thinned coupled ensemble; per-path seeds as in sim::derive_path_seed.
struct CoupledEnsembleSpec {
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t n_paths = 1;
  std::uint64_t master_seed = 0;
  int threads = 1;
  CoupledOptions opts;
};

struct CoupledEnsemble {
  CouplingParams params;
  CoupledEnsembleSpec spec;
  std::vector<double> tau, s_delta;
  std::vector<Eigen::MatrixXd> x_at, y_at;  // per checkpoint: n_paths x d
  std::vector<long> jump_counts;
  long bridge_hits = 0;
};

CoupledEnsemble run_coupled_ensemble(const model::CoefficientSet& coeffs,
                                     const CouplingParams& params,
                                     const CoupledEnsembleSpec& spec);

// P(tau > t) with Wilson interval.
stats::ProbEstimate estimate_tail(const CoupledEnsemble& ensemble, double t);

// Both sides of the coupling bound |p_t phi(x0) - p_t phi(y0)|
// <= 2 |phi|_inf P(tau > t): lhs from two independent plain ensembles,
// rhs from a coupled ensemble.
struct StrongFellerRow {
  double t = 0.0;
  double lhs = 0.0, lhs_stderr = 0.0;
  double rhs = 0.0, rhs_stderr = 0.0;
  double tail_p = 0.0;
  bool holds = false;  // lhs <= rhs + 3 * joint stderr
};

struct StrongFellerReport {
  std::vector<StrongFellerRow> rows;
  bool all_hold() const;
};

StrongFellerReport strong_feller_modulus(
    const model::CoefficientSet& coeffs, const CouplingParams& params,
    const std::vector<double>& times,
    const std::function<double(Eigen::Ref<const Eigen::VectorXd>)>& phi,
    double phi_sup_norm, std::size_t n_single, std::size_t n_coupled,
    double dt, std::uint64_t master_seed, int threads);

// Coupled export in the sim columnar format with paired state columns and a
// trailing per-path summary section (tau, s_delta).
void export_coupled_csv(const model::CoefficientSet& coeffs,
                        const CoupledEnsemble& ensemble, std::ostream& os);

}  // namespace jumplab::coupling

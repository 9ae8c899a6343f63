#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jumplab/model.hpp"

namespace jumplab::config {

// Model block of a config: one of the built-in families plus optional
// declared-constant overrides.
struct ModelConfig {
  std::string family;  // "linear" | "polynomial-drift" | "log-modulus-perturbed"
  int dim = 1;
  double theta = 1.0;
  double sigma = 1.0;
  double jump_rate = 1.0;
  double jump_scale = 1.0;
  // polynomial-drift
  double coeff = 1.0;
  double power = 2.0;
  // log-modulus-perturbed
  double pert = 0.3;
  double cutoff = 0.36787944117144233;
  double sigma_ampl = 0.0;
  // optional overrides of the declared constants
  std::optional<double> lambda0, lambda1, lambda2, lambda3, lambda4, r, gamma;

  model::CoefficientSet build() const;
};

enum class ExperimentKind {
  simulate,
  couple,
  irreducibility,
  ergodicity,
  check,
  lemma21
};

std::string kind_name(ExperimentKind k);
std::optional<ExperimentKind> kind_from_name(const std::string& s);

struct SimulateConfig {
  std::vector<double> x0;
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t n_paths = 1000;
  std::vector<double> checkpoints;
  bool export_paths = false;
  // optional transition event
  std::optional<double> event_time;
  std::string event_kind = "ball";  // "ball" | "box"
  std::vector<double> event_center, event_lo, event_hi;
  double event_radius = 1.0;
};

struct CoupleConfig {
  std::vector<double> x0, y0;
  double delta = 0.1;
  double alpha = 0.5;
  double couple_eps = -1.0;
  std::optional<double> beta_override;
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t n_paths = 1000;
  std::vector<double> checkpoints;
  bool glue = true;
  bool bridge_correction = true;
  bool export_paths = false;
  // strong Feller block (optional)
  bool strong_feller = false;
  std::string phi = "tanh";
  std::vector<double> sf_times;
  std::size_t n_single = 10000;
};

struct IrreducibilityConfig {
  std::vector<double> x0, target;
  double radius = 0.5;
  double horizon = 1.0;
  double t0 = -1.0;         // < 0: 0.9 * horizon
  double truncation = -1.0; // < 0: 10 * (1 + |x0|)
  double dt = 1e-3;
  std::size_t n_paths = 10000;
  double bihari_c = -1.0;   // < 0: calibrated
};

struct ErgodicityConfig {
  std::vector<std::vector<double>> x0s;  // one TV series per start
  double mu_horizon = 1000.0;
  double mu_dt = 1e-3;
  double burn_in = -1.0;
  std::string mu_mode = "single-path";  // or "ensemble"
  std::size_t mu_paths = 1000;
  int bins = 100;
  double horizon = 8.0;
  double dt = 1e-3;
  std::size_t n_paths = 10000;
  std::vector<double> times;  // TV checkpoints
  // optional spectral probe
  bool spectral = false;
  std::string phi = "coord0";
  std::vector<double> gammas = {2.0};
  std::vector<double> spectral_times;
  std::size_t spectral_paths = 10000;
};

struct CheckConfig {
  std::vector<std::string> which;  // empty: all conditions
  model::CloudSpec cloud;
};

struct Lemma21Config {
  long n_pairs = 10000;
  std::vector<int> dims = {2, 3, 4, 5, 6};
  std::vector<double> lambdas = {0.5, 1.0, 2.0};
  double eig_lo_factor = 1.001;  // eigenvalues in [sqrt(l)*factor, eig_hi]
  double eig_hi = 10.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::simulate;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;  // optional output directory
  ModelConfig model;  // not used by lemma21
  SimulateConfig simulate;
  CoupleConfig couple;
  IrreducibilityConfig irreducibility;
  ErgodicityConfig ergodicity;
  CheckConfig check;
  Lemma21Config lemma21;

  // canonical serialization; parse(canonical()) == *this
  nlohmann::ordered_json to_json() const;
  std::string canonical() const;
};

// Strict parse: unknown keys, missing required keys and out-of-range values
// are all collected and reported together via config_error.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_json(const nlohmann::ordered_json& j);

}  // namespace jumplab::config

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jumplab/rng.hpp"

#include <nlohmann/json.hpp>

namespace jumplab::model {

using DriftFn =
    std::function<void(Eigen::Ref<const Eigen::VectorXd>, Eigen::Ref<Eigen::VectorXd>)>;
using DiffusionFn =
    std::function<void(Eigen::Ref<const Eigen::VectorXd>, Eigen::Ref<Eigen::MatrixXd>)>;
using JumpFn = std::function<void(Eigen::Ref<const Eigen::VectorXd> x,
                                  Eigen::Ref<const Eigen::VectorXd> u,
                                  Eigen::Ref<Eigen::VectorXd> out)>;
using MarkSampler = std::function<void(Rng&, Eigen::Ref<Eigen::VectorXd>)>;
// analytic value of integral |f(x,u)|^q nu(du), q in {2,4}
using MarkMomentFn = std::function<double(Eigen::Ref<const Eigen::VectorXd>, int)>;
// analytic value of integral f(x,u) nu(du)
using MeanJumpFn =
    std::function<void(Eigen::Ref<const Eigen::VectorXd>, Eigen::Ref<Eigen::VectorXd>)>;
// the jump Lipschitz weight L(u)
using MarkWeightFn = std::function<double(Eigen::Ref<const Eigen::VectorXd>)>;

// Continuity modulus kappa controlling the one-sided Lipschitz defect.
// The built-in log family is kappa(x) = C1 * (max(log(1/x), K))^{1/beta1}:
// bounded away from zero, constant for x >= e^{-K}, and growing only
// logarithmically as x -> 0 (so the modulus is non-Lipschitz but admissible).
class ModulusKappa {
 public:
  enum class Kind { log_family, constant, custom };

  static ModulusKappa log_family(double c1, double k, double beta1);
  static ModulusKappa constant(double value);
  static ModulusKappa custom(std::function<double(double)> fn);

  // kappa(x); throws precondition_error for x <= 0.
  double operator()(double x) const;

  Kind kind() const { return kind_; }
  double c1() const { return c1_; }
  double k() const { return k_; }
  double beta1() const { return beta1_; }

 private:
  ModulusKappa() = default;
  Kind kind_ = Kind::constant;
  double c1_ = 1.0, k_ = 1.0, beta1_ = 2.0;
  double value_ = 1.0;
  std::function<double(double)> fn_;
};

double kappa_eval(const ModulusKappa& kappa, double x);

// Concave envelope used with the Bihari inequality:
//   rho_delta(x) = x log(1/x)              for 0 < x <= delta
//                = (log(1/delta) - 1) x + delta   for x > delta
//                = 0                        at x = 0.
// The linear branch is the tangent at x = delta, which makes the function
// continuous, concave and nondecreasing; that forces delta < e^{-1}.
double rho_delta(double x, double delta);

// Finite-activity mark space: total rate nu(U0), a mark sampler for the
// normalized distribution nu / nu(U0), and optional analytic integrals.
struct JumpKernel {
  double total_rate = 0.0;
  int mark_dim = 1;
  MarkSampler sample_mark;
  MarkMomentFn moment_q;   // optional
  MeanJumpFn mean_jump;    // optional
  void validate() const;
};

// The model under study: drift b, diffusion sigma, jump coefficient f,
// the jump kernel, and the user-declared condition constants that the
// checker audits.
struct CoefficientSet {
  int dim = 1;
  DriftFn drift;
  DiffusionFn diffusion;
  JumpFn jump;
  JumpKernel kernel;

  // declared constants (audited, not derived)
  double lambda0 = 0.0;   // one-sided Lipschitz defect scale (may be 0)
  double lambda1 = 1.0;   // linear growth constant, > 0
  double lambda2 = 1.0;   // ellipticity constant, > 0
  double lambda3 = 1.0;   // dissipativity rate, > 0
  double lambda4 = 0.0;   // dissipativity offset, >= 0
  double r = 2.0;         // dissipativity exponent, >= 2
  double gamma = 0.5;     // jump Lipschitz cap, in (0,1)
  MarkWeightFn jump_lipschitz;  // L(u), values in (0, gamma]
  ModulusKappa kappa = ModulusKappa::log_family(1.0, 1.0, 2.0);

  std::string name = "custom";

  void validate() const;
  std::uint64_t model_hash() const;  // FNV-1a of the canonical name
};

// --- built-in families (the config surface constructs exactly these) ---

struct LinearParams {
  int dim = 1;
  double theta = 1.0;       // drift -theta * x
  double sigma = 1.0;       // diffusion sigma * I
  double jump_rate = 1.0;   // nu(U0)
  double jump_scale = 1.0;  // f(x,u) = jump_scale * u, u uniform on [-1,1]^dim
};
CoefficientSet make_linear(const LinearParams& p);

struct PolynomialParams {
  int dim = 1;
  double coeff = 1.0;   // drift -coeff * |x|^{power-1} * x
  double power = 2.0;   // >= 1; power 2 gives b(x) = -x|x|
  double sigma = 1.0;
  double jump_rate = 1.0;
  double jump_scale = 1.0;
};
CoefficientSet make_polynomial_drift(const PolynomialParams& p);

struct LogModulusParams {
  int dim = 1;
  double theta = 1.0;       // linear contraction part
  double pert = 0.3;        // strength of the x*log(1/|x|) wiggle
  double cutoff = 0.36787944117144233;  // e^{-1}; wiggle frozen beyond it
  double sigma = 1.0;
  double sigma_ampl = 0.0;  // sigma(x) = sigma*(1 + ampl*|x|^2/(1+|x|^2))*I
  double jump_rate = 1.0;
  double jump_scale = 0.5;
};
CoefficientSet make_log_modulus(const LogModulusParams& p);

// --- condition checker ---

enum class Condition {
  monotone,          // one-sided Lipschitz with modulus kappa
  growth,            // linear growth of b and sigma
  elliptic,          // <sigma(x)h,h> >= sqrt(lambda2)|h|^2
  jump_moments,      // nu-integral bounds on f (difference and q-growth)
  monotone_reduced,  // monotone with sigma replaced by sigma_lambda
  jump_lipschitz,    // |f(x,u)-f(y,u)| <= L(u)|x-y|, |f(0,u)| <= L(u), sup L <= gamma
  dissipative        // 2<x,b> + |sigma|^2 + nu-integral |f|^2 <= -l3|x|^r + l4
};

std::string condition_name(Condition c);
std::vector<Condition> all_conditions();

enum class Satisfied { yes, no, inconclusive };
std::string satisfied_name(Satisfied s);

struct ConditionEntry {
  std::string name;
  Satisfied satisfied = Satisfied::inconclusive;
  double worst_violation = 0.0;  // signed slack; > tolerance means violated
  std::vector<Eigen::VectorXd> witness;
  std::string detail;
  long samples_used = 0;
  double integral_stderr = 0.0;  // 0 when analytic moments were used
  double tolerance = 0.0;
};

struct ConditionReport {
  std::vector<ConditionEntry> entries;
  std::uint64_t seed = 0;
  bool all_satisfied() const;
  const ConditionEntry& entry(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
};

// Sampling plan for the numerical audit. Defaults follow the documented
// cloud: uniform pairs in a ball plus log-spaced near-diagonal pairs, which
// is where the non-Lipschitz modulus bites.
struct CloudSpec {
  double radius = 10.0;
  int n_points = 4096;
  int n_pairs = 4096;
  int n_near_diag = 256;
  double near_diag_min = 1e-8;
  int n_marks = 100000;          // Monte Carlo marks per nu-integral
  int n_integral_points = 512;   // points for integral-based conditions (MC path)
  int n_triples = 100000;        // (x,y,u) triples for the jump Lipschitz audit
};

// Numerical audit of the selected conditions: evaluates each defining
// inequality on the sampled cloud, records the worst signed slack and the
// witness achieving it. This falsifies, it does not prove. Deterministic
// given (coeffs, which, cloud, seed).
ConditionReport check_conditions(const CoefficientSet& coeffs,
                                 const std::vector<Condition>& which,
                                 const CloudSpec& cloud, std::uint64_t seed);

}  // namespace jumplab::model

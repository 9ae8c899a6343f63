#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "jumplab/model.hpp"
#include "jumplab/rng.hpp"
#include "jumplab/stats.hpp"

namespace jumplab::sim {

// Merged simulation grid: uniform Euler nodes plus the exact jump times
// (jump-adapted stepping removes the O(dt) jump-location bias).
struct TimeGrid {
  double horizon = 0.0;
  double dt = 0.0;
  std::vector<double> jump_times;
  std::vector<double> nodes;  // strictly increasing, nodes[0]=0, back()=horizon
};

struct PathRecord {
  Eigen::VectorXd x0;
  TimeGrid grid;
  std::vector<Eigen::VectorXd> states;  // post-jump value at jump nodes
  std::vector<std::pair<std::size_t, Eigen::VectorXd>> pre_jump;  // node -> X_{t-}
  std::vector<std::pair<double, Eigen::VectorXd>> jump_marks;
  // summary of the per-step compensator Monte Carlo stderr (0 when analytic)
  double comp_stderr_mean = 0.0;
  double comp_stderr_max = 0.0;

  double sup_sq() const;  // max over pre- and post-jump states of |x|^2
  std::size_t node_index(double t) const;  // exact match or usage_error
};

std::vector<std::pair<double, Eigen::VectorXd>> sample_jump_times(
    const model::JumpKernel& kernel, double horizon, Rng& rng);

PathRecord simulate_path(const model::CoefficientSet& coeffs,
                         const Eigen::VectorXd& x0, double horizon, double dt,
                         Rng& rng);

// Per-path seed derivation; documented so runs are reproducible from the
// manifest alone: seed_i = hash(master_seed, "path", i).
std::uint64_t derive_path_seed(std::uint64_t master_seed, std::uint64_t i);

struct EnsembleSpec {
  Eigen::VectorXd x0;
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t n_paths = 1;
  std::uint64_t master_seed = 0;
  std::vector<double> checkpoints;  // sorted times in [0, horizon]
  bool store_full = false;          // keep whole PathRecords
  int threads = 1;
};

// Simulated ensemble. Checkpoint states are always collected (thinned
// storage); full records only when asked. Identical output for any thread
// count: paths are seeded independently and written into indexed slots.
struct PathEnsemble {
  model::CoefficientSet coeffs;
  EnsembleSpec spec;
  // checkpoint_states[c] is n_paths x dim
  std::vector<Eigen::MatrixXd> checkpoint_states;
  std::vector<double> sup_sq;  // per path
  std::vector<int> jump_counts;
  std::vector<double> comp_stderr_mean;
  std::vector<PathRecord> records;  // only when store_full

  int checkpoint_index(double t) const;  // usage_error if not a checkpoint
};

PathEnsemble run_ensemble(const model::CoefficientSet& coeffs,
                          const EnsembleSpec& spec);

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

// Monte Carlo estimate of E[sup_{t<=T} |X_t|^2] over grid nodes (pre- and
// post-jump values both counted).
Estimate estimate_sup_second_moment(const PathEnsemble& ensemble);

// Axis-aligned box or ball event for transition probabilities.
class Event {
 public:
  static Event box(Eigen::VectorXd lo, Eigen::VectorXd hi);
  static Event ball(Eigen::VectorXd center, double radius);
  static Event everything(int dim);
  static Event nothing(int dim);
  bool contains(Eigen::Ref<const Eigen::VectorXd> x) const;

 private:
  enum class Kind { box, ball } kind_ = Kind::box;
  Eigen::VectorXd lo_, hi_, center_;
  double radius_ = 0.0;
};

// Fraction of paths with X_t in E, Wilson 95% interval; t must be one of the
// ensemble's checkpoints.
stats::ProbEstimate estimate_transition(const PathEnsemble& ensemble, double t,
                                        const Event& event);

// Columnar export: '#'-prefixed header (model hash, seed, d, T, dt), then
// rows path_id,time,x_0..x_{d-1},post with 17 significant digits. Jump nodes
// emit the pre-jump row (post=0) followed by the post-jump row (post=1).
// Requires store_full.
void export_paths_csv(const PathEnsemble& ensemble, std::ostream& os);

// Deterministic fixed-width float formatting used by every export.
std::string format_g17(double v);

// Fixed-slot parallel map: fn(i) for i in [0,n), any thread count, identical
// results. Used by every ensemble runner in the project.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace jumplab::sim

#include "jumplab/sim.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "jumplab/detail/stepper.hpp"
#include "jumplab/errors.hpp"

namespace jumplab::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double PathRecord::sup_sq() const {
  double m = 0.0;
  for (const auto& s : states) m = std::max(m, s.squaredNorm());
  for (const auto& [idx, s] : pre_jump) m = std::max(m, s.squaredNorm());
  return m;
}

std::size_t PathRecord::node_index(double t) const {
  const auto it = std::lower_bound(grid.nodes.begin(), grid.nodes.end(), t);
  if (it == grid.nodes.end() || *it != t)
    throw usage_error("PathRecord: t is not a grid node");
  return static_cast<std::size_t>(it - grid.nodes.begin());
}

std::vector<std::pair<double, VectorXd>> sample_jump_times(
    const model::JumpKernel& kernel, double horizon, Rng& rng) {
  kernel.validate();
  std::vector<std::pair<double, VectorXd>> out;
  for (auto& j : detail::draw_jumps(kernel, horizon, rng))
    out.emplace_back(j.time, std::move(j.mark));
  return out;
}

namespace {

struct FullRecorder {
  PathRecord rec;
  stats::KahanSum comp_sum;
  double comp_max = 0.0;
  long steps = 0;

  void on_start(const std::vector<double>& nodes,
                const std::vector<detail::JumpEvent>& jumps,
                const VectorXd& x0) {
    rec.x0 = x0;
    rec.grid.nodes = nodes;
    for (const auto& j : jumps) {
      rec.grid.jump_times.push_back(j.time);
      rec.jump_marks.emplace_back(j.time, j.mark);
    }
    rec.states.clear();
    rec.states.reserve(nodes.size());
    rec.states.push_back(x0);
  }
  void on_node(std::size_t k, double, const VectorXd& x, bool jumped,
               const VectorXd& pre, double comp_se) {
    rec.states.push_back(x);
    if (jumped) rec.pre_jump.emplace_back(k, pre);
    comp_sum.add(comp_se);
    comp_max = std::max(comp_max, comp_se);
    ++steps;
  }
  void on_finish() {
    rec.comp_stderr_mean =
        steps > 0 ? comp_sum.value() / static_cast<double>(steps) : 0.0;
    rec.comp_stderr_max = comp_max;
  }
};

// Thinned observer: checkpoint states, running sup |x|^2, jump count.
struct CheckpointRecorder {
  const std::vector<double>* checkpoints = nullptr;
  std::size_t cp_idx = 0;
  std::vector<VectorXd> cp_states;
  double sup_sq = 0.0;
  int jumps = 0;
  stats::KahanSum comp_sum;
  long steps = 0;

  void on_start(const std::vector<double>&,
                const std::vector<detail::JumpEvent>&, const VectorXd& x0) {
    sup_sq = x0.squaredNorm();
    cp_idx = 0;
    while (cp_idx < checkpoints->size() && (*checkpoints)[cp_idx] == 0.0) {
      cp_states.push_back(x0);
      ++cp_idx;
    }
  }
  void on_node(std::size_t, double t, const VectorXd& x, bool jumped,
               const VectorXd& pre, double comp_se) {
    if (jumped) {
      ++jumps;
      sup_sq = std::max(sup_sq, pre.squaredNorm());
    }
    sup_sq = std::max(sup_sq, x.squaredNorm());
    while (cp_idx < checkpoints->size() && (*checkpoints)[cp_idx] == t) {
      cp_states.push_back(x);
      ++cp_idx;
    }
    comp_sum.add(comp_se);
    ++steps;
  }
  void on_finish() {
    if (cp_idx != checkpoints->size())
      throw usage_error("ensemble: checkpoint missing from the merged grid");
  }
};

}  // namespace

PathRecord simulate_path(const model::CoefficientSet& coeffs,
                         const VectorXd& x0, double horizon, double dt,
                         Rng& rng) {
  coeffs.validate();
  if (x0.size() != coeffs.dim)
    throw precondition_error("simulate_path: x0 has wrong dimension");
  FullRecorder obs;
  detail::run_jump_adapted(coeffs, x0, horizon, dt, {}, rng, obs);
  obs.rec.grid.horizon = horizon;
  obs.rec.grid.dt = dt;
  return std::move(obs.rec);
}

std::uint64_t derive_path_seed(std::uint64_t master_seed, std::uint64_t i) {
  return derive_seed(master_seed, "path", i);
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  pool.reserve(nt);
  for (int w = 0; w < nt; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < n;
             i += static_cast<std::size_t>(nt))
          fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

PathEnsemble run_ensemble(const model::CoefficientSet& coeffs,
                          const EnsembleSpec& spec) {
  coeffs.validate();
  if (spec.x0.size() != coeffs.dim)
    throw precondition_error("run_ensemble: x0 has wrong dimension");
  for (std::size_t i = 1; i < spec.checkpoints.size(); ++i)
    if (spec.checkpoints[i] <= spec.checkpoints[i - 1])
      throw precondition_error("run_ensemble: checkpoints must be increasing");
  for (double t : spec.checkpoints)
    if (t < 0.0 || t > spec.horizon)
      throw precondition_error("run_ensemble: checkpoint outside [0,T]");

  PathEnsemble ens;
  ens.coeffs = coeffs;
  ens.spec = spec;
  const std::size_t n = spec.n_paths;
  const int d = coeffs.dim;
  ens.checkpoint_states.assign(spec.checkpoints.size(), MatrixXd(n, d));
  ens.sup_sq.assign(n, 0.0);
  ens.jump_counts.assign(n, 0);
  ens.comp_stderr_mean.assign(n, 0.0);
  if (spec.store_full) ens.records.resize(n);

  parallel_for(n, spec.threads, [&](std::size_t i) {
    Rng rng(derive_path_seed(spec.master_seed, i));
    if (spec.store_full) {
      // full record pass; checkpoints are grid nodes so thin data can be
      // read off the record afterwards
      FullRecorder obs;
      detail::run_jump_adapted(coeffs, spec.x0, spec.horizon, spec.dt,
                               spec.checkpoints, rng, obs);
      obs.rec.x0 = spec.x0;
      obs.rec.grid.horizon = spec.horizon;
      obs.rec.grid.dt = spec.dt;
      for (std::size_t c = 0; c < spec.checkpoints.size(); ++c) {
        const std::size_t k = obs.rec.node_index(spec.checkpoints[c]);
        ens.checkpoint_states[c].row(i) = obs.rec.states[k].transpose();
      }
      ens.sup_sq[i] = obs.rec.sup_sq();
      ens.jump_counts[i] = static_cast<int>(obs.rec.jump_marks.size());
      ens.comp_stderr_mean[i] = obs.rec.comp_stderr_mean;
      ens.records[i] = std::move(obs.rec);
    } else {
      CheckpointRecorder obs;
      obs.checkpoints = &spec.checkpoints;
      detail::run_jump_adapted(coeffs, spec.x0, spec.horizon, spec.dt,
                               spec.checkpoints, rng, obs);
      for (std::size_t c = 0; c < spec.checkpoints.size(); ++c)
        ens.checkpoint_states[c].row(i) = obs.cp_states[c].transpose();
      ens.sup_sq[i] = obs.sup_sq;
      ens.jump_counts[i] = obs.jumps;
      ens.comp_stderr_mean[i] =
          obs.steps > 0 ? obs.comp_sum.value() / static_cast<double>(obs.steps)
                        : 0.0;
    }
  });
  return ens;
}

int PathEnsemble::checkpoint_index(double t) const {
  for (std::size_t c = 0; c < spec.checkpoints.size(); ++c)
    if (spec.checkpoints[c] == t) return static_cast<int>(c);
  throw usage_error("PathEnsemble: t is not a checkpoint");
}

Estimate estimate_sup_second_moment(const PathEnsemble& ensemble) {
  const auto ms = stats::mean_stderr(ensemble.sup_sq);
  return {ms.mean, ms.stderr_};
}

Event Event::box(VectorXd lo, VectorXd hi) {
  if (lo.size() != hi.size())
    throw precondition_error("Event::box: dimension mismatch");
  Event e;
  e.kind_ = Kind::box;
  e.lo_ = std::move(lo);
  e.hi_ = std::move(hi);
  return e;
}

Event Event::ball(VectorXd center, double radius) {
  if (radius < 0.0) throw precondition_error("Event::ball: radius must be >= 0");
  Event e;
  e.kind_ = Kind::ball;
  e.center_ = std::move(center);
  e.radius_ = radius;
  return e;
}

Event Event::everything(int dim) {
  const double inf = std::numeric_limits<double>::infinity();
  return box(VectorXd::Constant(dim, -inf), VectorXd::Constant(dim, inf));
}

Event Event::nothing(int dim) {
  return box(VectorXd::Constant(dim, 1.0), VectorXd::Constant(dim, -1.0));
}

bool Event::contains(Eigen::Ref<const VectorXd> x) const {
  if (kind_ == Kind::ball) return (x - center_).norm() < radius_;
  for (int i = 0; i < x.size(); ++i)
    if (!(x[i] >= lo_[i] && x[i] <= hi_[i])) return false;
  return true;
}

stats::ProbEstimate estimate_transition(const PathEnsemble& ensemble, double t,
                                        const Event& event) {
  const int c = ensemble.checkpoint_index(t);
  const MatrixXd& st = ensemble.checkpoint_states[static_cast<std::size_t>(c)];
  long k = 0;
  for (Eigen::Index i = 0; i < st.rows(); ++i)
    if (event.contains(st.row(i).transpose())) ++k;
  return stats::wilson(k, st.rows());
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void export_paths_csv(const PathEnsemble& ensemble, std::ostream& os) {
  if (!ensemble.spec.store_full)
    throw usage_error("export_paths_csv: ensemble was not run with store_full");
  const int d = ensemble.coeffs.dim;
  os << "# model_hash=" << ensemble.coeffs.model_hash() << "\n";
  os << "# seed=" << ensemble.spec.master_seed << "\n";
  os << "# d=" << d << " T=" << format_g17(ensemble.spec.horizon)
     << " dt=" << format_g17(ensemble.spec.dt) << "\n";
  os << "path_id,time";
  for (int i = 0; i < d; ++i) os << ",x" << i;
  os << ",post\n";
  for (std::size_t p = 0; p < ensemble.records.size(); ++p) {
    const PathRecord& rec = ensemble.records[p];
    std::size_t pj = 0;
    for (std::size_t k = 0; k < rec.grid.nodes.size(); ++k) {
      if (pj < rec.pre_jump.size() && rec.pre_jump[pj].first == k) {
        os << p << "," << format_g17(rec.grid.nodes[k]);
        for (int i = 0; i < d; ++i)
          os << "," << format_g17(rec.pre_jump[pj].second[i]);
        os << ",0\n";
        ++pj;
      }
      os << p << "," << format_g17(rec.grid.nodes[k]);
      for (int i = 0; i < d; ++i) os << "," << format_g17(rec.states[k][i]);
      os << ",1\n";
    }
  }
}

}  // namespace jumplab::sim

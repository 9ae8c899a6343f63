#include "jumplab/girsanov.hpp"

#include <cmath>
#include <sstream>

#include "jumplab/detail/stepper.hpp"
#include "jumplab/errors.hpp"
#include "jumplab/stats.hpp"

namespace jumplab::girsanov {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd BridgeControl::slope() const {
  return (target - start) / (horizon - t0);
}

VectorXd BridgeControl::j_at(double t) const {
  const double w = horizon - t0;
  return ((horizon - t) / w) * start + ((t - t0) / w) * target;
}

VectorXd BridgeControl::h_at(const model::CoefficientSet& coeffs,
                             double t) const {
  VectorXd b(start.size());
  coeffs.drift(j_at(t), b);
  return slope() - b;
}

BridgeControl make_bridge(const VectorXd& x_t0, double truncation_n,
                          const VectorXd& target, double t0, double horizon,
                          const model::CoefficientSet& coeffs) {
  if (!(t0 >= 0.0) || !(t0 < horizon))
    throw precondition_error("make_bridge: need 0 <= t0 < T");
  if (x_t0.size() != target.size() || x_t0.size() != coeffs.dim)
    throw precondition_error("make_bridge: dimension mismatch");
  BridgeControl b;
  b.t0 = t0;
  b.horizon = horizon;
  b.truncation = truncation_n;
  b.start = (x_t0.norm() <= truncation_n) ? x_t0
                                          : VectorXd::Zero(x_t0.size());
  b.target = target;
  return b;
}

double bihari_bound(double e0, double c_const, double lambda0, double t0,
                    double horizon) {
  if (e0 < 0.0) throw precondition_error("bihari_bound: e0 must be >= 0");
  if (!(horizon > t0)) throw precondition_error("bihari_bound: need T > t0");
  const double base = e0 + c_const * (horizon - t0);
  const double expo = std::exp(-std::abs(lambda0) * (horizon - t0));
  return std::pow(base, expo);
}

double calibrate_bihari_c(double lambda1, double lambda0, double sup_ey2) {
  const double m = 1.0 + std::sqrt(std::max(0.0, sup_ey2));
  const double dbar = std::exp(-2.0);
  return 2.0 * lambda1 * m * m + std::abs(lambda0) * dbar * std::log(1.0 / dbar);
}

namespace {

// Controlled dynamics with weight accumulation. Observer-style core shared
// by the single-path and the ensemble entry points.
struct ControlledCore {
  const model::CoefficientSet& c;
  BridgeSpec spec;
  double dt;
  Eigen::VectorXd x0;

  // outputs
  sim::PathRecord rec;           // filled only when record_full
  std::vector<double> log_xi;    // per node (full) or per checkpoint (thin)
  BridgeControl bridge;
  VectorXd state_t0;
  bool truncated = false;
  double sup_h = 0.0;
  bool record_full = true;
  const std::vector<double>* checkpoints = nullptr;  // thin mode
  VectorXd terminal;
  double log_xi_term = 0.0;
  // coarse mean-square grid for the C calibration
  std::vector<double> ey2_times;
  std::vector<double> y2_at;

  void run(Rng& rng) {
    const int d = c.dim;
    const double T = spec.horizon;
    const double t0 = spec.t0;
    const double trunc =
        spec.truncation > 0.0 ? spec.truncation : 10.0 * (1.0 + x0.norm());

    const auto jumps = sim::detail::draw_jumps(c.kernel, T, rng);
    std::vector<double> extra = {t0};
    if (checkpoints)
      extra.insert(extra.end(), checkpoints->begin(), checkpoints->end());
    extra.insert(extra.end(), ey2_times.begin(), ey2_times.end());
    std::sort(extra.begin(), extra.end());
    extra.erase(std::unique(extra.begin(), extra.end()), extra.end());
    if (!extra.empty() && extra.front() == 0.0)
      extra.erase(extra.begin());
    const auto nodes = sim::detail::merged_nodes(T, dt, jumps, extra);

    VectorXd x = x0;
    VectorXd bx(d), comp(d), xi(d), fout(d), hvec(d), hsig(d);
    MatrixXd sig(d, d);
    sim::detail::Compensator compensator(c);
    stats::KahanSum logxi;
    bool bridge_made = false;
    if (t0 == 0.0) {
      state_t0 = x;
      truncated = x.norm() > trunc;
      bridge = make_bridge(x, trunc, spec.target, t0, T, c);
      bridge_made = true;
    }

    y2_at.assign(ey2_times.size(), 0.0);
    std::size_t ey_idx = 0;
    auto note_state = [&](double t, const VectorXd& st) {
      while (ey_idx < ey2_times.size() && ey2_times[ey_idx] == t) {
        y2_at[ey_idx] = st.squaredNorm();
        ++ey_idx;
      }
    };

    if (record_full) {
      rec.x0 = x0;
      rec.grid.nodes = nodes;
      rec.grid.horizon = T;
      rec.grid.dt = dt;
      for (const auto& j : jumps) {
        rec.grid.jump_times.push_back(j.time);
        rec.jump_marks.emplace_back(j.time, j.mark);
      }
      rec.states.push_back(x);
      log_xi.push_back(0.0);
    } else {
      log_xi.assign(checkpoints ? checkpoints->size() : 0, 0.0);
    }
    std::size_t cp_idx = 0;
    auto note_checkpoint = [&](double t) {
      if (record_full || !checkpoints) return;
      while (cp_idx < checkpoints->size() && (*checkpoints)[cp_idx] == t) {
        log_xi[cp_idx] = logxi.value();
        ++cp_idx;
      }
    };
    note_checkpoint(0.0);
    note_state(0.0, x);

    std::size_t jidx = 0;
    for (std::size_t k = 1; k < nodes.size(); ++k) {
      const double s = nodes[k - 1];
      const double t = nodes[k];
      const double h = t - s;
      const bool control_on = bridge_made && s >= t0;

      c.drift(x, bx);
      c.diffusion(x, sig);
      const double comp_se = compensator.eval(x, rng, comp);
      (void)comp_se;
      for (int i = 0; i < d; ++i) xi[i] = rng.normal();
      const double sqh = std::sqrt(h);

      if (control_on) {
        hvec = bridge.h_at(c, s);
        sup_h = std::max(sup_h, hvec.norm());
        // H = sigma(Y_s)^{-1} h(s) via an LU solve; a huge condition number
        // means the declared ellipticity failed along the path
        Eigen::PartialPivLU<MatrixXd> lu(sig);
        const double rc = lu.rcond();
        if (!(rc > 1e-12)) {
          std::ostringstream os;
          os << "simulate_controlled: sigma numerically singular at t=" << s
             << " (rcond=" << rc << ")";
          throw nondegeneracy_error(os.str());
        }
        hsig = lu.solve(hvec);
        // left-point quadrature with the same Brownian increments; the
        // stochastic integral enters negatively so that reweighting by xi
        // removes the control: E[xi phi(Y_T)] = E[phi(X_T)]
        logxi.add(-sqh * hsig.dot(xi) - 0.5 * h * hsig.squaredNorm());
        x += h * (bx - comp + hvec) + sqh * (sig * xi);
      } else {
        x += h * (bx - comp) + sqh * (sig * xi);
      }

      bool jumped = false;
      VectorXd pre;
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
        throw blow_up_error("simulate_controlled: state non-finite", t);

      if (!bridge_made && t == t0) {
        state_t0 = x;
        truncated = x.norm() > trunc;
        bridge = make_bridge(x, trunc, spec.target, t0, T, c);
        bridge_made = true;
      }
      if (record_full) {
        rec.states.push_back(x);
        if (jumped)
          rec.pre_jump.emplace_back(k, pre);
        log_xi.push_back(logxi.value());
      }
      note_checkpoint(t);
      note_state(t, x);
    }
    terminal = x;
    log_xi_term = logxi.value();
  }
};

}  // namespace

ControlledPath simulate_controlled(const model::CoefficientSet& coeffs,
                                   const VectorXd& x0, const BridgeSpec& spec,
                                   double dt, Rng& rng) {
  coeffs.validate();
  if (!(spec.t0 >= 0.0) || !(spec.t0 < spec.horizon))
    throw precondition_error("simulate_controlled: need 0 <= t0 < T");
  if (spec.target.size() != coeffs.dim)
    throw precondition_error("simulate_controlled: target dimension mismatch");
  ControlledCore core{coeffs, spec, dt, x0};
  core.record_full = true;
  core.run(rng);
  ControlledPath out;
  out.path = std::move(core.rec);
  out.bridge = core.bridge;
  out.log_xi = std::move(core.log_xi);
  out.state_t0 = core.state_t0;
  out.truncated = core.truncated;
  out.sup_h = core.sup_h;
  return out;
}

ControlledEnsemble run_controlled_ensemble(const model::CoefficientSet& coeffs,
                                           const VectorXd& x0,
                                           const BridgeSpec& spec, double dt,
                                           std::size_t n_paths,
                                           std::uint64_t master_seed,
                                           int threads,
                                           std::vector<double> checkpoints) {
  coeffs.validate();
  if (!(spec.t0 >= 0.0) || !(spec.t0 < spec.horizon))
    throw precondition_error("run_controlled_ensemble: need 0 <= t0 < T");
  ControlledEnsemble ens;
  std::sort(checkpoints.begin(), checkpoints.end());
  ens.checkpoints = checkpoints;
  ens.log_xi_at.assign(checkpoints.size(), std::vector<double>(n_paths, 0.0));
  ens.terminal.resize(n_paths);
  ens.log_xi_terminal.assign(n_paths, 0.0);
  ens.t0_sq_norm.assign(n_paths, 0.0);
  ens.truncated.assign(n_paths, 0);
  ens.sup_h.assign(n_paths, 0.0);
  // 16-point coarse grid on [t0, T] for the calibration helper
  const int kEyPoints = 16;
  std::vector<double> ey_times;
  for (int i = 0; i < kEyPoints; ++i)
    ey_times.push_back(spec.t0 + (spec.horizon - spec.t0) *
                                     static_cast<double>(i + 1) /
                                     static_cast<double>(kEyPoints));
  ens.ey2_grid_times = ey_times;
  std::vector<std::vector<double>> y2(n_paths);

  sim::parallel_for(n_paths, threads, [&](std::size_t i) {
    Rng rng(sim::derive_path_seed(master_seed, i));
    ControlledCore core{coeffs, spec, dt, x0};
    core.record_full = false;
    core.checkpoints = &ens.checkpoints;
    core.ey2_times = ey_times;
    core.run(rng);
    for (std::size_t ccc = 0; ccc < ens.checkpoints.size(); ++ccc)
      ens.log_xi_at[ccc][i] = core.log_xi[ccc];
    ens.terminal[i] = core.terminal;
    ens.log_xi_terminal[i] = core.log_xi_term;
    ens.t0_sq_norm[i] = core.state_t0.squaredNorm();
    ens.truncated[i] = core.truncated ? 1 : 0;
    ens.sup_h[i] = core.sup_h;
    y2[i] = core.y2_at;
  });
  ens.ey2_grid.assign(ey_times.size(), 0.0);
  for (std::size_t i = 0; i < n_paths; ++i)
    for (std::size_t k = 0; k < ey_times.size(); ++k)
      ens.ey2_grid[k] += y2[i][k];
  for (auto& v : ens.ey2_grid) v /= static_cast<double>(n_paths);
  return ens;
}

nlohmann::ordered_json IrreducibilityReport::to_json() const {
  nlohmann::ordered_json j;
  auto vec = [](const VectorXd& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  j["x0"] = vec(x0);
  j["target"] = vec(target);
  j["radius"] = radius;
  j["T"] = horizon;
  j["t0"] = t0;
  j["truncation"] = truncation;
  j["dt"] = dt;
  j["n_paths"] = n_paths;
  j["seed"] = seed;
  j["p_miss"] = p_miss;
  j["p_miss_lo"] = p_miss_lo;
  j["p_miss_hi"] = p_miss_hi;
  j["e0_hat"] = e0_hat;
  j["bihari_c"] = bihari_c;
  j["chebyshev_bound"] = chebyshev_bound;
  j["weighted_p"] = weighted_p;
  j["weighted_lo"] = weighted_lo;
  j["weighted_hi"] = weighted_hi;
  j["hits"] = hits;
  j["ess"] = ess;
  j["positivity_demonstrated"] = positivity_demonstrated;
  j["sup_h_max"] = sup_h_max;
  return j;
}

IrreducibilityReport irreducibility_probe(
    const model::CoefficientSet& coeffs, const VectorXd& x0,
    const VectorXd& target, double radius, double horizon, double t0,
    double truncation, double dt, std::size_t n_paths,
    std::uint64_t master_seed, int threads, double bihari_c_override) {
  if (!(radius > 0.0))
    throw precondition_error("irreducibility_probe: radius must be > 0");
  BridgeSpec spec;
  spec.t0 = t0;
  spec.horizon = horizon;
  spec.truncation = truncation > 0.0 ? truncation : 10.0 * (1.0 + x0.norm());
  spec.target = target;
  const auto ens = run_controlled_ensemble(coeffs, x0, spec, dt, n_paths,
                                           master_seed, threads);

  IrreducibilityReport rep;
  rep.x0 = x0;
  rep.target = target;
  rep.radius = radius;
  rep.horizon = horizon;
  rep.t0 = t0;
  rep.truncation = spec.truncation;
  rep.dt = dt;
  rep.n_paths = n_paths;
  rep.seed = master_seed;

  long misses = 0;
  double e0_sum = 0.0;
  double sup_ey2 = 0.0;
  for (double v : ens.ey2_grid) sup_ey2 = std::max(sup_ey2, v);
  std::vector<double> weighted(n_paths, 0.0);
  long hits = 0;
  double wsum = 0.0, wsq = 0.0;
  for (std::size_t i = 0; i < n_paths; ++i) {
    const double dist = (ens.terminal[i] - target).norm();
    const bool hit = dist < radius;
    if (!hit) ++misses;
    if (ens.truncated[i]) e0_sum += ens.t0_sq_norm[i];
    if (hit) {
      ++hits;
      weighted[i] = std::exp(ens.log_xi_terminal[i]);
      wsum += weighted[i];
      wsq += weighted[i] * weighted[i];
    }
    rep.sup_h_max = std::max(rep.sup_h_max, ens.sup_h[i]);
  }
  const auto miss = stats::wilson(misses, static_cast<long>(n_paths));
  rep.p_miss = miss.p;
  rep.p_miss_lo = miss.lo;
  rep.p_miss_hi = miss.hi;

  rep.e0_hat = e0_sum / static_cast<double>(n_paths);
  rep.bihari_c = bihari_c_override > 0.0
                     ? bihari_c_override
                     : calibrate_bihari_c(coeffs.lambda1, coeffs.lambda0,
                                          sup_ey2);
  rep.chebyshev_bound =
      bihari_bound(rep.e0_hat, rep.bihari_c, coeffs.lambda0, t0, horizon) /
      (radius * radius);

  const auto w = stats::mean_stderr(weighted);
  rep.weighted_p = w.mean;
  rep.weighted_lo = std::max(0.0, w.mean - 1.959963984540054 * w.stderr_);
  rep.weighted_hi = w.mean + 1.959963984540054 * w.stderr_;
  rep.hits = hits;
  rep.ess = wsq > 0.0 ? wsum * wsum / wsq : 0.0;
  rep.positivity_demonstrated = hits > 0 && rep.weighted_lo > 0.0;
  return rep;
}

}  // namespace jumplab::girsanov

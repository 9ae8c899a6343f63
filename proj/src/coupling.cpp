#include "jumplab/coupling.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "jumplab/detail/stepper.hpp"
#include "jumplab/errors.hpp"
#include "jumplab/matops.hpp"

namespace jumplab::coupling {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kInvE = 0.36787944117144233;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

double CouplingParams::beta() const {
  if (beta_override) return *beta_override;
  return std::pow((x0 - y0).norm() / delta, alpha / 2.0);
}

double CouplingParams::eps() const {
  return couple_eps > 0.0 ? couple_eps : delta * 1e-4;
}

void CouplingParams::validate() const {
  if (x0.size() != y0.size())
    throw precondition_error("CouplingParams: x0/y0 dimension mismatch");
  if (!(delta > 0.0) || !(delta < kInvE))
    throw precondition_error("CouplingParams: delta must lie in (0, e^{-1})");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw precondition_error("CouplingParams: alpha must lie in (0,1)");
  if ((x0 - y0).norm() >= delta)
    throw precondition_error(
        "CouplingParams: the construction needs |x0-y0| < delta");
  if (eps() > delta * 1e-3)
    throw precondition_error(
        "CouplingParams: couple_eps must be <= delta * 1e-3");
  if (beta_override && (!(*beta_override > 0.0) || !(*beta_override <= 1.0)))
    throw precondition_error("CouplingParams: beta_override must be in (0,1]");
}

double proof_alpha(double t, double lambda0, double c_const, double delta) {
  return std::exp(-(1.0 + delta) * (std::abs(lambda0) + 2.0 * c_const) * t) / 3.0;
}

double g_of_r(double r) { return r / (1.0 + r); }
double g_prime(double r) { return 1.0 / ((1.0 + r) * (1.0 + r)); }
double g_double_prime(double r) {
  return -2.0 / ((1.0 + r) * (1.0 + r) * (1.0 + r));
}

namespace {

// Shared per-step workspace for the coupled dynamics.
struct CoupledWork {
  explicit CoupledWork(const model::CoefficientSet& c)
      : d(c.dim),
        bx(d), by(d), compx(d), compy(d), fout(d), xi(2 * d),
        sigx(d, d), sigy(d, d), cmat(d, d), big(2 * d, 2 * d),
        compensator_x(c), compensator_y(c) {}
  int d;
  VectorXd bx, by, compx, compy, fout, xi;
  MatrixXd sigx, sigy, cmat, big;
  sim::detail::Compensator compensator_x, compensator_y;
};

MatrixXd reduced_diffusion(const model::CoefficientSet& c,
                           Eigen::Ref<const MatrixXd> sigma) {
  return matops::sigma_lambda(sigma, c.lambda2).dense();
}

// c(x,y) given already-evaluated sigma matrices.
MatrixXd coupling_matrix_impl(Eigen::Ref<const VectorXd> x,
                              Eigen::Ref<const VectorXd> y,
                              const model::CoefficientSet& c,
                              double beta2,
                              Eigen::Ref<const MatrixXd> sigx,
                              Eigen::Ref<const MatrixXd> sigy) {
  const int d = static_cast<int>(x.size());
  const VectorXd diff = x - y;
  const double dist = diff.norm();
  if (dist <= 0.0)
    throw degenerate_direction_error(
        "coupling_matrix: x == y has no reflection direction");
  const VectorXd u = diff / dist;
  MatrixXd refl = MatrixXd::Identity(d, d) - (2.0 * beta2) * (u * u.transpose());
  return c.lambda2 * refl +
         reduced_diffusion(c, sigx) * reduced_diffusion(c, sigy).transpose();
}

}  // namespace

MatrixXd coupling_matrix(Eigen::Ref<const VectorXd> x,
                         Eigen::Ref<const VectorXd> y,
                         const model::CoefficientSet& coeffs,
                         const CouplingParams& params) {
  params.validate();
  const int d = coeffs.dim;
  MatrixXd sigx(d, d), sigy(d, d);
  coeffs.diffusion(x, sigx);
  coeffs.diffusion(y, sigy);
  const double b = params.beta();
  return coupling_matrix_impl(x, y, coeffs, b * b, sigx, sigy);
}

GFunctionals g_functionals(Eigen::Ref<const VectorXd> x,
                           Eigen::Ref<const VectorXd> y,
                           const model::CoefficientSet& coeffs,
                           const CouplingParams& params) {
  const VectorXd diff = x - y;
  const double dist = diff.norm();
  if (dist <= 0.0)
    throw degenerate_direction_error("g_functionals: x == y");
  const int d = coeffs.dim;
  MatrixXd sigx(d, d), sigy(d, d);
  coeffs.diffusion(x, sigx);
  coeffs.diffusion(y, sigy);
  const double b = params.beta();
  const MatrixXd c = coupling_matrix_impl(x, y, coeffs, b * b, sigx, sigy);
  GFunctionals out;
  out.r = dist;
  out.g = g_of_r(dist);
  out.gp = g_prime(dist);
  out.gpp = g_double_prime(dist);
  out.G = sigx * sigx.transpose() + sigy * sigy.transpose() - c - c.transpose();
  const VectorXd u = diff / dist;
  out.G_bar = u.dot(out.G * u);
  VectorXd bx(d), by(d);
  coeffs.drift(x, bx);
  coeffs.drift(y, by);
  out.F = diff.dot(bx - by);
  return out;
}

namespace {

struct CoupledCore {
  const model::CoefficientSet& c;
  const CouplingParams& params;
  const CoupledOptions& opts;
  CoupledWork work;
  double beta2;
  double eps;
  VectorXd x, y;
  bool glued = false;
  double tau = kInf;
  double s_delta = kInf;
  long bridge_hits = 0;
  long jump_count = 0;
  bool last_step_jumped = false;
  VectorXd pre_jump_x, pre_jump_y;

  CoupledCore(const model::CoefficientSet& cs, const CouplingParams& p,
              const CoupledOptions& o)
      : c(cs), params(p), opts(o), work(cs) {
    const double b = p.beta();
    beta2 = b * b;
    eps = p.eps();
    x = p.x0;
    y = p.y0;
    if (opts.glue && (x - y).norm() <= eps) {
      glued = true;
      tau = 0.0;
      y = x;
    }
  }

  // One diffusion step over (s, t] followed by the node's shared jumps.
  void step(double t, double h,
            const std::vector<sim::detail::JumpEvent>& jumps,
            std::size_t& jidx, Rng& rng) {
    const int d = work.d;
    last_step_jumped = false;
    if (glued) {
      c.drift(x, work.bx);
      c.diffusion(x, work.sigx);
      work.compensator_x.eval(x, rng, work.compx);
      for (int i = 0; i < d; ++i) work.xi[i] = rng.normal();
      x += h * (work.bx - work.compx) +
           std::sqrt(h) * (work.sigx * work.xi.head(d));
      while (jidx < jumps.size() && jumps[jidx].time == t) {
        if (!last_step_jumped) {
          pre_jump_x = x;
          pre_jump_y = x;
          last_step_jumped = true;
        }
        c.jump(x, jumps[jidx].mark, work.fout);
        x += work.fout;
        ++jidx;
        ++jump_count;
      }
      y = x;
      if (!x.allFinite())
        throw blow_up_error("simulate_coupled: state non-finite", t);
      return;
    }

    const double dist_start = (x - y).norm();
    c.drift(x, work.bx);
    c.drift(y, work.by);
    c.diffusion(x, work.sigx);
    c.diffusion(y, work.sigy);
    work.compensator_x.eval(x, rng, work.compx);
    work.compensator_y.eval(y, rng, work.compy);

    // block covariance of the coupled diffusion
    const MatrixXd ax = work.sigx * work.sigx.transpose();
    const MatrixXd ay = work.sigy * work.sigy.transpose();
    MatrixXd cmat;
    try {
      cmat = coupling_matrix_impl(x, y, c, beta2, work.sigx, work.sigy);
    } catch (const not_psd_error& e) {
      std::ostringstream os;
      os << "simulate_coupled: reduced diffusion failed at t=" << t << ": "
         << e.what();
      throw precondition_error(os.str());
    }
    work.big.topLeftCorner(d, d) = ax;
    work.big.topRightCorner(d, d) = cmat;
    work.big.bottomLeftCorner(d, d) = cmat.transpose();
    work.big.bottomRightCorner(d, d) = ay;
    const double big_norm = work.big.norm();
    if (opts.validate_psd) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(work.big,
                                                 Eigen::EigenvaluesOnly);
      if (es.eigenvalues()[0] < -1e-10 * big_norm) {
        std::ostringstream os;
        os << "simulate_coupled: block covariance not PSD (min eig "
           << es.eigenvalues()[0] << ") at t=" << t;
        throw precondition_error(os.str());
      }
    }
    MatrixXd s_blk;
    try {
      s_blk = matops::sqrt_psd_dense(0.5 * (work.big + work.big.transpose()),
                                     matops::default_clip_tol(big_norm));
    } catch (const not_psd_error& e) {
      std::ostringstream os;
      os << "simulate_coupled: coupling degeneracy at t=" << t << " (x,y)=("
         << x.transpose() << "),(" << y.transpose() << "): " << e.what();
      throw precondition_error(os.str());
    }

    // G_bar before the move: local variance rate of the distance process
    // along the current direction, used by the bridge hitting test below
    double g_bar = 0.0;
    VectorXd u_start;
    if (opts.glue && opts.bridge_correction && dist_start > 0.0) {
      u_start = (x - y) / dist_start;
      g_bar = u_start.dot((ax + ay - cmat - cmat.transpose()) * u_start);
    }

    for (int i = 0; i < 2 * d; ++i) work.xi[i] = rng.normal();
    const VectorXd noise = std::sqrt(h) * (s_blk * work.xi);
    x += h * (work.bx - work.compx) + noise.head(d);
    y += h * (work.by - work.compy) + noise.tail(d);

    bool hit = false;
    const double dist_diff = (x - y).norm();
    if (opts.glue) {
      if (dist_diff <= eps) {
        hit = true;
      } else if (opts.bridge_correction && g_bar > 0.0) {
        // one-dimensional bridge for the along-u component of the
        // difference; reflection couplings move the difference (almost)
        // only along u. A sign change of that component is a crossing.
        const double along = u_start.dot(x - y);
        if (along <= 0.0) {
          hit = true;
          ++bridge_hits;
        } else {
          const double p_hit =
              std::exp(-2.0 * dist_start * along / (g_bar * h));
          if (rng.uniform01() < p_hit) {
            hit = true;
            ++bridge_hits;
          }
        }
      }
    } else if (dist_diff <= eps && tau == kInf) {
      tau = t;  // bookkeeping only; no assignment in unglued runs
    }
    if (hit) {
      glued = true;
      tau = t;
      y = x;  // glue by assignment; the x marginal is untouched
    }

    // shared jumps at the node
    while (jidx < jumps.size() && jumps[jidx].time == t) {
      if (!last_step_jumped) {
        pre_jump_x = x;
        pre_jump_y = y;
        last_step_jumped = true;
      }
      c.jump(x, jumps[jidx].mark, work.fout);
      if (glued) {
        x += work.fout;
        y = x;
      } else {
        const VectorXd fx = work.fout;
        c.jump(y, jumps[jidx].mark, work.fout);
        x += fx;
        y += work.fout;
      }
      ++jidx;
      ++jump_count;
    }
    if (!glued) {
      const double dist_post = (x - y).norm();
      if (dist_post <= eps) {
        if (opts.glue) {
          glued = true;
          y = x;
        }
        if (tau == kInf) tau = t;  // bookkeeping also in unglued runs
      } else if (dist_post > params.delta && s_delta == kInf) {
        s_delta = t;
      }
    }
    if (!x.allFinite() || !y.allFinite())
      throw blow_up_error("simulate_coupled: state non-finite", t);
  }
};

}  // namespace

CoupledPathRecord simulate_coupled(const model::CoefficientSet& coeffs,
                                   const CouplingParams& params, double horizon,
                                   double dt, Rng& rng,
                                   const CoupledOptions& opts) {
  coeffs.validate();
  params.validate();
  if (params.x0.size() != coeffs.dim)
    throw precondition_error("simulate_coupled: x0 has wrong dimension");

  const auto jumps = sim::detail::draw_jumps(coeffs.kernel, horizon, rng);
  const auto nodes =
      sim::detail::merged_nodes(horizon, dt, jumps, opts.checkpoints);

  CoupledCore core(coeffs, params, opts);
  CoupledPathRecord rec;
  rec.nodes = nodes;
  rec.x_states.reserve(nodes.size());
  rec.y_states.reserve(nodes.size());
  rec.glued.reserve(nodes.size());
  rec.x_states.push_back(core.x);
  rec.y_states.push_back(core.y);
  rec.glued.push_back(core.glued ? 1 : 0);

  std::size_t jidx = 0;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    core.step(nodes[k], nodes[k] - nodes[k - 1], jumps, jidx, rng);
    rec.x_states.push_back(core.x);
    rec.y_states.push_back(core.y);
    rec.glued.push_back(core.glued ? 1 : 0);
    if (core.last_step_jumped)
      rec.pre_jump.emplace_back(k,
                                std::make_pair(core.pre_jump_x, core.pre_jump_y));
  }
  rec.tau = core.tau;
  rec.s_delta = core.s_delta;
  rec.bridge_hits = core.bridge_hits;
  return rec;
}

CoupledEnsemble run_coupled_ensemble(const model::CoefficientSet& coeffs,
                                     const CouplingParams& params,
                                     const CoupledEnsembleSpec& spec) {
  coeffs.validate();
  params.validate();
  const auto& cps = spec.opts.checkpoints;
  for (std::size_t i = 1; i < cps.size(); ++i)
    if (cps[i] <= cps[i - 1])
      throw precondition_error("coupled ensemble: checkpoints must increase");

  CoupledEnsemble ens;
  ens.params = params;
  ens.spec = spec;
  const std::size_t n = spec.n_paths;
  const int d = coeffs.dim;
  ens.tau.assign(n, kInf);
  ens.s_delta.assign(n, kInf);
  ens.x_at.assign(cps.size(), MatrixXd(n, d));
  ens.y_at.assign(cps.size(), MatrixXd(n, d));
  ens.jump_counts.assign(n, 0);
  std::vector<long> bridge(n, 0);

  sim::parallel_for(n, spec.threads, [&](std::size_t i) {
    Rng rng(sim::derive_path_seed(spec.master_seed, i));
    const auto jumps =
        sim::detail::draw_jumps(coeffs.kernel, spec.horizon, rng);
    const auto nodes =
        sim::detail::merged_nodes(spec.horizon, spec.dt, jumps, cps);
    CoupledCore core(coeffs, params, spec.opts);
    std::size_t jidx = 0, cp = 0;
    while (cp < cps.size() && cps[cp] == 0.0) {
      ens.x_at[cp].row(i) = core.x.transpose();
      ens.y_at[cp].row(i) = core.y.transpose();
      ++cp;
    }
    for (std::size_t k = 1; k < nodes.size(); ++k) {
      core.step(nodes[k], nodes[k] - nodes[k - 1], jumps, jidx, rng);
      while (cp < cps.size() && cps[cp] == nodes[k]) {
        ens.x_at[cp].row(i) = core.x.transpose();
        ens.y_at[cp].row(i) = core.y.transpose();
        ++cp;
      }
    }
    ens.tau[i] = core.tau;
    ens.s_delta[i] = core.s_delta;
    ens.jump_counts[i] = core.jump_count;
    bridge[i] = core.bridge_hits;
  });
  for (long b : bridge) ens.bridge_hits += b;
  return ens;
}

stats::ProbEstimate estimate_tail(const CoupledEnsemble& ensemble, double t) {
  if (t > ensemble.spec.horizon)
    throw precondition_error("estimate_tail: t beyond the horizon");
  long k = 0;
  for (double tau : ensemble.tau)
    if (tau > t) ++k;
  return stats::wilson(k, static_cast<long>(ensemble.tau.size()));
}

bool StrongFellerReport::all_hold() const {
  for (const auto& r : rows)
    if (!r.holds) return false;
  return !rows.empty();
}

StrongFellerReport strong_feller_modulus(
    const model::CoefficientSet& coeffs, const CouplingParams& params,
    const std::vector<double>& times,
    const std::function<double(Eigen::Ref<const Eigen::VectorXd>)>& phi,
    double phi_sup_norm, std::size_t n_single, std::size_t n_coupled,
    double dt, std::uint64_t master_seed, int threads) {
  params.validate();
  const double t_max = *std::max_element(times.begin(), times.end());

  sim::EnsembleSpec es;
  es.horizon = t_max;
  es.dt = dt;
  es.n_paths = n_single;
  es.checkpoints = times;
  es.threads = threads;
  es.x0 = params.x0;
  es.master_seed = derive_seed(master_seed, "sf-x", 0);
  const auto ens_x = sim::run_ensemble(coeffs, es);
  es.x0 = params.y0;
  es.master_seed = derive_seed(master_seed, "sf-y", 0);
  const auto ens_y = sim::run_ensemble(coeffs, es);

  CoupledEnsembleSpec cs;
  cs.horizon = t_max;
  cs.dt = dt;
  cs.n_paths = n_coupled;
  cs.master_seed = derive_seed(master_seed, "sf-coupled", 0);
  cs.threads = threads;
  const auto coup = run_coupled_ensemble(coeffs, params, cs);

  StrongFellerReport rep;
  for (double t : times) {
    const int c = ens_x.checkpoint_index(t);
    std::vector<double> phix(n_single), phiy(n_single);
    for (std::size_t i = 0; i < n_single; ++i) {
      phix[i] = phi(ens_x.checkpoint_states[c].row(i).transpose());
      phiy[i] = phi(ens_y.checkpoint_states[c].row(i).transpose());
    }
    const auto mx = stats::mean_stderr(phix);
    const auto my = stats::mean_stderr(phiy);
    const auto tail = estimate_tail(coup, t);
    StrongFellerRow row;
    row.t = t;
    row.lhs = std::abs(mx.mean - my.mean);
    row.lhs_stderr = std::hypot(mx.stderr_, my.stderr_);
    row.tail_p = tail.p;
    row.rhs = 2.0 * phi_sup_norm * tail.p;
    const double tail_se = std::sqrt(
        tail.p * (1.0 - tail.p) / static_cast<double>(std::max<std::size_t>(
                                      1, n_coupled)));
    row.rhs_stderr = 2.0 * phi_sup_norm * tail_se;
    const double joint = std::hypot(row.lhs_stderr, row.rhs_stderr);
    row.holds = row.lhs <= row.rhs + 3.0 * joint;
    rep.rows.push_back(row);
  }
  return rep;
}

void export_coupled_csv(const model::CoefficientSet& coeffs,
                        const CoupledEnsemble& ensemble, std::ostream& os) {
  const int d = coeffs.dim;
  os << "# model_hash=" << coeffs.model_hash() << "\n";
  os << "# seed=" << ensemble.spec.master_seed << "\n";
  os << "# d=" << d << " T=" << sim::format_g17(ensemble.spec.horizon)
     << " dt=" << sim::format_g17(ensemble.spec.dt) << "\n";
  os << "path_id,time";
  for (int i = 0; i < d; ++i) os << ",x" << i;
  for (int i = 0; i < d; ++i) os << ",y" << i;
  os << "\n";
  const auto& cps = ensemble.spec.opts.checkpoints;
  for (std::size_t p = 0; p < ensemble.tau.size(); ++p) {
    for (std::size_t c = 0; c < cps.size(); ++c) {
      os << p << "," << sim::format_g17(cps[c]);
      for (int i = 0; i < d; ++i)
        os << "," << sim::format_g17(ensemble.x_at[c](p, i));
      for (int i = 0; i < d; ++i)
        os << "," << sim::format_g17(ensemble.y_at[c](p, i));
      os << "\n";
    }
  }
  os << "# summary\npath_id,tau,s_delta\n";
  for (std::size_t p = 0; p < ensemble.tau.size(); ++p)
    os << p << "," << sim::format_g17(ensemble.tau[p]) << ","
       << sim::format_g17(ensemble.s_delta[p]) << "\n";
}

}  // namespace jumplab::coupling

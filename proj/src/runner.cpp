#include "jumplab/runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "jumplab/coupling.hpp"
#include "jumplab/ergodic.hpp"
#include "jumplab/errors.hpp"
#include "jumplab/girsanov.hpp"
#include "jumplab/matops.hpp"
#include "jumplab/sim.hpp"
#include "jumplab/stats.hpp"

namespace jumplab::runner {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd to_vec(const std::vector<double>& v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

struct Writer {
  fs::path dir;
  std::vector<std::string>* files;
  void text(const std::string& name, const std::string& content) const {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw usage_error("cannot open output file " + name);
    os << content;
    files->push_back(name);
  }
  void json(const std::string& name, const ordered_json& j) const {
    text(name, j.dump(2) + "\n");
  }
};

std::function<double(Eigen::Ref<const VectorXd>)> make_phi(
    const std::string& name) {
  if (name == "tanh")
    return [](Eigen::Ref<const VectorXd> x) { return std::tanh(x[0]); };
  if (name == "coord0")
    return [](Eigen::Ref<const VectorXd> x) { return x[0]; };
  if (name == "cos")
    return [](Eigen::Ref<const VectorXd> x) { return std::cos(x[0]); };
  if (name == "gauss")
    return [](Eigen::Ref<const VectorXd> x) {
      return std::exp(-x.squaredNorm());
    };
  throw precondition_error("unknown phi " + name +
                           " (expected tanh|coord0|cos|gauss)");
}

double phi_sup_norm(const std::string& name) {
  return name == "coord0" ? std::numeric_limits<double>::infinity() : 1.0;
}

void run_simulate(const config::ExperimentConfig& cfg, const Writer& w) {
  const auto coeffs = cfg.model.build();
  sim::EnsembleSpec es;
  es.x0 = to_vec(cfg.simulate.x0);
  es.horizon = cfg.simulate.horizon;
  es.dt = cfg.simulate.dt;
  es.n_paths = cfg.simulate.n_paths;
  es.checkpoints = cfg.simulate.checkpoints;
  es.master_seed = cfg.seed;
  es.threads = cfg.threads;
  es.store_full = cfg.simulate.export_paths;
  const auto ens = sim::run_ensemble(coeffs, es);

  ordered_json rep;
  rep["experiment"] = "simulate";
  rep["model_hash"] = coeffs.model_hash();
  const auto sup = sim::estimate_sup_second_moment(ens);
  rep["sup_second_moment"] = sup.value;
  rep["sup_second_moment_stderr"] = sup.stderr_;
  ordered_json cps = ordered_json::array();
  for (std::size_t c = 0; c < es.checkpoints.size(); ++c) {
    ordered_json jc;
    jc["t"] = es.checkpoints[c];
    const MatrixXd& st = ens.checkpoint_states[c];
    ordered_json mean = ordered_json::array(), var = ordered_json::array();
    for (int a = 0; a < coeffs.dim; ++a) {
      const double m = st.col(a).mean();
      mean.push_back(m);
      var.push_back((st.col(a).array() - m).square().sum() /
                    std::max<double>(1.0, static_cast<double>(st.rows() - 1)));
    }
    jc["mean"] = mean;
    jc["var"] = var;
    cps.push_back(jc);
  }
  rep["checkpoints"] = cps;
  if (cfg.simulate.event_time) {
    sim::Event ev =
        cfg.simulate.event_kind == "ball"
            ? sim::Event::ball(to_vec(cfg.simulate.event_center),
                               cfg.simulate.event_radius)
            : sim::Event::box(to_vec(cfg.simulate.event_lo),
                              to_vec(cfg.simulate.event_hi));
    const auto p = sim::estimate_transition(ens, *cfg.simulate.event_time, ev);
    rep["event_probability"] = p.p;
    rep["event_ci"] = {p.lo, p.hi};
  }
  w.json("report.json", rep);
  if (cfg.simulate.export_paths) {
    std::ostringstream os;
    sim::export_paths_csv(ens, os);
    w.text("paths.csv", os.str());
  }
}

void run_couple(const config::ExperimentConfig& cfg, const Writer& w) {
  const auto coeffs = cfg.model.build();
  coupling::CouplingParams params;
  params.x0 = to_vec(cfg.couple.x0);
  params.y0 = to_vec(cfg.couple.y0);
  params.delta = cfg.couple.delta;
  params.alpha = cfg.couple.alpha;
  params.couple_eps = cfg.couple.couple_eps;
  params.beta_override = cfg.couple.beta_override;
  coupling::CoupledEnsembleSpec spec;
  spec.horizon = cfg.couple.horizon;
  spec.dt = cfg.couple.dt;
  spec.n_paths = cfg.couple.n_paths;
  spec.master_seed = cfg.seed;
  spec.threads = cfg.threads;
  spec.opts.glue = cfg.couple.glue;
  spec.opts.bridge_correction = cfg.couple.bridge_correction;
  spec.opts.checkpoints = cfg.couple.checkpoints;
  const auto ens = coupling::run_coupled_ensemble(coeffs, params, spec);

  ordered_json rep;
  rep["experiment"] = "couple";
  rep["model_hash"] = coeffs.model_hash();
  rep["beta"] = params.beta();
  rep["couple_eps"] = params.eps();
  rep["bridge_hits"] = ens.bridge_hits;
  long coupled = 0, exceeded = 0;
  for (std::size_t i = 0; i < ens.tau.size(); ++i) {
    if (std::isfinite(ens.tau[i])) ++coupled;
    if (std::isfinite(ens.s_delta[i])) ++exceeded;
  }
  rep["coupled_fraction"] =
      static_cast<double>(coupled) / static_cast<double>(ens.tau.size());
  rep["exit_fraction"] =
      static_cast<double>(exceeded) / static_cast<double>(ens.tau.size());
  ordered_json tails = ordered_json::array();
  for (double t : cfg.couple.checkpoints) {
    const auto p = coupling::estimate_tail(ens, t);
    ordered_json jt;
    jt["t"] = t;
    jt["tail"] = p.p;
    jt["ci"] = {p.lo, p.hi};
    tails.push_back(jt);
  }
  rep["tau_tail"] = tails;

  if (cfg.couple.strong_feller) {
    const auto phi = make_phi(cfg.couple.phi);
    const auto sf = coupling::strong_feller_modulus(
        coeffs, params, cfg.couple.sf_times, phi, phi_sup_norm(cfg.couple.phi),
        cfg.couple.n_single, cfg.couple.n_paths, cfg.couple.dt, cfg.seed,
        cfg.threads);
    ordered_json rows = ordered_json::array();
    for (const auto& r : sf.rows) {
      ordered_json jr;
      jr["t"] = r.t;
      jr["lhs"] = r.lhs;
      jr["lhs_stderr"] = r.lhs_stderr;
      jr["rhs"] = r.rhs;
      jr["rhs_stderr"] = r.rhs_stderr;
      jr["tail_p"] = r.tail_p;
      jr["holds"] = r.holds;
      rows.push_back(jr);
    }
    rep["strong_feller"] = rows;
    rep["strong_feller_all_hold"] = sf.all_hold();
  }
  w.json("report.json", rep);
  if (cfg.couple.export_paths) {
    std::ostringstream os;
    coupling::export_coupled_csv(coeffs, ens, os);
    w.text("coupled.csv", os.str());
  }
}

void run_irreducibility(const config::ExperimentConfig& cfg, const Writer& w) {
  const auto coeffs = cfg.model.build();
  const auto& ic = cfg.irreducibility;
  const double t0 = ic.t0 >= 0.0 ? ic.t0 : 0.9 * ic.horizon;
  const auto rep = girsanov::irreducibility_probe(
      coeffs, to_vec(ic.x0), to_vec(ic.target), ic.radius, ic.horizon, t0,
      ic.truncation, ic.dt, ic.n_paths, cfg.seed, cfg.threads, ic.bihari_c);
  ordered_json j = rep.to_json();
  j["experiment"] = "irreducibility";
  j["model_hash"] = coeffs.model_hash();
  w.json("report.json", j);
}

void run_ergodicity(const config::ExperimentConfig& cfg, const Writer& w) {
  const auto coeffs = cfg.model.build();
  const auto& ec = cfg.ergodicity;
  ergodic::KBSpec kb;
  kb.x0 = to_vec(ec.x0s.front());
  kb.horizon = ec.mu_horizon;
  kb.dt = ec.mu_dt;
  kb.burn_in = ec.burn_in;
  kb.mode = ec.mu_mode == "ensemble" ? ergodic::KBMode::ensemble
                                     : ergodic::KBMode::single_path;
  kb.n_paths = ec.mu_paths;
  kb.seed = derive_seed(cfg.seed, "mu", 0);
  kb.threads = cfg.threads;
  const auto grid = ergodic::auto_grid(coeffs, kb, ec.bins);
  const auto mu = ergodic::krylov_bogoliubov(coeffs, kb, grid);
  w.json("mu.json", mu.to_json());

  const double burn = kb.burn_in >= 0.0 ? kb.burn_in : 0.1 * kb.horizon;
  const double ess_mu = kb.mode == ergodic::KBMode::single_path
                            ? std::max(2.0, (kb.horizon - burn) / 2.0)
                            : static_cast<double>(ec.mu_paths);
  const double floor =
      ergodic::tv_noise_floor(mu, ess_mu, static_cast<double>(ec.n_paths));

  ordered_json rep;
  rep["experiment"] = "ergodicity";
  rep["model_hash"] = coeffs.model_hash();
  rep["noise_floor"] = floor;
  rep["mu_variance_axis0"] = mu.variance(0);
  ordered_json fits = ordered_json::array();

  std::ostringstream csv;
  csv << "t";
  for (std::size_t s = 0; s < ec.x0s.size(); ++s)
    csv << ",tv_" << s << ",stderr_" << s;
  csv << "\n";
  std::vector<std::vector<double>> all_tv(ec.x0s.size());

  for (std::size_t s = 0; s < ec.x0s.size(); ++s) {
    sim::EnsembleSpec es;
    es.x0 = to_vec(ec.x0s[s]);
    es.horizon = ec.horizon;
    es.dt = ec.dt;
    es.n_paths = ec.n_paths;
    es.checkpoints = ec.times;
    es.master_seed = derive_seed(cfg.seed, "tv-start", s);
    es.threads = cfg.threads;
    const auto ens = sim::run_ensemble(coeffs, es);
    std::vector<double> tvs, ses;
    for (std::size_t c = 0; c < ec.times.size(); ++c) {
      ergodic::EmpiricalMeasure pt(grid);
      const MatrixXd& st = ens.checkpoint_states[c];
      for (Eigen::Index i = 0; i < st.rows(); ++i)
        pt.add(st.row(i).transpose());
      tvs.push_back(ergodic::tv_distance(pt, mu));
      ses.push_back(floor / 3.0);  // noise floor == 3 stderr by definition
    }
    all_tv[s] = tvs;
    const auto fit =
        ergodic::rate_fit(ec.times, tvs, ses, derive_seed(cfg.seed, "fit", s));
    ordered_json jf = fit.to_json();
    jf["x0"] = ec.x0s[s];
    fits.push_back(jf);
  }
  for (std::size_t c = 0; c < ec.times.size(); ++c) {
    csv << sim::format_g17(ec.times[c]);
    for (std::size_t s = 0; s < ec.x0s.size(); ++s)
      csv << "," << sim::format_g17(all_tv[s][c]) << ","
          << sim::format_g17(floor / 3.0);
    csv << "\n";
  }
  w.text("tv_series.csv", csv.str());
  rep["fits"] = fits;

  if (ec.spectral) {
    const auto probe = ergodic::spectral_probe(
        coeffs, mu, make_phi(ec.phi), ec.spectral_times, ec.gammas,
        ec.spectral_paths, ec.dt, derive_seed(cfg.seed, "spectral", 0),
        cfg.threads);
    w.json("spectral.json", probe.to_json());
  }
  w.json("report.json", rep);
}

void run_check(const config::ExperimentConfig& cfg, const Writer& w) {
  const auto coeffs = cfg.model.build();
  std::vector<model::Condition> which;
  if (cfg.check.which.empty()) {
    which = model::all_conditions();
  } else {
    for (const auto& name : cfg.check.which)
      for (auto c : model::all_conditions())
        if (model::condition_name(c) == name) which.push_back(c);
  }
  const auto rep =
      model::check_conditions(coeffs, which, cfg.check.cloud, cfg.seed);
  ordered_json j = rep.to_json();
  j["experiment"] = "check";
  j["model_hash"] = coeffs.model_hash();
  w.json("report.json", j);
}

void run_lemma21(const config::ExperimentConfig& cfg, const Writer& w) {
  const auto suite = run_sqrt_gap_suite(cfg.lemma21, cfg.seed);
  ordered_json j;
  j["experiment"] = "lemma21";
  j["pairs"] = suite.total;
  j["holds"] = suite.holds;
  j["max_violation"] = suite.max_violation;
  j["max_trace_rel_err"] = suite.max_trace_rel_err;
  j["all_hold"] = suite.holds == suite.total;
  w.json("report.json", j);
}

}  // namespace

SqrtGapSuite run_sqrt_gap_suite(const config::Lemma21Config& cfg,
                                std::uint64_t seed) {
  SqrtGapSuite out;
  Rng rng(derive_seed(seed, "sqrt-gap-suite", 0));
  for (long p = 0; p < cfg.n_pairs; ++p) {
    const int d = cfg.dims[static_cast<std::size_t>(p) % cfg.dims.size()];
    const double lambda =
        cfg.lambdas[static_cast<std::size_t>(p) % cfg.lambdas.size()];
    // shared random orthogonal basis from the QR of a Gaussian matrix
    MatrixXd g(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
    const Eigen::HouseholderQR<MatrixXd> qr(g);
    MatrixXd u = qr.householderQ();
    const double lo = std::sqrt(lambda) * cfg.eig_lo_factor;
    VectorXd da(d), db(d);
    for (int i = 0; i < d; ++i) {
      da[i] = rng.uniform(lo, cfg.eig_hi);
      db[i] = rng.uniform(lo, cfg.eig_hi);
    }
    const auto a = matops::SymmetricMatrix::from_dense(
        u * da.asDiagonal() * u.transpose(), 1e-9);
    const auto b = matops::SymmetricMatrix::from_dense(
        u * db.asDiagonal() * u.transpose(), 1e-9);
    const auto gap = matops::sqrt_gap(a, b, lambda);
    ++out.total;
    if (gap.holds) ++out.holds;
    out.max_violation = std::max(out.max_violation, gap.lhs - gap.rhs);
    const auto tr = matops::sqrt_gap_trace_identity(a, b, lambda);
    const double scale = std::max(
        {1.0, gap.lhs * gap.lhs, gap.rhs * gap.rhs});
    out.max_trace_rel_err =
        std::max(out.max_trace_rel_err,
                 std::abs(tr.norm_side - tr.trace_side) / scale);
  }
  return out;
}

RunResult run_experiment(config::ExperimentConfig cfg,
                         const std::string& out_dir,
                         std::optional<std::uint64_t> seed_override,
                         std::optional<int> threads_override) {
  if (seed_override) cfg.seed = *seed_override;
  if (threads_override) cfg.threads = *threads_override;
  const fs::path dir = out_dir.empty() ? fs::path(cfg.out.empty() ? "." : cfg.out)
                                       : fs::path(out_dir);
  fs::create_directories(dir);

  RunResult result;
  Writer w{dir, &result.files};

  // manifest carries everything needed to re-run; no timing inside, and the
  // worker count is an execution detail, not part of the experiment identity
  ordered_json manifest;
  manifest["tool"] = "jumplab";
  manifest["version"] = kVersion;
  manifest["experiment"] = config::kind_name(cfg.kind);
  manifest["seed"] = cfg.seed;
  manifest["config"] = cfg.to_json();
  manifest["config"].erase("threads");

  const auto start = std::chrono::steady_clock::now();
  try {
    switch (cfg.kind) {
      case config::ExperimentKind::simulate: run_simulate(cfg, w); break;
      case config::ExperimentKind::couple: run_couple(cfg, w); break;
      case config::ExperimentKind::irreducibility:
        run_irreducibility(cfg, w);
        break;
      case config::ExperimentKind::ergodicity: run_ergodicity(cfg, w); break;
      case config::ExperimentKind::check: run_check(cfg, w); break;
      case config::ExperimentKind::lemma21: run_lemma21(cfg, w); break;
    }
    w.json("manifest.json", manifest);
  } catch (const error& e) {
    ordered_json fail;
    fail["error"] = "jumplab_error";
    fail["message"] = e.what();
    w.json("failure.json", fail);
    result.exit_code = 1;
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  std::cerr << "[jumplab] " << config::kind_name(cfg.kind) << " finished in "
            << ms << " ms, outputs in " << dir.string() << "\n";
  return result;
}

}  // namespace jumplab::runner

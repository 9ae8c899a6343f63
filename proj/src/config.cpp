#include "jumplab/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "jumplab/errors.hpp"

namespace jumplab::config {

using nlohmann::ordered_json;

model::CoefficientSet ModelConfig::build() const {
  model::CoefficientSet c;
  if (family == "linear") {
    model::LinearParams p;
    p.dim = dim;
    p.theta = theta;
    p.sigma = sigma;
    p.jump_rate = jump_rate;
    p.jump_scale = jump_scale;
    c = model::make_linear(p);
  } else if (family == "polynomial-drift") {
    model::PolynomialParams p;
    p.dim = dim;
    p.coeff = coeff;
    p.power = power;
    p.sigma = sigma;
    p.jump_rate = jump_rate;
    p.jump_scale = jump_scale;
    c = model::make_polynomial_drift(p);
  } else if (family == "log-modulus-perturbed") {
    model::LogModulusParams p;
    p.dim = dim;
    p.theta = theta;
    p.pert = pert;
    p.cutoff = cutoff;
    p.sigma = sigma;
    p.sigma_ampl = sigma_ampl;
    p.jump_rate = jump_rate;
    p.jump_scale = jump_scale;
    c = model::make_log_modulus(p);
  } else {
    throw precondition_error("ModelConfig: unknown family " + family);
  }
  if (lambda0) c.lambda0 = *lambda0;
  if (lambda1) c.lambda1 = *lambda1;
  if (lambda2) c.lambda2 = *lambda2;
  if (lambda3) c.lambda3 = *lambda3;
  if (lambda4) c.lambda4 = *lambda4;
  if (r) c.r = *r;
  if (gamma) c.gamma = *gamma;
  c.validate();
  return c;
}

std::string kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::simulate: return "simulate";
    case ExperimentKind::couple: return "couple";
    case ExperimentKind::irreducibility: return "irreducibility";
    case ExperimentKind::ergodicity: return "ergodicity";
    case ExperimentKind::check: return "check";
    case ExperimentKind::lemma21: return "lemma21";
  }
  return "?";
}

std::optional<ExperimentKind> kind_from_name(const std::string& s) {
  for (auto k : {ExperimentKind::simulate, ExperimentKind::couple,
                 ExperimentKind::irreducibility, ExperimentKind::ergodicity,
                 ExperimentKind::check, ExperimentKind::lemma21})
    if (kind_name(k) == s) return k;
  return std::nullopt;
}

namespace {

// Collects every issue; the caller raises one config_error at the end.
struct Issues {
  std::vector<std::string> list;
  void add(const std::string& path, const std::string& what) {
    list.push_back(path + ": " + what);
  }
  void raise_if_any() const {
    if (!list.empty()) throw config_error("config validation failed", list);
  }
};

void check_keys(const ordered_json& j, const std::string& path,
                const std::set<std::string>& allowed, Issues& issues) {
  if (!j.is_object()) {
    issues.add(path, "expected an object");
    return;
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      issues.add(path + "." + it.key(), "unknown key");
}

template <class T>
bool get_to(const ordered_json& j, const std::string& path,
            const std::string& key, T& out, Issues& issues, bool required) {
  if (!j.is_object() || !j.contains(key)) {
    if (required) issues.add(path + "." + key, "missing required key");
    return false;
  }
  try {
    j.at(key).get_to(out);
    return true;
  } catch (const std::exception& e) {
    issues.add(path + "." + key, std::string("bad value: ") + e.what());
    return false;
  }
}

template <class T>
void get_opt(const ordered_json& j, const std::string& path,
             const std::string& key, std::optional<T>& out, Issues& issues) {
  if (!j.is_object() || !j.contains(key)) return;
  T v{};
  if (get_to(j, path, key, v, issues, false)) out = v;
}

ModelConfig parse_model(const ordered_json& j, Issues& issues) {
  ModelConfig m;
  const std::string path = "model";
  check_keys(j, path,
             {"family", "dim", "theta", "sigma", "jump_rate", "jump_scale",
              "coeff", "power", "pert", "cutoff", "sigma_ampl", "lambda0",
              "lambda1", "lambda2", "lambda3", "lambda4", "r", "gamma"},
             issues);
  if (!j.is_object()) return m;
  get_to(j, path, "family", m.family, issues, true);
  if (!m.family.empty() && m.family != "linear" &&
      m.family != "polynomial-drift" && m.family != "log-modulus-perturbed")
    issues.add(path + ".family",
               "must be one of linear, polynomial-drift, log-modulus-perturbed");
  get_to(j, path, "dim", m.dim, issues, false);
  if (m.dim < 1) issues.add(path + ".dim", "must be >= 1");
  get_to(j, path, "theta", m.theta, issues, false);
  get_to(j, path, "sigma", m.sigma, issues, false);
  if (!(m.sigma > 0.0)) issues.add(path + ".sigma", "must be > 0");
  get_to(j, path, "jump_rate", m.jump_rate, issues, false);
  if (m.jump_rate < 0.0) issues.add(path + ".jump_rate", "must be >= 0");
  get_to(j, path, "jump_scale", m.jump_scale, issues, false);
  get_to(j, path, "coeff", m.coeff, issues, false);
  get_to(j, path, "power", m.power, issues, false);
  get_to(j, path, "pert", m.pert, issues, false);
  get_to(j, path, "cutoff", m.cutoff, issues, false);
  get_to(j, path, "sigma_ampl", m.sigma_ampl, issues, false);
  get_opt(j, path, "lambda0", m.lambda0, issues);
  get_opt(j, path, "lambda1", m.lambda1, issues);
  get_opt(j, path, "lambda2", m.lambda2, issues);
  get_opt(j, path, "lambda3", m.lambda3, issues);
  get_opt(j, path, "lambda4", m.lambda4, issues);
  get_opt(j, path, "r", m.r, issues);
  get_opt(j, path, "gamma", m.gamma, issues);
  return m;
}

void parse_event(const ordered_json& j, SimulateConfig& s, Issues& issues) {
  const std::string path = "simulate.event";
  check_keys(j, path, {"time", "kind", "center", "radius", "lo", "hi"}, issues);
  double t = 0.0;
  if (get_to(j, path, "time", t, issues, true)) s.event_time = t;
  get_to(j, path, "kind", s.event_kind, issues, false);
  if (s.event_kind == "ball") {
    get_to(j, path, "center", s.event_center, issues, true);
    get_to(j, path, "radius", s.event_radius, issues, true);
  } else if (s.event_kind == "box") {
    get_to(j, path, "lo", s.event_lo, issues, true);
    get_to(j, path, "hi", s.event_hi, issues, true);
  } else {
    issues.add(path + ".kind", "must be ball or box");
  }
}

SimulateConfig parse_simulate(const ordered_json& j, Issues& issues) {
  SimulateConfig s;
  const std::string path = "simulate";
  check_keys(j, path,
             {"x0", "T", "dt", "n_paths", "checkpoints", "export_paths",
              "event"},
             issues);
  if (!j.is_object()) return s;
  get_to(j, path, "x0", s.x0, issues, true);
  get_to(j, path, "T", s.horizon, issues, true);
  if (!(s.horizon > 0.0)) issues.add(path + ".T", "must be > 0");
  get_to(j, path, "dt", s.dt, issues, true);
  if (!(s.dt > 0.0)) issues.add(path + ".dt", "must be > 0");
  get_to(j, path, "n_paths", s.n_paths, issues, false);
  get_to(j, path, "checkpoints", s.checkpoints, issues, false);
  get_to(j, path, "export_paths", s.export_paths, issues, false);
  if (j.is_object() && j.contains("event")) parse_event(j.at("event"), s, issues);
  return s;
}

CoupleConfig parse_couple(const ordered_json& j, Issues& issues) {
  CoupleConfig c;
  const std::string path = "couple";
  check_keys(j, path,
             {"x0", "y0", "delta", "alpha", "couple_eps", "beta_override", "T",
              "dt", "n_paths", "checkpoints", "glue", "bridge_correction",
              "export_paths", "strong_feller", "phi", "sf_times", "n_single"},
             issues);
  if (!j.is_object()) return c;
  get_to(j, path, "x0", c.x0, issues, true);
  get_to(j, path, "y0", c.y0, issues, true);
  get_to(j, path, "delta", c.delta, issues, true);
  if (!(c.delta > 0.0) || !(c.delta < 0.36787944117144233))
    issues.add(path + ".delta", "must lie in (0, e^{-1}) ~= (0, 0.3678794)");
  get_to(j, path, "alpha", c.alpha, issues, false);
  if (!(c.alpha > 0.0) || !(c.alpha < 1.0))
    issues.add(path + ".alpha", "must lie in (0,1)");
  get_to(j, path, "couple_eps", c.couple_eps, issues, false);
  get_opt(j, path, "beta_override", c.beta_override, issues);
  get_to(j, path, "T", c.horizon, issues, true);
  get_to(j, path, "dt", c.dt, issues, true);
  get_to(j, path, "n_paths", c.n_paths, issues, false);
  get_to(j, path, "checkpoints", c.checkpoints, issues, false);
  get_to(j, path, "glue", c.glue, issues, false);
  get_to(j, path, "bridge_correction", c.bridge_correction, issues, false);
  get_to(j, path, "export_paths", c.export_paths, issues, false);
  get_to(j, path, "strong_feller", c.strong_feller, issues, false);
  get_to(j, path, "phi", c.phi, issues, false);
  get_to(j, path, "sf_times", c.sf_times, issues, false);
  get_to(j, path, "n_single", c.n_single, issues, false);
  return c;
}

IrreducibilityConfig parse_irreducibility(const ordered_json& j,
                                          Issues& issues) {
  IrreducibilityConfig c;
  const std::string path = "irreducibility";
  check_keys(j, path,
             {"x0", "target", "radius", "T", "t0", "truncation", "dt",
              "n_paths", "bihari_c"},
             issues);
  if (!j.is_object()) return c;
  get_to(j, path, "x0", c.x0, issues, true);
  get_to(j, path, "target", c.target, issues, true);
  get_to(j, path, "radius", c.radius, issues, true);
  if (!(c.radius > 0.0)) issues.add(path + ".radius", "must be > 0");
  get_to(j, path, "T", c.horizon, issues, true);
  get_to(j, path, "t0", c.t0, issues, false);
  if (c.t0 >= 0.0 && !(c.t0 < c.horizon))
    issues.add(path + ".t0", "must be < T");
  get_to(j, path, "truncation", c.truncation, issues, false);
  get_to(j, path, "dt", c.dt, issues, true);
  get_to(j, path, "n_paths", c.n_paths, issues, false);
  get_to(j, path, "bihari_c", c.bihari_c, issues, false);
  return c;
}

ErgodicityConfig parse_ergodicity(const ordered_json& j, Issues& issues) {
  ErgodicityConfig c;
  const std::string path = "ergodicity";
  check_keys(j, path,
             {"x0s", "mu_T", "mu_dt", "burn_in", "mu_mode", "mu_paths", "bins",
              "T", "dt", "n_paths", "times", "spectral", "phi", "gammas",
              "spectral_times", "spectral_paths"},
             issues);
  if (!j.is_object()) return c;
  get_to(j, path, "x0s", c.x0s, issues, true);
  if (c.x0s.empty()) issues.add(path + ".x0s", "need at least one start");
  get_to(j, path, "mu_T", c.mu_horizon, issues, true);
  get_to(j, path, "mu_dt", c.mu_dt, issues, false);
  get_to(j, path, "burn_in", c.burn_in, issues, false);
  get_to(j, path, "mu_mode", c.mu_mode, issues, false);
  if (c.mu_mode != "single-path" && c.mu_mode != "ensemble")
    issues.add(path + ".mu_mode", "must be single-path or ensemble");
  get_to(j, path, "mu_paths", c.mu_paths, issues, false);
  get_to(j, path, "bins", c.bins, issues, false);
  if (c.bins < 2) issues.add(path + ".bins", "must be >= 2");
  get_to(j, path, "T", c.horizon, issues, true);
  get_to(j, path, "dt", c.dt, issues, true);
  get_to(j, path, "n_paths", c.n_paths, issues, false);
  get_to(j, path, "times", c.times, issues, true);
  if (c.times.size() < 4) issues.add(path + ".times", "need >= 4 times");
  get_to(j, path, "spectral", c.spectral, issues, false);
  get_to(j, path, "phi", c.phi, issues, false);
  get_to(j, path, "gammas", c.gammas, issues, false);
  get_to(j, path, "spectral_times", c.spectral_times, issues, false);
  get_to(j, path, "spectral_paths", c.spectral_paths, issues, false);
  return c;
}

CheckConfig parse_check(const ordered_json& j, Issues& issues) {
  CheckConfig c;
  const std::string path = "check";
  check_keys(j, path,
             {"which", "radius", "n_points", "n_pairs", "n_near_diag",
              "near_diag_min", "n_marks", "n_integral_points", "n_triples"},
             issues);
  if (!j.is_object()) return c;
  get_to(j, path, "which", c.which, issues, false);
  for (const auto& w : c.which) {
    bool ok = false;
    for (auto cond : model::all_conditions())
      if (model::condition_name(cond) == w) ok = true;
    if (!ok) issues.add(path + ".which", "unknown condition " + w);
  }
  get_to(j, path, "radius", c.cloud.radius, issues, false);
  get_to(j, path, "n_points", c.cloud.n_points, issues, false);
  get_to(j, path, "n_pairs", c.cloud.n_pairs, issues, false);
  get_to(j, path, "n_near_diag", c.cloud.n_near_diag, issues, false);
  get_to(j, path, "near_diag_min", c.cloud.near_diag_min, issues, false);
  get_to(j, path, "n_marks", c.cloud.n_marks, issues, false);
  get_to(j, path, "n_integral_points", c.cloud.n_integral_points, issues,
         false);
  get_to(j, path, "n_triples", c.cloud.n_triples, issues, false);
  return c;
}

Lemma21Config parse_lemma21(const ordered_json& j, Issues& issues) {
  Lemma21Config c;
  const std::string path = "lemma21";
  check_keys(j, path, {"n_pairs", "dims", "lambdas", "eig_lo_factor", "eig_hi"},
             issues);
  if (!j.is_object()) return c;
  get_to(j, path, "n_pairs", c.n_pairs, issues, false);
  if (c.n_pairs < 1) issues.add(path + ".n_pairs", "must be >= 1");
  get_to(j, path, "dims", c.dims, issues, false);
  for (int d : c.dims)
    if (d < 1) issues.add(path + ".dims", "dims must be >= 1");
  get_to(j, path, "lambdas", c.lambdas, issues, false);
  for (double l : c.lambdas)
    if (!(l > 0.0)) issues.add(path + ".lambdas", "lambdas must be > 0");
  get_to(j, path, "eig_lo_factor", c.eig_lo_factor, issues, false);
  if (!(c.eig_lo_factor > 1.0))
    issues.add(path + ".eig_lo_factor", "must be > 1");
  get_to(j, path, "eig_hi", c.eig_hi, issues, false);
  return c;
}

}  // namespace

ExperimentConfig parse_config_json(const ordered_json& j) {
  Issues issues;
  ExperimentConfig cfg;
  check_keys(j, "<root>",
             {"experiment", "seed", "threads", "out", "model", "simulate",
              "couple", "irreducibility", "ergodicity", "check", "lemma21"},
             issues);
  std::string kind;
  get_to(j, "<root>", "experiment", kind, issues, true);
  const auto k = kind_from_name(kind);
  if (!kind.empty() && !k)
    issues.add("<root>.experiment", "unknown experiment " + kind);
  if (k) cfg.kind = *k;
  get_to(j, "<root>", "seed", cfg.seed, issues, true);
  get_to(j, "<root>", "threads", cfg.threads, issues, false);
  if (cfg.threads < 1) issues.add("<root>.threads", "must be >= 1");
  get_to(j, "<root>", "out", cfg.out, issues, false);

  const bool needs_model = k && *k != ExperimentKind::lemma21;
  if (needs_model) {
    if (j.is_object() && j.contains("model"))
      cfg.model = parse_model(j.at("model"), issues);
    else
      issues.add("<root>.model", "missing required key");
  } else if (k && j.is_object() && j.contains("model")) {
    issues.add("<root>.model", "lemma21 does not take a model");
  }

  if (k && j.is_object()) {
    const std::string section = kind_name(*k);
    if (!j.contains(section)) {
      issues.add("<root>." + section, "missing required key");
    } else {
      switch (*k) {
        case ExperimentKind::simulate:
          cfg.simulate = parse_simulate(j.at(section), issues);
          break;
        case ExperimentKind::couple:
          cfg.couple = parse_couple(j.at(section), issues);
          break;
        case ExperimentKind::irreducibility:
          cfg.irreducibility = parse_irreducibility(j.at(section), issues);
          break;
        case ExperimentKind::ergodicity:
          cfg.ergodicity = parse_ergodicity(j.at(section), issues);
          break;
        case ExperimentKind::check:
          cfg.check = parse_check(j.at(section), issues);
          break;
        case ExperimentKind::lemma21:
          cfg.lemma21 = parse_lemma21(j.at(section), issues);
          break;
      }
    }
    // sections for other experiments are rejected
    for (auto other : {ExperimentKind::simulate, ExperimentKind::couple,
                       ExperimentKind::irreducibility,
                       ExperimentKind::ergodicity, ExperimentKind::check,
                       ExperimentKind::lemma21})
      if (other != *k && j.contains(kind_name(other)))
        issues.add("<root>." + kind_name(other),
                   "section does not belong to experiment " + kind_name(*k));
  }

  if (k && *k == ExperimentKind::couple && issues.list.empty()) {
    if (cfg.couple.x0.size() != cfg.couple.y0.size() ||
        static_cast<int>(cfg.couple.x0.size()) != cfg.model.dim)
      issues.add("couple.x0", "x0/y0 must have length model.dim");
  }
  issues.raise_if_any();
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw config_error("config is not valid JSON",
                       {std::string("parse: ") + e.what()});
  }
  return parse_config_json(j);
}

namespace {

ordered_json model_json(const ModelConfig& m) {
  ordered_json j;
  j["family"] = m.family;
  j["dim"] = m.dim;
  if (m.family == "linear") {
    j["theta"] = m.theta;
  } else if (m.family == "polynomial-drift") {
    j["coeff"] = m.coeff;
    j["power"] = m.power;
  } else {
    j["theta"] = m.theta;
    j["pert"] = m.pert;
    j["cutoff"] = m.cutoff;
    j["sigma_ampl"] = m.sigma_ampl;
  }
  j["sigma"] = m.sigma;
  j["jump_rate"] = m.jump_rate;
  j["jump_scale"] = m.jump_scale;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("lambda0", m.lambda0);
  put("lambda1", m.lambda1);
  put("lambda2", m.lambda2);
  put("lambda3", m.lambda3);
  put("lambda4", m.lambda4);
  put("r", m.r);
  put("gamma", m.gamma);
  return j;
}

}  // namespace

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["experiment"] = kind_name(kind);
  j["seed"] = seed;
  j["threads"] = threads;
  if (!out.empty()) j["out"] = out;
  if (kind != ExperimentKind::lemma21) j["model"] = model_json(model);
  switch (kind) {
    case ExperimentKind::simulate: {
      ordered_json s;
      s["x0"] = simulate.x0;
      s["T"] = simulate.horizon;
      s["dt"] = simulate.dt;
      s["n_paths"] = simulate.n_paths;
      s["checkpoints"] = simulate.checkpoints;
      s["export_paths"] = simulate.export_paths;
      if (simulate.event_time) {
        ordered_json e;
        e["time"] = *simulate.event_time;
        e["kind"] = simulate.event_kind;
        if (simulate.event_kind == "ball") {
          e["center"] = simulate.event_center;
          e["radius"] = simulate.event_radius;
        } else {
          e["lo"] = simulate.event_lo;
          e["hi"] = simulate.event_hi;
        }
        s["event"] = e;
      }
      j["simulate"] = s;
      break;
    }
    case ExperimentKind::couple: {
      ordered_json s;
      s["x0"] = couple.x0;
      s["y0"] = couple.y0;
      s["delta"] = couple.delta;
      s["alpha"] = couple.alpha;
      s["couple_eps"] = couple.couple_eps;
      if (couple.beta_override) s["beta_override"] = *couple.beta_override;
      s["T"] = couple.horizon;
      s["dt"] = couple.dt;
      s["n_paths"] = couple.n_paths;
      s["checkpoints"] = couple.checkpoints;
      s["glue"] = couple.glue;
      s["bridge_correction"] = couple.bridge_correction;
      s["export_paths"] = couple.export_paths;
      s["strong_feller"] = couple.strong_feller;
      if (couple.strong_feller) {
        s["phi"] = couple.phi;
        s["sf_times"] = couple.sf_times;
        s["n_single"] = couple.n_single;
      }
      j["couple"] = s;
      break;
    }
    case ExperimentKind::irreducibility: {
      ordered_json s;
      s["x0"] = irreducibility.x0;
      s["target"] = irreducibility.target;
      s["radius"] = irreducibility.radius;
      s["T"] = irreducibility.horizon;
      s["t0"] = irreducibility.t0;
      s["truncation"] = irreducibility.truncation;
      s["dt"] = irreducibility.dt;
      s["n_paths"] = irreducibility.n_paths;
      s["bihari_c"] = irreducibility.bihari_c;
      j["irreducibility"] = s;
      break;
    }
    case ExperimentKind::ergodicity: {
      ordered_json s;
      s["x0s"] = ergodicity.x0s;
      s["mu_T"] = ergodicity.mu_horizon;
      s["mu_dt"] = ergodicity.mu_dt;
      s["burn_in"] = ergodicity.burn_in;
      s["mu_mode"] = ergodicity.mu_mode;
      s["mu_paths"] = ergodicity.mu_paths;
      s["bins"] = ergodicity.bins;
      s["T"] = ergodicity.horizon;
      s["dt"] = ergodicity.dt;
      s["n_paths"] = ergodicity.n_paths;
      s["times"] = ergodicity.times;
      s["spectral"] = ergodicity.spectral;
      if (ergodicity.spectral) {
        s["phi"] = ergodicity.phi;
        s["gammas"] = ergodicity.gammas;
        s["spectral_times"] = ergodicity.spectral_times;
        s["spectral_paths"] = ergodicity.spectral_paths;
      }
      j["ergodicity"] = s;
      break;
    }
    case ExperimentKind::check: {
      ordered_json s;
      s["which"] = check.which;
      s["radius"] = check.cloud.radius;
      s["n_points"] = check.cloud.n_points;
      s["n_pairs"] = check.cloud.n_pairs;
      s["n_near_diag"] = check.cloud.n_near_diag;
      s["near_diag_min"] = check.cloud.near_diag_min;
      s["n_marks"] = check.cloud.n_marks;
      s["n_integral_points"] = check.cloud.n_integral_points;
      s["n_triples"] = check.cloud.n_triples;
      j["check"] = s;
      break;
    }
    case ExperimentKind::lemma21: {
      ordered_json s;
      s["n_pairs"] = lemma21.n_pairs;
      s["dims"] = lemma21.dims;
      s["lambdas"] = lemma21.lambdas;
      s["eig_lo_factor"] = lemma21.eig_lo_factor;
      s["eig_hi"] = lemma21.eig_hi;
      j["lemma21"] = s;
      break;
    }
  }
  return j;
}

std::string ExperimentConfig::canonical() const { return to_json().dump(2); }

}  // namespace jumplab::config

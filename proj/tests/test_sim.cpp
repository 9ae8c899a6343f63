#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "jumplab/errors.hpp"
#include "jumplab/model.hpp"
#include "jumplab/sim.hpp"
#include "jumplab/stats.hpp"

using namespace jumplab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec1(double x) {
  VectorXd v(1);
  v[0] = x;
  return v;
}

model::CoefficientSet pure_drift(double theta) {
  model::LinearParams p;
  p.theta = theta;
  p.sigma = 1.0;  // sigma must stay positive for the declared constants
  p.jump_rate = 0.0;
  auto c = model::make_linear(p);
  // zero the actual diffusion; constants are audited elsewhere
  c.diffusion = [](Eigen::Ref<const VectorXd>, Eigen::Ref<MatrixXd> out) {
    out.setZero();
  };
  return c;
}

model::CoefficientSet brownian(int dim) {
  model::LinearParams p;
  p.dim = dim;
  p.theta = 1.0;
  p.sigma = 1.0;
  p.jump_rate = 0.0;
  auto c = model::make_linear(p);
  c.drift = [](Eigen::Ref<const VectorXd>, Eigen::Ref<VectorXd> out) {
    out.setZero();
  };
  return c;
}

// pure compensated-jump model f(x,u) = u + shift with uniform marks;
// analytic = false exercises the per-step Monte Carlo compensator
model::CoefficientSet pure_jump(double rate, double shift, bool analytic) {
  model::CoefficientSet c;
  c.dim = 1;
  c.drift = [](Eigen::Ref<const VectorXd>, Eigen::Ref<VectorXd> out) {
    out.setZero();
  };
  c.diffusion = [](Eigen::Ref<const VectorXd>, Eigen::Ref<MatrixXd> out) {
    out.setZero();
  };
  c.kernel.total_rate = rate;
  c.kernel.mark_dim = 1;
  c.kernel.sample_mark = [](Rng& rng, Eigen::Ref<VectorXd> u) {
    u[0] = rng.uniform(-1.0, 1.0);
  };
  c.jump = [shift](Eigen::Ref<const VectorXd>, Eigen::Ref<const VectorXd> u,
                   Eigen::Ref<VectorXd> out) { out[0] = u[0] + shift; };
  if (analytic) {
    c.kernel.mean_jump = [rate, shift](Eigen::Ref<const VectorXd>,
                                       Eigen::Ref<VectorXd> out) {
      out[0] = rate * shift;
    };
    c.kernel.moment_q = [rate, shift](Eigen::Ref<const VectorXd>, int q) {
      // E(U+s)^2 = 1/3 + s^2; E(U+s)^4 = 1/5 + 2 s^2 + s^4
      return q == 2 ? rate * (1.0 / 3.0 + shift * shift)
                    : rate * (0.2 + 2.0 * shift * shift +
                              shift * shift * shift * shift);
    };
  }
  c.jump_lipschitz = [](Eigen::Ref<const VectorXd>) { return 1e-12; };
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("sim");

TEST_CASE("jump time sampling: zero rate, Poisson count, exponential gaps") {
  model::JumpKernel k;
  k.total_rate = 0.0;
  Rng rng(3);
  CHECK(sim::sample_jump_times(k, 10.0, rng).empty());

  k.total_rate = 3.0;
  k.mark_dim = 1;
  k.sample_mark = [](Rng& r, Eigen::Ref<VectorXd> u) {
    u[0] = r.uniform(-1.0, 1.0);
  };
  const int reps = 100000;
  const double horizon = 10.0;
  long total = 0;
  std::vector<double> first_gaps;
  first_gaps.reserve(reps);
  Rng rng2(17);
  for (int rep = 0; rep < reps; ++rep) {
    const auto times = sim::sample_jump_times(k, horizon, rng2);
    total += static_cast<long>(times.size());
    // first arrival is Exp(3) up to an e^{-30} truncation; later gaps are
    // horizon-censored and would bias a naive KS comparison
    if (!times.empty()) first_gaps.push_back(times.front().first);
  }
  const double mean_count = static_cast<double>(total) / reps;
  const double se = std::sqrt(30.0 / reps);
  CHECK(std::abs(mean_count - 30.0) < 3.0 * se);
  const auto ks = stats::ks_one_sample(
      first_gaps, [&](double x) { return 1.0 - std::exp(-3.0 * x); });
  CHECK(ks.p > 0.001);
}

TEST_CASE("euler on a deterministic contraction is first order") {
  const auto c = pure_drift(1.0);
  const double exact = std::exp(-1.0);
  double prev_err = 0.0;
  for (double dt : {1e-2, 5e-3, 2.5e-3}) {
    Rng rng(1);
    const auto rec = sim::simulate_path(c, vec1(1.0), 1.0, dt, rng);
    const double err = std::abs(rec.states.back()[0] - exact);
    CHECK(err < 0.5 * dt);
    if (prev_err > 0.0) CHECK(err < 0.7 * prev_err);
    prev_err = err;
  }
}

TEST_CASE("brownian motion variance at the horizon") {
  const auto c = brownian(2);
  sim::EnsembleSpec es;
  es.x0 = VectorXd::Zero(2);
  es.horizon = 1.0;
  es.dt = 0.05;
  es.n_paths = 100000;
  es.checkpoints = {1.0};
  es.master_seed = 21;
  es.threads = 4;
  const auto ens = sim::run_ensemble(c, es);
  const MatrixXd& st = ens.checkpoint_states[0];
  for (int a = 0; a < 2; ++a) {
    const double m = st.col(a).mean();
    const double var = (st.col(a).array() - m).square().sum() /
                       static_cast<double>(st.rows() - 1);
    CHECK(std::abs(var - 1.0) <
          3.0 * std::sqrt(2.0 / static_cast<double>(es.n_paths)));
  }
}

TEST_CASE("compensated jumps are a martingale (analytic and MC compensator)") {
  for (bool analytic : {true, false}) {
    CAPTURE(analytic);
    const auto c = pure_jump(2.0, 0.3, analytic);
    sim::EnsembleSpec es;
    es.x0 = vec1(0.5);
    es.horizon = 1.0;
    es.dt = 0.02;
    es.n_paths = 20000;
    es.checkpoints = {1.0};
    es.master_seed = 33;
    es.threads = 4;
    const auto ens = sim::run_ensemble(c, es);
    std::vector<double> xs(es.n_paths);
    for (std::size_t i = 0; i < es.n_paths; ++i)
      xs[i] = ens.checkpoint_states[0](i, 0);
    const auto ms = stats::mean_stderr(xs);
    CHECK(std::abs(ms.mean - 0.5) < 3.0 * ms.stderr_);
    if (analytic) {
      CHECK(ens.comp_stderr_mean[0] == 0.0);
    } else {
      CHECK(ens.comp_stderr_mean[0] > 0.0);
    }
  }
}

TEST_CASE("constant unit jumps recover x0 in the mean") {
  // f == 1: X_T = x0 + N_T - rate*T, so E X_T = x0
  model::CoefficientSet c = pure_jump(3.0, 0.0, false);
  c.jump = [](Eigen::Ref<const VectorXd>, Eigen::Ref<const VectorXd>,
              Eigen::Ref<VectorXd> out) { out[0] = 1.0; };
  sim::EnsembleSpec es;
  es.x0 = vec1(-1.0);
  es.horizon = 2.0;
  es.dt = 0.05;
  es.n_paths = 20000;
  es.checkpoints = {2.0};
  es.master_seed = 4;
  es.threads = 2;
  const auto ens = sim::run_ensemble(c, es);
  std::vector<double> xs(es.n_paths);
  for (std::size_t i = 0; i < es.n_paths; ++i)
    xs[i] = ens.checkpoint_states[0](i, 0);
  const auto ms = stats::mean_stderr(xs);
  CHECK(std::abs(ms.mean - (-1.0)) < 3.0 * std::max(ms.stderr_, 1e-12));
}

TEST_CASE("weak convergence of the OU scheme under step halving") {
  model::LinearParams p;
  p.theta = 1.0;
  p.sigma = 1.0;
  p.jump_rate = 0.0;
  const auto c = model::make_linear(p);
  const double x0 = 1.0, t = 1.0;
  const double mean_exact = std::exp(-t) * x0;
  const double var_exact = (1.0 - std::exp(-2.0 * t)) / 2.0;
  std::vector<double> mean_err, var_err;
  for (double dt : {0.4, 0.2, 0.1, 0.05}) {
    sim::EnsembleSpec es;
    es.x0 = vec1(x0);
    es.horizon = t;
    es.dt = dt;
    es.n_paths = 400000;
    es.checkpoints = {t};
    es.master_seed = 55;
    es.threads = 8;
    const auto ens = sim::run_ensemble(c, es);
    const auto& st = ens.checkpoint_states[0];
    const double m = st.col(0).mean();
    const double v = (st.col(0).array() - m).square().sum() /
                     static_cast<double>(st.rows() - 1);
    mean_err.push_back(std::abs(m - mean_exact));
    var_err.push_back(std::abs(v - var_exact));
  }
  double mean_ratio = 0.0, var_ratio = 0.0;
  for (int i = 1; i < 4; ++i) {
    mean_ratio += mean_err[i] / mean_err[i - 1];
    var_ratio += var_err[i] / var_err[i - 1];
  }
  CHECK(mean_ratio / 3.0 < 0.8);
  CHECK(var_ratio / 3.0 < 0.8);
}

TEST_CASE("sup second moment: exact for a contraction, stable, scaling") {
  const auto c = pure_drift(1.0);
  sim::EnsembleSpec es;
  es.x0 = vec1(2.0);
  es.horizon = 1.0;
  es.dt = 1e-3;
  es.n_paths = 16;
  es.checkpoints = {1.0};
  es.master_seed = 5;
  const auto ens = sim::run_ensemble(c, es);
  const auto sup = sim::estimate_sup_second_moment(ens);
  CHECK(sup.value == 4.0);  // sup attained at t = 0 for a contraction
  CHECK(sup.stderr_ == 0.0);

  model::LinearParams p;
  const auto ou = model::make_linear(p);
  auto run = [&](double dt, double x0, std::uint64_t seed) {
    sim::EnsembleSpec e2;
    e2.x0 = vec1(x0);
    e2.horizon = 1.0;
    e2.dt = dt;
    e2.n_paths = 10000;
    e2.checkpoints = {1.0};
    e2.master_seed = seed;
    e2.threads = 4;
    return sim::estimate_sup_second_moment(sim::run_ensemble(ou, e2));
  };
  const auto coarse = run(2e-3, 1.0, 6);
  const auto fine = run(1e-3, 1.0, 7);
  CHECK(std::isfinite(coarse.value));
  CHECK(std::abs(coarse.value - fine.value) <
        2.0 * std::hypot(coarse.stderr_, fine.stderr_));

  const auto small = run(1e-3, 3.0, 8);
  const auto big = run(1e-3, 6.0, 9);
  CHECK(big.value / small.value == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("transition probability estimates") {
  const auto c = brownian(1);
  sim::EnsembleSpec es;
  es.x0 = vec1(0.0);
  es.horizon = 1.0;
  es.dt = 0.05;
  es.n_paths = 50000;
  es.checkpoints = {1.0};
  es.master_seed = 13;
  es.threads = 4;
  const auto ens = sim::run_ensemble(c, es);

  const auto all = sim::estimate_transition(ens, 1.0, sim::Event::everything(1));
  CHECK(all.p == 1.0);
  CHECK(all.hi == 1.0);
  CHECK(all.lo > 0.999);
  const auto none = sim::estimate_transition(ens, 1.0, sim::Event::nothing(1));
  CHECK(none.p == 0.0);

  const double inf = std::numeric_limits<double>::infinity();
  const auto half = sim::estimate_transition(
      ens, 1.0, sim::Event::box(vec1(-inf), vec1(0.0)));
  CHECK(half.lo < 0.5);
  CHECK(half.hi > 0.5);

  CHECK_THROWS_AS(sim::estimate_transition(ens, 0.5, sim::Event::everything(1)),
                  usage_error);
}

TEST_CASE("ensembles are bit-identical across worker counts") {
  model::LinearParams p;
  const auto c = model::make_linear(p);
  sim::EnsembleSpec es;
  es.x0 = vec1(1.0);
  es.horizon = 0.5;
  es.dt = 1e-2;
  es.n_paths = 500;
  es.checkpoints = {0.25, 0.5};
  es.master_seed = 77;
  es.threads = 1;
  const auto a = sim::run_ensemble(c, es);
  es.threads = 4;
  const auto b = sim::run_ensemble(c, es);
  es.threads = 8;
  const auto d = sim::run_ensemble(c, es);
  for (std::size_t cp = 0; cp < es.checkpoints.size(); ++cp) {
    CHECK(a.checkpoint_states[cp] == b.checkpoint_states[cp]);
    CHECK(a.checkpoint_states[cp] == d.checkpoint_states[cp]);
  }
  CHECK(a.sup_sq == b.sup_sq);
  CHECK(a.jump_counts == d.jump_counts);
}

TEST_CASE("blow-up reports a diagnostic error") {
  model::CoefficientSet c;
  c.dim = 1;
  c.drift = [](Eigen::Ref<const VectorXd> x, Eigen::Ref<VectorXd> out) {
    out = x * x.squaredNorm() * 1e8;
  };
  c.diffusion = [](Eigen::Ref<const VectorXd>, Eigen::Ref<MatrixXd> out) {
    out.setZero();
  };
  c.kernel.total_rate = 0.0;
  Rng rng(2);
  CHECK_THROWS_AS(sim::simulate_path(c, vec1(10.0), 1.0, 0.05, rng),
                  blow_up_error);
}

TEST_CASE("full records agree with thinned ensembles and export cleanly") {
  model::LinearParams p;
  p.jump_rate = 2.0;
  const auto c = model::make_linear(p);
  sim::EnsembleSpec es;
  es.x0 = vec1(0.3);
  es.horizon = 1.0;
  es.dt = 0.05;
  es.n_paths = 50;
  es.checkpoints = {0.5, 1.0};
  es.master_seed = 31;
  es.store_full = true;
  const auto full = sim::run_ensemble(c, es);
  es.store_full = false;
  const auto thin = sim::run_ensemble(c, es);
  for (std::size_t cp = 0; cp < es.checkpoints.size(); ++cp)
    CHECK(full.checkpoint_states[cp] == thin.checkpoint_states[cp]);
  CHECK(full.sup_sq == thin.sup_sq);

  const auto& rec = full.records[7];
  CHECK(rec.states[0] == es.x0);
  CHECK(rec.grid.nodes.front() == 0.0);
  CHECK(rec.grid.nodes.back() == 1.0);
  for (std::size_t k = 1; k < rec.grid.nodes.size(); ++k)
    CHECK(rec.grid.nodes[k] > rec.grid.nodes[k - 1]);
  for (double jt : rec.grid.jump_times) {
    long hits = 0;
    for (double t : rec.grid.nodes)
      if (t == jt) ++hits;
    CHECK(hits == 1);
  }
  // post = pre + f(pre, u) at jump nodes (additive marks here)
  std::size_t pj = 0;
  for (const auto& [node, pre] : rec.pre_jump) {
    VectorXd expect = pre;
    while (pj < rec.jump_marks.size() &&
           rec.jump_marks[pj].first == rec.grid.nodes[node]) {
      expect += p.jump_scale * rec.jump_marks[pj].second;
      ++pj;
    }
    CHECK((rec.states[node] - expect).norm() == 0.0);
  }

  std::ostringstream os;
  sim::export_paths_csv(full, os);
  const std::string text = os.str();
  CHECK(text.find("# model_hash=") == 0);
  CHECK(text.find("path_id,time,x0,post\n") != std::string::npos);
  std::size_t rows = 0, nodes = 0, jumps = 0;
  for (char ch : text)
    if (ch == '\n') ++rows;
  for (const auto& r : full.records) {
    nodes += r.grid.nodes.size();
    jumps += r.pre_jump.size();
  }
  CHECK(rows == 4 + nodes + jumps);  // 3 header comments + column row
}

TEST_SUITE_END();

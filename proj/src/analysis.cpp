#include "voltvar/analysis.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "voltvar/error.hpp"

namespace voltvar::analysis {

namespace {

void require_square(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw SchemaError(std::string(what) + " must be square, got " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()));
  }
}

void require_length(const Eigen::VectorXd& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw SchemaError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                      std::to_string(n));
  }
}

Eigen::MatrixXd slope_matrix(const Eigen::VectorXd& slopes) { return slopes.asDiagonal(); }

void require_convergent_series(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes) {
  const double rho = spectral_radius(slope_matrix(slopes) * a);
  if (!(rho < 1.0)) {
    throw NumericalError("series diverges: rho(MA) = " + std::to_string(rho));
  }
}

}  // namespace

double spectral_radius(const Eigen::MatrixXd& x) {
  require_square(x, "matrix");
  if (x.size() == 0) return 0.0;
  if (!x.allFinite()) throw NumericalError("spectral radius of a non-finite matrix");
  const Eigen::EigenSolver<Eigen::MatrixXd> solver(x, false);
  if (solver.info() != Eigen::Success) throw NumericalError("eigenvalue iteration did not converge");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double norm_inf(const Eigen::MatrixXd& x) {
  return x.size() == 0 ? 0.0 : x.cwiseAbs().rowwise().sum().maxCoeff();
}

double norm_one(const Eigen::MatrixXd& x) {
  return x.size() == 0 ? 0.0 : x.cwiseAbs().colwise().sum().maxCoeff();
}

StabilityReport stability_report(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                                 std::string operating_point_id) {
  require_square(a, "sensitivity matrix");
  require_length(slopes, a.rows(), "slope vector");
  for (Eigen::Index i = 0; i < slopes.size(); ++i) {
    if (!(slopes(i) >= 0.0)) throw SchemaError("slopes must be non-negative");
  }
  StabilityReport report;
  report.operating_point_id = std::move(operating_point_id);
  report.rho_ma = spectral_radius(slope_matrix(slopes) * a);
  report.stable_spectral = report.rho_ma < 1.0;
  report.stable_sufficient = true;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double row = a.row(i).cwiseAbs().sum();
    report.critical_slopes.push_back(row > 0.0 ? 1.0 / row : std::numeric_limits<double>::infinity());
    const double margin = 1.0 - slopes(i) * row;
    report.row_sum_margins.push_back(margin);
    if (!(margin > 0.0)) report.stable_sufficient = false;
  }
  return report;
}

SsePrediction predict_sse(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                          const Eigen::VectorXd& dv_disturbance, const Eigen::VectorXd& v_bar,
                          const Eigen::VectorXd& mu) {
  require_square(a, "sensitivity matrix");
  const Eigen::Index n = a.rows();
  require_length(slopes, n, "slope vector");
  require_length(dv_disturbance, n, "disturbance vector");
  require_length(v_bar, n, "equilibrium voltage");
  require_length(mu, n, "set-point vector");
  require_convergent_series(a, slopes);
  const Eigen::MatrixXd gain = Eigen::MatrixXd::Identity(n, n) + a * slope_matrix(slopes);
  SsePrediction out;
  out.v_new = v_bar + gain.partialPivLu().solve(dv_disturbance);
  out.sse = out.v_new - mu;
  return out;
}

Eigen::VectorXd required_dq(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                            const Eigen::VectorXd& sse) {
  require_square(a, "sensitivity matrix");
  require_length(slopes, a.rows(), "slope vector");
  require_length(sse, a.rows(), "sse vector");
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw NumericalError("sensitivity matrix is singular");
  return -(lu.solve(sse) + slope_matrix(slopes) * sse);
}

ConvergenceReport outer_b_matrix(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                                 const Eigen::VectorXd& k_d) {
  require_square(a, "sensitivity matrix");
  const Eigen::Index n = a.rows();
  require_length(slopes, n, "slope vector");
  require_length(k_d, n, "k_d vector");
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(identity + a * slope_matrix(slopes));
  if (!lu.isInvertible()) throw NumericalError("I + A M_p is singular");
  ConvergenceReport report;
  report.b_matrix = identity - lu.solve(a * k_d.asDiagonal().toDenseMatrix());
  report.rho_b = spectral_radius(report.b_matrix);
  report.converges = report.rho_b < 1.0;
  if (n == 1 && a(0, 0) != 0.0) {
    report.k_d_upper_scalar = 2.0 * (1.0 / a(0, 0) + slopes(0));
    report.b_scalar = scalar_b(a(0, 0), slopes(0), k_d(0));
  }
  return report;
}

double scalar_b(double a, double m, double k) { return 1.0 - k / (1.0 / a + m); }

Eigen::VectorXd sse_adaptive_prediction(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                                        const Eigen::VectorXd& dq_p, const Eigen::VectorXd& v_bar,
                                        const Eigen::VectorXd& mu) {
  require_square(a, "sensitivity matrix");
  const Eigen::Index n = a.rows();
  require_length(slopes, n, "slope vector");
  require_length(dq_p, n, "offset change");
  require_length(v_bar, n, "equilibrium voltage");
  require_length(mu, n, "set-point vector");
  require_convergent_series(a, slopes);
  const Eigen::MatrixXd gain = Eigen::MatrixXd::Identity(n, n) + a * slope_matrix(slopes);
  return v_bar - mu + gain.partialPivLu().solve(a * dq_p);
}

}  // namespace voltvar::analysis

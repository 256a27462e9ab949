#pragma once

// Closed-form analytics for droop and adaptive volt/var control around an
// operating point with sensitivity matrix A = dV/dQ:
//   inner-loop stability   rho(M A) < 1, sufficient row-sum test m_i * sum_j |a_ij| < 1
//   droop equilibrium      V = V_bar + (I + A M)^-1 dV_d
//   offset correction      dq_req = -(A^-1 + M_p) sse
//   outer-loop iteration   S(k+1) = B S(k),  B = I - (I + A M_p)^-1 A K_d

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace voltvar::analysis {

// Largest eigenvalue magnitude. Throws SchemaError for non-square input.
double spectral_radius(const Eigen::MatrixXd& x);

double norm_inf(const Eigen::MatrixXd& x);  // max absolute row sum
double norm_one(const Eigen::MatrixXd& x);  // max absolute column sum

struct StabilityReport {
  double rho_ma = 0.0;
  std::vector<double> row_sum_margins;  // 1 - m_i * sum_j |a_ij|
  std::vector<double> critical_slopes;  // +inf for an all-zero row
  bool stable_sufficient = false;
  bool stable_spectral = false;
  std::string operating_point_id;
};

StabilityReport stability_report(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                                 std::string operating_point_id = "");

struct SsePrediction {
  Eigen::VectorXd v_new;
  Eigen::VectorXd sse;
};

// Throws NumericalError("series diverges") when rho(M A) >= 1.
SsePrediction predict_sse(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                          const Eigen::VectorXd& dv_disturbance, const Eigen::VectorXd& v_bar,
                          const Eigen::VectorXd& mu);

// Throws NumericalError when A is singular.
Eigen::VectorXd required_dq(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                            const Eigen::VectorXd& sse);

struct ConvergenceReport {
  Eigen::MatrixXd b_matrix;
  double rho_b = 0.0;
  bool converges = false;
  // Scalar systems only: the stable band is 0 < k_d < 2 (1/a + m).
  std::optional<double> k_d_upper_scalar;
  std::optional<double> b_scalar;
};

// Throws NumericalError when I + A M_p is singular.
ConvergenceReport outer_b_matrix(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                                 const Eigen::VectorXd& k_d);

// Scalar shortcut b = 1 - k / (1/a + m).
double scalar_b(double a, double m, double k);

// SSE after shifting the offsets by dq_p: V_bar - mu + (I + A M_p)^-1 A dq_p.
// Throws like predict_sse when rho(M_p A) >= 1.
Eigen::VectorXd sse_adaptive_prediction(const Eigen::MatrixXd& a, const Eigen::VectorXd& slopes,
                                        const Eigen::VectorXd& dq_p, const Eigen::VectorXd& v_bar,
                                        const Eigen::VectorXd& mu);

}  // namespace voltvar::analysis

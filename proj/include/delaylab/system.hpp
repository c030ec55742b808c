// Problem data and state/control representations for linear delay control
// systems, together with the metrics used throughout (M2 norm, control
// metric d_U, convex-polytope membership for the control range).
#ifndef DELAYLAB_SYSTEM_HPP_
#define DELAYLAB_SYSTEM_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace delaylab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr const char* kLibraryVersion = "delaylab 0.1.0";

/// Membership of x in the convex hull of `vertices` (phase-1 simplex).
bool in_convex_hull(const std::vector<Vec>& vertices, const Vec& x,
                    double tol = 1e-12);

/// The full problem datum: matrices, delays and the control polytope of
///   xdot(t) = A0 x(t) + sum_i Ai x(t-h_i) + B0 u(t) + sum_i Bi u(t-h_i)
/// with 0 = h_0 < h_1 < ... < h_p =: h and control values in
/// Omega = conv(omega_vertices).
///
/// Immutable after create(); structural defects (dimension mismatch,
/// non-increasing delays, segments not grid aligned) throw. Analytic
/// findings (singular A_p) are reported by validate_system, not thrown.
struct DelaySystem {
  int n = 0;  // state dimension
  int m = 0;  // control dimension
  int p = 0;  // number of positive delays
  std::vector<double> delays;      // h_1 < ... < h_p
  std::vector<Mat> A;              // A_0..A_p, each n x n
  std::vector<Mat> B;              // B_0..B_p, each n x m
  std::vector<Vec> omega_vertices; // vertices of Omega in R^m
  int n_seg = 256;                 // uniform segment grid resolution
  bool zero_in_omega = false;

  double horizon() const { return delays.back(); }
  double seg_step() const { return horizon() / n_seg; }

  bool omega_contains(const Vec& u, double tol = 1e-12) const;

  static DelaySystem create(int n, int m, std::vector<double> delays,
                            std::vector<Mat> A, std::vector<Mat> B,
                            std::vector<Vec> omega_vertices, int n_seg = 256);
};

struct Finding {
  std::string check;
  bool pass = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool all_pass() const;
  const Finding* find(const std::string& check) const;
};

/// Reports delay monotonicity, Omega nonemptiness, invertibility of A_p
/// (injectivity of T(t) and of the control semiflow) and whether 0 lies in
/// Omega. The determinant test uses |det A_p| > 1e-10 * ||A_p||^n.
ValidationReport validate_system(const DelaySystem& sys);

/// Element of M2 = R^n x L2([-h,0],R^n): head vector plus the history
/// segment sampled on the uniform grid theta_k = -h + k*h/n_seg, read as its
/// piecewise-linear interpolant. norm() uses trapezoid quadrature of the
/// squared samples, so a constant-1 segment on [-1,0] has L2 mass exactly 1.
///
/// Segment samples carry right limits; `seams` records interior jump points
/// (grid index in 1..n_seg-1 with the left limit there). Trajectory snapshots
/// of solutions whose initial data had f(0) != head produce one such seam, and
/// restarting a solve from the snapshot then reproduces the original
/// trajectory without smearing the jump. Seams do not enter the L2 value
/// (norms, distances, arithmetic ignore and drop them).
struct M2State {
  Vec head;     // in R^n
  Mat segment;  // n x (n_seg+1), column k = f(-h + k*h/n_seg)
  double h = 0;
  std::vector<std::pair<int, Vec>> seams;  // (grid index, left limit)

  int n() const { return static_cast<int>(head.size()); }
  int n_seg() const { return static_cast<int>(segment.cols()) - 1; }

  double norm() const;
  bool same_grid(const M2State& other) const;

  /// Piecewise-linear evaluation of the segment at theta in [-h, 0].
  Vec segment_at(double theta) const;

  M2State& operator+=(const M2State& o);
  M2State& operator-=(const M2State& o);
  M2State& operator*=(double a);

  static M2State zero(int n, int n_seg, double h);
  /// head = segment(0) = v, segment constant v.
  static M2State constant(const Vec& v, int n_seg, double h);
};

M2State operator+(M2State a, const M2State& b);
M2State operator-(M2State a, const M2State& b);
M2State operator*(double a, M2State x);

/// M2 inner product (head dot + trapezoid on the segment samples).
double m2_inner(const M2State& a, const M2State& b);
double m2_distance(const M2State& a, const M2State& b);

/// Flat coordinate vector [head; segment columns -h..0]. Coordinates only;
/// the M2 inner product on flat vectors needs m2_flat_weights.
Vec m2_flatten(const M2State& y);
M2State m2_unflatten(const Vec& v, int n, int n_seg, double h);
Vec m2_flat_weights(int n, int n_seg, double h);

/// Piecewise-constant admissible control. Value values[i] holds on
/// [t0 + i*dt, t0 + (i+1)*dt); the signal is 0 before t0 and holds
/// values.back() after the window (matching u(t)=0 for t<=0 when t0=0).
/// An empty value list is the identically-zero control.
struct ControlSignal {
  int m = 0;
  double t0 = 0;
  double dt = 1;
  std::vector<Vec> values;

  double t_end() const { return t0 + dt * static_cast<double>(values.size()); }

  Vec eval(double t) const;       // right-continuous
  Vec eval_left(double t) const;  // left limit

  /// The shift theta_s u: (theta_s u)(t) = u(s + t).
  ControlSignal shifted(double s) const;
  ControlSignal scaled(double a) const;

  /// Exact integral of u over [a, b] componentwise (piecewise constant, so
  /// summed in closed form including the tail conventions).
  Vec integral(double a, double b) const;

  /// Every value in Omega within tol.
  bool admissible(const DelaySystem& sys, double tol = 1e-12) const;

  static ControlSignal zero(int m);
  static ControlSignal constant(const Vec& v, double t0, double t1, double dt);
  static ControlSignal steps(std::vector<Vec> vals, double t0, double dt);
};

/// w(t) = past(t) for t <= cut and future(t - cut) for t > cut. Both inputs
/// must share dt and cut must be grid aligned with both.
ControlSignal splice_controls(const ControlSignal& past, double cut,
                              const ControlSignal& future);

/// Fixed dense family for the weak* metric on U: z_k is the indicator of
/// [-2^j, 2^j] times the coordinate unit vector e_c, enumerated with
/// k - 1 = j*m + c (intervals grow outward, coordinates cycle fastest).
struct MetricBasis {
  int K_terms = 16;
  int m = 1;

  double support_radius(int k) const;  // 2^j for term k (1-based)
  int coord(int k) const;              // c for term k (0-based)
};

/// Truncated series sum_{k<=K} 2^{-k} |I_k| / (1 + |I_k|) with
/// I_k = int (u - v)^T z_k; symmetric, zero at u = v, bounded above by 1.
double metric_u(const ControlSignal& u, const ControlSignal& v,
                const MetricBasis& basis);

}  // namespace delaylab

#endif  // DELAYLAB_SYSTEM_HPP_

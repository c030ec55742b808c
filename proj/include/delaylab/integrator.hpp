// Trajectory computation for the delay control system: the solution map
// psi(t,r,f,u) by the method of steps (fixed-step RK4 with dense history),
// the fundamental matrix X(t), the variation-of-parameters route, the
// control semiflow step and the affine split.
#ifndef DELAYLAB_INTEGRATOR_HPP_
#define DELAYLAB_INTEGRATOR_HPP_

#include "delaylab/system.hpp"

#include <utility>
#include <vector>

namespace delaylab {

/// Dense solution record on [t0 - h, t1]. x[k] holds the state at
/// t0 - h + k*step (right limits); jump points (the head/history seam at
/// t = t0, plus any seams inherited from the initial state) are kept
/// two-sided in `seams`, so snapshots restarted into a new solve reproduce
/// the original trajectory.
struct Trajectory {
  double t0 = 0, t1 = 0, step = 0;
  int n = 0, n_seg = 0;
  double h = 0;
  std::vector<Vec> x;     // dense values, index 0 at t0 - h
  std::vector<Vec> xdot;  // model right-hand side at grid points >= t0
  std::vector<std::pair<int, Vec>> seams;  // dense index -> left limit there

  int hist_len() const;             // h/step
  const Vec* seam_left(int idx) const;
  Vec eval(double t) const;         // linear interpolation, right-cont. at seams
  Vec eval_left(double t) const;    // left limit at seams, else same as eval
  M2State state_at(double t) const; // head + segment on the n_seg grid
  std::vector<M2State> snapshots(double dt_out) const;
};

/// Fixed integration step that divides the segment grid, every delay and the
/// breakpoints of u. Starts from `target` (or h/256 if target <= 0) and
/// refines by halving; throws if no aligned step exists within 4 halvings.
double aligned_step(const DelaySystem& sys, const ControlSignal& u,
                    double target = -1);

/// Solve (D1) on [0, T_end] from y0 under u. The control is evaluated at
/// absolute time (u(t) = 0 for t < u.t0 by the signal's convention).
/// Throws on misaligned steps and on non-finite values (message carries the
/// first bad time).
Trajectory solve(const DelaySystem& sys, const M2State& y0,
                 const ControlSignal& u, double T_end, double step = -1);

/// X(t): matrix solution of the homogeneous equation with X = 0 on [-h, 0),
/// X(0) = I.
Mat fundamental_matrix(const DelaySystem& sys, double t, double step = -1);

/// Dense fundamental matrix table on [0, T] at spacing `step` (index k at
/// t = k*step). Used by the convolution route.
std::vector<Mat> fundamental_dense(const DelaySystem& sys, double T,
                                   double step);

/// Variation-of-parameters route: psi(t,r,f,u) = psi(t,r,f,0)
/// + int_0^t X(t-s) sum_i B_i u(s-h_i) ds, with the convolution evaluated by
/// per-cell Simpson against a half-step fundamental-matrix table. An
/// independent route from solve(), used as a cross oracle.
Trajectory solve_vdp(const DelaySystem& sys, const M2State& y0,
                     const ControlSignal& u, double T_end, double step = -1);

/// Phi_t(u, y0) = (theta_t u, phi(t, y0, u)).
std::pair<ControlSignal, M2State> semiflow_step(const DelaySystem& sys,
                                                const ControlSignal& u,
                                                const M2State& y0, double t,
                                                double step = -1);

/// (phi(t, y0, 0), phi(t, 0, u)); their sum is phi(t, y0, u).
std::pair<M2State, M2State> affine_split(const DelaySystem& sys,
                                         const M2State& y0,
                                         const ControlSignal& u, double t,
                                         double step = -1);

/// Recovers the initial state from a homogeneous trajectory on [0, tau],
/// tau <= h - h_{p-1}, via f(t-h) = A_p^{-1}[xdot(t) - sum_{i<p} A_i x(t-h_i)]
/// evaluated at cell midpoints, plus r = x(0). The segment on [tau-h, 0] is
/// read from the trajectory history. Requires invertible A_p.
M2State reconstruct_initial(const DelaySystem& sys, const Trajectory& traj,
                            double tau);

}  // namespace delaylab

#endif  // DELAYLAB_INTEGRATOR_HPP_

// Bounded entire solutions e-, e+, e for hyperbolic systems, the conjugacy
// H(u, y) = (u, y - e(u, 0)), and the sampled graph {(u, e(u, 0))} whose
// projection approximates the chain control set.
//
// Sign convention: the invariance property Phi_t(u, e(u,0)) =
// (theta_t u, e(u,t)) pins the chain-recurrent graph to {(u, +e(u,0))}; see
// the trajectory-property tests.
#ifndef DELAYLAB_HYPERBOLIC_HPP_
#define DELAYLAB_HYPERBOLIC_HPP_

#include "delaylab/integrator.hpp"
#include "delaylab/spectral.hpp"
#include "delaylab/system.hpp"

#include <string>
#include <vector>

namespace delaylab {

/// Truncation/step policy for the entire-solution integrals. Horizons
/// default to 2 (ln(1/tol) + ln K_hat) / alpha_hat.
struct EntireParams {
  double tol = 1e-8;
  double T_past = -1;  // past horizon for e-
  double T_fut = -1;   // future horizon for e+
  double step = -1;    // integrator step (aligned default)

  double past_horizon(const HyperbolicSplitting& sp) const;
  double future_horizon(const HyperbolicSplitting& sp) const;
};

/// e-(u,t): the stable part's unique bounded entire solution,
/// int_{-infty}^t T(t-s) pi- B(u(s),...,u(s-h_p)) ds, truncated at the past
/// horizon. Computed as pi- applied to one forced solve over the window
/// (superposition; pi- commutes with T).
M2State e_minus(const DelaySystem& sys, const HyperbolicSplitting& split,
                const ControlSignal& u, double t, const EntireParams& par = {});

/// e+(u,t): the unstable part's bounded entire solution, computed in the
/// finite-dimensional V+ coordinates by exact backward recursion of the
/// reduced system from a zero terminal condition at t + T_fut.
M2State e_plus(const DelaySystem& sys, const HyperbolicSplitting& split,
               const ControlSignal& u, double t, const EntireParams& par = {});

/// e(u,t) = e+(u,t) + e-(u,t).
M2State entire_solution(const DelaySystem& sys,
                        const HyperbolicSplitting& split,
                        const ControlSignal& u, double t,
                        const EntireParams& par = {});

/// H(u, y) = y - e(u, 0) (state component of the conjugacy).
M2State conjugacy_H(const DelaySystem& sys, const HyperbolicSplitting& split,
                    const ControlSignal& u, const M2State& y,
                    const EntireParams& par = {});

struct GraphPoint {
  std::string descriptor;
  ControlSignal u;
  M2State state;  // e(u, 0)
};

/// Samples {(u, e(u,0))} over the given control family; output sorted by
/// descriptor for determinism.
std::vector<GraphPoint> chain_recurrent_graph(
    const DelaySystem& sys, const HyperbolicSplitting& split,
    const std::vector<std::pair<std::string, ControlSignal>>& controls,
    const EntireParams& par = {});

/// Standard control family for graph sampling: constants at the Omega
/// vertices plus `bangbang_count` random vertex-switching controls drawn
/// from the seed.
std::vector<std::pair<std::string, ControlSignal>> standard_control_family(
    const DelaySystem& sys, int bangbang_count, double window,
    double switch_dt, std::uint64_t seed);

}  // namespace delaylab

#endif  // DELAYLAB_HYPERBOLIC_HPP_

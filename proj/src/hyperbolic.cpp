#include "delaylab/hyperbolic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace delaylab {

namespace {

double clamp(double v, double lo, double hi) {
  return std::max(lo, std::min(hi, v));
}

}  // namespace

double EntireParams::past_horizon(const HyperbolicSplitting& sp) const {
  if (T_past > 0) return T_past;
  double alpha = std::max(sp.alpha_hat, 1e-3);
  double T = 2.0 * (std::log(1.0 / tol) + std::log(std::max(sp.K_hat, 1.0))) /
             alpha;
  return clamp(T, 2.0 * sp.h, 400.0);
}

double EntireParams::future_horizon(const HyperbolicSplitting& sp) const {
  if (T_fut > 0) return T_fut;
  double alpha = std::max(sp.alpha_hat, 1e-3);
  double T = 2.0 * (std::log(1.0 / tol) + std::log(std::max(sp.K_hat, 1.0))) /
             alpha;
  return clamp(T, 2.0 * sp.h, 400.0);
}

M2State e_minus(const DelaySystem& sys, const HyperbolicSplitting& split,
                const ControlSignal& u, double t, const EntireParams& par) {
  ControlSignal probe = u.shifted(t);  // just for alignment probing
  double step = par.step > 0
                    ? par.step
                    : aligned_step(sys, probe, sys.horizon() / 256);
  double Tp = std::ceil(par.past_horizon(split) / step) * step;
  ControlSignal uw = u.shifted(t - Tp);
  M2State zero = M2State::zero(sys.n, sys.n_seg, sys.horizon());
  Trajectory tr = solve(sys, zero, uw, Tp, step);
  return split.project_minus(tr.state_at(Tp));
}

M2State e_plus(const DelaySystem& sys, const HyperbolicSplitting& split,
               const ControlSignal& u, double t, const EntireParams& par) {
  if (split.dim_plus == 0)
    return M2State::zero(sys.n, sys.n_seg, sys.horizon());
  const double Tf = par.future_horizon(split);

  // Breakpoints of s -> B(u(s),...,u(s-h_p)) inside [t, t+Tf].
  std::set<double> cuts;
  cuts.insert(t);
  cuts.insert(t + Tf);
  if (!u.values.empty()) {
    for (int i = 0; i <= sys.p; ++i) {
      double lag = (i == 0) ? 0.0 : sys.delays[i - 1];
      for (size_t k = 0; k <= u.values.size(); ++k) {
        double s = u.t0 + k * u.dt + lag;
        if (s > t + 1e-12 && s < t + Tf - 1e-12) cuts.insert(s);
      }
    }
  }
  std::vector<double> pts(cuts.begin(), cuts.end());

  // Backward recursion of zeta' = mu zeta + c from zeta(t+Tf) = 0; exact on
  // each interval where the forcing coordinates c are constant.
  const size_t nb = split.mu_plus.size();
  VecC zeta = VecC::Zero(nb);
  const int n = sys.n;
  for (size_t q = pts.size() - 1; q >= 1; --q) {
    double a = pts[q - 1], b = pts[q];
    double mid = 0.5 * (a + b);
    Vec g = sys.B[0] * u.eval(mid);
    for (int i = 0; i < sys.p; ++i)
      g.noalias() += sys.B[i + 1] * u.eval(mid - sys.delays[i]);
    // Complex forcing coordinates from the dual head block.
    Vec c_real = split.dual_flat.leftCols(n) * g;
    VecC c(nb);
    for (size_t j = 0; j < nb; ++j) {
      int col = split.block_col[j];
      c(j) = split.block_is_pair[j] ? Complex(c_real(col), -c_real(col + 1))
                                    : Complex(c_real(col), 0.0);
    }
    double delta = b - a;
    for (size_t j = 0; j < nb; ++j) {
      Complex mu = split.mu_plus[j];
      Complex decay = std::exp(-mu * delta);
      zeta(j) = decay * zeta(j) - (1.0 - decay) / mu * c(j);
    }
  }
  return split.from_coords(zeta);
}

M2State entire_solution(const DelaySystem& sys,
                        const HyperbolicSplitting& split,
                        const ControlSignal& u, double t,
                        const EntireParams& par) {
  M2State em = e_minus(sys, split, u, t, par);
  if (split.dim_plus == 0) return em;
  return em + e_plus(sys, split, u, t, par);
}

M2State conjugacy_H(const DelaySystem& sys, const HyperbolicSplitting& split,
                    const ControlSignal& u, const M2State& y,
                    const EntireParams& par) {
  M2State out = y - entire_solution(sys, split, u, 0.0, par);
  return out;
}

std::vector<GraphPoint> chain_recurrent_graph(
    const DelaySystem& sys, const HyperbolicSplitting& split,
    const std::vector<std::pair<std::string, ControlSignal>>& controls,
    const EntireParams& par) {
  std::vector<GraphPoint> out;
  out.reserve(controls.size());
  for (const auto& [name, u] : controls)
    out.push_back({name, u, entire_solution(sys, split, u, 0.0, par)});
  std::sort(out.begin(), out.end(), [](const GraphPoint& a,
                                       const GraphPoint& b) {
    return a.descriptor < b.descriptor;
  });
  return out;
}

std::vector<std::pair<std::string, ControlSignal>> standard_control_family(
    const DelaySystem& sys, int bangbang_count, double window,
    double switch_dt, std::uint64_t seed) {
  std::vector<std::pair<std::string, ControlSignal>> fam;
  for (size_t v = 0; v < sys.omega_vertices.size(); ++v) {
    fam.emplace_back("const_" + std::to_string(v),
                     ControlSignal::constant(sys.omega_vertices[v], -window,
                                             window, switch_dt));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, sys.omega_vertices.size() - 1);
  int steps = static_cast<int>(2.0 * window / switch_dt + 0.5);
  for (int b = 0; b < bangbang_count; ++b) {
    std::vector<Vec> vals;
    vals.reserve(steps);
    for (int k = 0; k < steps; ++k)
      vals.push_back(sys.omega_vertices[pick(rng)]);
    fam.emplace_back("bb_" + std::to_string(b),
                     ControlSignal::steps(vals, -window, switch_dt));
  }
  return fam;
}

}  // namespace delaylab

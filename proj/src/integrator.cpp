#include "delaylab/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace delaylab {

namespace {

bool divides(double step, double value, double tol = 1e-9) {
  if (value == 0.0) return true;
  double k = value / step;
  return std::abs(k - std::round(k)) < tol;
}

void check_alignment(const DelaySystem& sys, const ControlSignal& u,
                     double step) {
  if (!(step > 0)) throw std::invalid_argument("solve: step must be > 0");
  if (!divides(step, sys.seg_step()))
    throw std::invalid_argument("solve: step does not divide the segment grid");
  for (double hi : sys.delays)
    if (!divides(step, hi))
      throw std::invalid_argument("solve: step does not divide a delay");
  if (!u.values.empty()) {
    if (!divides(step, u.dt))
      throw std::invalid_argument("solve: step does not divide the control dt");
    if (!divides(step, u.t0))
      throw std::invalid_argument(
          "solve: control window start is off the step grid");
  }
}

}  // namespace

double aligned_step(const DelaySystem& sys, const ControlSignal& u,
                    double target) {
  const double dg = sys.seg_step();
  double want = (target > 0) ? target : sys.horizon() / 256.0;
  int k = std::max(1, static_cast<int>(std::ceil(dg / want - 1e-12)));
  for (; k <= (1 << 22); ++k) {
    double cand = dg / k;
    bool ok = true;
    if (!u.values.empty())
      ok = divides(cand, u.dt) && divides(cand, u.t0);
    if (ok) return cand;
  }
  throw std::invalid_argument("aligned_step: no aligned subdivision found");
}

int Trajectory::hist_len() const {
  return static_cast<int>(std::llround(h / step));
}

const Vec* Trajectory::seam_left(int idx) const {
  for (const auto& s : seams)
    if (s.first == idx) return &s.second;
  return nullptr;
}

Vec Trajectory::eval(double t) const {
  const int hist = hist_len();
  double pos = (t - t0) / step + hist;
  const int last = static_cast<int>(x.size()) - 1;
  if (pos <= 0) return x.front();
  if (pos >= last) return x.back();
  int k = static_cast<int>(std::floor(pos));
  double w = pos - k;
  if (w < 1e-12) return x[k];
  if (w > 1.0 - 1e-12) return x[k + 1];
  // Intervals ending at a seam interpolate toward the left limit there.
  const Vec* sl = seam_left(k + 1);
  const Vec& right = sl ? *sl : x[k + 1];
  return (1.0 - w) * x[k] + w * right;
}

Vec Trajectory::eval_left(double t) const {
  const int hist = hist_len();
  double pos = (t - t0) / step + hist;
  double r = std::round(pos);
  if (std::abs(pos - r) < 1e-12) {
    const Vec* sl = seam_left(static_cast<int>(r));
    if (sl) return *sl;
  }
  return eval(t);
}

M2State Trajectory::state_at(double t) const {
  M2State y = M2State::zero(n, n_seg, h);
  y.head = eval(t);
  const double dg = h / n_seg;
  const int hist = hist_len();
  for (int k = 0; k < n_seg; ++k)
    y.segment.col(k) = eval(t - h + k * dg);
  y.segment.col(n_seg) = eval_left(t);
  // Inherit interior jump points that fall strictly inside [t-h, t].
  const double ratio = dg / step;
  for (const auto& s : seams) {
    double a = t0 + (s.first - hist) * step;     // absolute seam time
    if (a <= t - h + 1e-12 * h || a >= t - 1e-12 * h) continue;
    double j = (a - (t - h)) / dg;
    double jr = std::round(j);
    if (std::abs(j - jr) < 1e-9 * ratio) {
      y.seams.emplace_back(static_cast<int>(jr), s.second);
    }
  }
  return y;
}

std::vector<M2State> Trajectory::snapshots(double dt_out) const {
  std::vector<M2State> out;
  int count = static_cast<int>(std::llround((t1 - t0) / dt_out));
  out.reserve(count + 1);
  for (int j = 0; j <= count; ++j) out.push_back(state_at(t0 + j * dt_out));
  return out;
}

Trajectory solve(const DelaySystem& sys, const M2State& y0,
                 const ControlSignal& u, double T_end, double step) {
  if (!(T_end > 0)) throw std::invalid_argument("solve: T_end must be > 0");
  if (step <= 0) step = aligned_step(sys, u);
  check_alignment(sys, u, step);
  if (!divides(step, T_end))
    throw std::invalid_argument("solve: T_end is off the step grid");
  if (y0.n() != sys.n || y0.n_seg() != sys.n_seg)
    throw std::invalid_argument("solve: initial state grid mismatch");

  const int n = sys.n;
  const double h = sys.horizon();
  const int hist = static_cast<int>(std::llround(h / step));
  const int steps = static_cast<int>(std::llround(T_end / step));

  Trajectory tr;
  tr.t0 = 0;
  tr.t1 = T_end;
  tr.step = step;
  tr.n = n;
  tr.n_seg = sys.n_seg;
  tr.h = h;
  tr.x.resize(hist + steps + 1);
  tr.xdot.resize(steps + 1);

  // Seam registry: the head/history jump at t=0 plus any interior jumps
  // carried by the initial state.
  const int ratio = static_cast<int>(std::llround(sys.seg_step() / step));
  tr.seams.emplace_back(hist, y0.segment.col(y0.n_seg()));
  for (const auto& s : y0.seams)
    tr.seams.emplace_back(s.first * ratio, s.second);

  // History fill at step resolution; segment cells ending at a seam
  // interpolate toward the recorded left limit.
  for (int k = 0; k < hist; ++k) {
    int j = k / ratio, r = k % ratio;
    if (r == 0) {
      tr.x[k] = y0.segment.col(j);
    } else {
      double w = static_cast<double>(r) / ratio;
      const Vec* sl = nullptr;
      for (const auto& s : y0.seams)
        if (s.first == j + 1) sl = &s.second;
      if (sl)
        tr.x[k] = (1.0 - w) * y0.segment.col(j) + w * (*sl);
      else
        tr.x[k] = (1.0 - w) * y0.segment.col(j) + w * y0.segment.col(j + 1);
    }
  }
  tr.x[hist] = y0.head;

  const int pd = sys.p;
  std::vector<int> dshift(pd);  // delay in grid units
  for (int i = 0; i < pd; ++i)
    dshift[i] = static_cast<int>(std::llround(sys.delays[i] / step));

  // History read at grid offset `base` plus fractional w in [0,1); `side`
  // < 0 selects the left limit at seams.
  auto hist_read = [&](int base, double w, int side) -> Vec {
    if (w < 1e-12) {
      if (side < 0) {
        const Vec* sl = tr.seam_left(base);
        if (sl) return *sl;
      }
      return tr.x[base];
    }
    const Vec* sl = tr.seam_left(base + 1);
    const Vec& right = sl ? *sl : tr.x[base + 1];
    return (1.0 - w) * tr.x[base] + w * right;
  };

  const bool have_u = !u.values.empty();

  // rhs at half-step position twice_q (from t=0) given state xv.
  // side: +1 right-continuous (k1..k3), -1 left limit (k4).
  auto rhs = [&](double t, int twice_q, const Vec& xv, int side) -> Vec {
    Vec f = sys.A[0] * xv;
    for (int i = 0; i < pd; ++i) {
      int tq = twice_q - 2 * dshift[i];  // delayed position in half steps
      int base = static_cast<int>(std::floor(0.5 * tq)) + hist;
      double w = (tq % 2 == 0) ? 0.0 : 0.5;
      f.noalias() +=
          sys.A[i + 1] * hist_read(base, w, (tq % 2 == 0) ? side : 0);
    }
    if (have_u) {
      f.noalias() += sys.B[0] * (side < 0 ? u.eval_left(t) : u.eval(t));
      for (int i = 0; i < pd; ++i) {
        double td = t - sys.delays[i];
        f.noalias() +=
            sys.B[i + 1] * (side < 0 ? u.eval_left(td) : u.eval(td));
      }
    }
    return f;
  };

  Vec k1, k2, k3, k4, tmp;
  for (int j = 0; j < steps; ++j) {
    const double t = j * step;
    const Vec& xj = tr.x[hist + j];
    k1 = rhs(t, 2 * j, xj, +1);
    tr.xdot[j] = k1;
    tmp = xj + 0.5 * step * k1;
    k2 = rhs(t + 0.5 * step, 2 * j + 1, tmp, +1);
    tmp = xj + 0.5 * step * k2;
    k3 = rhs(t + 0.5 * step, 2 * j + 1, tmp, +1);
    tmp = xj + step * k3;
    k4 = rhs(t + step, 2 * j + 2, tmp, -1);
    tr.x[hist + j + 1] = xj + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!tr.x[hist + j + 1].allFinite()) {
      std::ostringstream os;
      os << "solve: non-finite state at t = " << (t + step);
      throw std::runtime_error(os.str());
    }
  }
  tr.xdot[steps] = rhs(T_end, 2 * steps, tr.x[hist + steps], +1);
  return tr;
}

namespace {

// Homogeneous matrix-valued solve for the fundamental matrix table on
// [0, T] at spacing `step`; X = 0 on [-h, 0), X(0) = I.
std::vector<Mat> fundamental_table(const DelaySystem& sys, double T,
                                   double step) {
  const int n = sys.n;
  const int steps = static_cast<int>(std::llround(T / step));
  std::vector<int> dshift(sys.p);
  for (int i = 0; i < sys.p; ++i)
    dshift[i] = static_cast<int>(std::llround(sys.delays[i] / step));

  std::vector<Mat> X(steps + 1);
  X[0] = Mat::Identity(n, n);

  // Read X at half-step position q (in half steps); side < 0 takes the left
  // limit at 0 (which is 0).
  auto read = [&](int twice_q, int side) -> Mat {
    if (twice_q < 0) return Mat::Zero(n, n);
    if (twice_q == 0 && side < 0) return Mat::Zero(n, n);
    if (twice_q % 2 == 0) return X[twice_q / 2];
    int k = twice_q / 2;
    Mat right = (k + 1 <= steps) ? X[k + 1] : X[steps];
    return 0.5 * (X[k] + right);
  };

  auto rhs = [&](int twice_q, const Mat& Xv, int side) -> Mat {
    Mat f = sys.A[0] * Xv;
    for (int i = 0; i < sys.p; ++i)
      f.noalias() += sys.A[i + 1] * read(twice_q - 2 * dshift[i],
                                         (twice_q - 2 * dshift[i]) == 0 ? side : 0);
    return f;
  };

  Mat k1, k2, k3, k4, tmp;
  for (int j = 0; j < steps; ++j) {
    const Mat& Xj = X[j];
    k1 = rhs(2 * j, Xj, +1);
    tmp = Xj + 0.5 * step * k1;
    k2 = rhs(2 * j + 1, tmp, +1);
    tmp = Xj + 0.5 * step * k2;
    k3 = rhs(2 * j + 1, tmp, +1);
    tmp = Xj + step * k3;
    k4 = rhs(2 * j + 2, tmp, -1);
    X[j + 1] = Xj + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return X;
}

}  // namespace

std::vector<Mat> fundamental_dense(const DelaySystem& sys, double T,
                                   double step) {
  check_alignment(sys, ControlSignal::zero(sys.m), step);
  return fundamental_table(sys, T, step);
}

Mat fundamental_matrix(const DelaySystem& sys, double t, double step) {
  const int n = sys.n;
  if (t < 0) return Mat::Zero(n, n);
  if (t == 0) return Mat::Identity(n, n);
  if (step <= 0) step = aligned_step(sys, ControlSignal::zero(sys.m));
  int steps = static_cast<int>(std::ceil(t / step - 1e-12));
  auto X = fundamental_table(sys, steps * step, step);
  double pos = t / step;
  int k = std::min(static_cast<int>(std::floor(pos)), steps - 1);
  double w = pos - k;
  if (w < 1e-12) return X[k];
  return (1.0 - w) * X[k] + w * X[k + 1];
}

Trajectory solve_vdp(const DelaySystem& sys, const M2State& y0,
                     const ControlSignal& u, double T_end, double step) {
  if (step <= 0) step = aligned_step(sys, u);
  check_alignment(sys, u, step);
  if (!divides(step, T_end))
    throw std::invalid_argument("solve_vdp: T_end is off the step grid");

  Trajectory hom = solve(sys, y0, ControlSignal::zero(sys.m), T_end, step);
  if (u.values.empty()) return hom;

  const int n = sys.n;
  const int steps = static_cast<int>(std::llround(T_end / step));
  const double half = 0.5 * step;
  auto X = fundamental_table(sys, T_end, half);  // index k at k*half

  // Per-cell forcing g(s) = sum_i B_i u(s - h_i); constant on open cells.
  std::vector<Vec> gmid(steps);
  for (int c = 0; c < steps; ++c) {
    double smid = (c + 0.5) * step;
    Vec g = sys.B[0] * u.eval(smid);
    for (int i = 0; i < sys.p; ++i)
      g.noalias() += sys.B[i + 1] * u.eval(smid - sys.delays[i]);
    gmid[c] = g;
  }

  // x(t_j) = hom(t_j) + sum over cells of Simpson(X(t_j - s) g(s)).
  const int hist = hom.hist_len();
  Trajectory tr = hom;
  for (int j = 1; j <= steps; ++j) {
    Vec conv = Vec::Zero(n);
    for (int c = 0; c < j; ++c) {
      const Mat& Xa = X[2 * (j - c)];
      const Mat& Xm = X[2 * (j - c) - 1];
      const Mat& Xb = X[2 * (j - c) - 2];
      conv.noalias() += (Xa + 4.0 * Xm + Xb) * gmid[c];
    }
    tr.x[hist + j] = hom.x[hist + j] + (step / 6.0) * conv;
  }

  // Refresh the stored derivative from the model right-hand side.
  std::vector<int> dshift(sys.p);
  for (int i = 0; i < sys.p; ++i)
    dshift[i] = static_cast<int>(std::llround(sys.delays[i] / step));
  for (int j = 0; j <= steps; ++j) {
    double t = j * step;
    Vec f = sys.A[0] * tr.x[hist + j];
    for (int i = 0; i < sys.p; ++i) {
      int k = hist + j - dshift[i];
      f.noalias() += sys.A[i + 1] * tr.x[k];
    }
    f.noalias() += sys.B[0] * u.eval(t);
    for (int i = 0; i < sys.p; ++i)
      f.noalias() += sys.B[i + 1] * u.eval(t - sys.delays[i]);
    tr.xdot[j] = f;
  }
  return tr;
}

std::pair<ControlSignal, M2State> semiflow_step(const DelaySystem& sys,
                                                const ControlSignal& u,
                                                const M2State& y0, double t,
                                                double step) {
  if (t < 0) throw std::invalid_argument("semiflow_step: t must be >= 0");
  if (t == 0) return {u, y0};
  Trajectory tr = solve(sys, y0, u, t, step);
  return {u.shifted(t), tr.state_at(t)};
}

std::pair<M2State, M2State> affine_split(const DelaySystem& sys,
                                         const M2State& y0,
                                         const ControlSignal& u, double t,
                                         double step) {
  if (t < 0) throw std::invalid_argument("affine_split: t must be >= 0");
  if (t == 0)
    return {y0, M2State::zero(sys.n, sys.n_seg, sys.horizon())};
  M2State zero = M2State::zero(sys.n, sys.n_seg, sys.horizon());
  Trajectory hom = solve(sys, y0, ControlSignal::zero(sys.m), t, step);
  Trajectory forced = solve(sys, zero, u, t, step);
  return {hom.state_at(t), forced.state_at(t)};
}

M2State reconstruct_initial(const DelaySystem& sys, const Trajectory& traj,
                            double tau) {
  const double h = sys.horizon();
  const double hp1 = (sys.p >= 2) ? sys.delays[sys.p - 2] : 0.0;
  if (tau > h - hp1 + 1e-9)
    throw std::invalid_argument(
        "reconstruct_initial: tau must be <= h - h_{p-1}");
  if (tau > traj.t1 + 1e-9)
    throw std::invalid_argument("reconstruct_initial: trajectory too short");
  const Mat& Ap = sys.A.back();
  double det = Ap.determinant();
  if (std::abs(det) <= 1e-10 * std::pow(Ap.norm() + 1e-300, sys.n))
    throw std::invalid_argument("reconstruct_initial: A_p is singular");
  Eigen::PartialPivLU<Mat> lu(Ap);

  const int n_seg = sys.n_seg;
  const double dg = sys.seg_step();
  M2State out = M2State::zero(sys.n, n_seg, h);
  out.head = traj.eval(0.0);

  // Midpoint reconstruction on the recoverable piece [-h, tau-h].
  int mid_count = static_cast<int>(std::floor(tau / dg + 1e-9));
  std::vector<Vec> fmid(mid_count);
  for (int j = 0; j < mid_count; ++j) {
    double t = (j + 0.5) * dg;
    Vec xdot = sys.A[0] * traj.eval(t);
    for (int i = 0; i < sys.p; ++i)
      xdot.noalias() += sys.A[i + 1] * traj.eval(t - sys.delays[i]);
    Vec known = sys.A[0] * traj.eval(t);
    for (int i = 0; i + 1 < sys.p; ++i)
      known.noalias() += sys.A[i + 1] * traj.eval(t - sys.delays[i]);
    fmid[j] = lu.solve(xdot - known);
  }

  for (int k = 0; k <= n_seg; ++k) {
    double theta = -h + k * dg;
    if (k < mid_count || (k == mid_count && mid_count > 0)) {
      if (k == 0) {
        out.segment.col(k) =
            (mid_count > 1) ? (1.5 * fmid[0] - 0.5 * fmid[1]).eval() : fmid[0];
      } else if (k == mid_count) {
        out.segment.col(k) =
            (mid_count > 1) ? (1.5 * fmid[k - 1] - 0.5 * fmid[k - 2]).eval()
                            : fmid[k - 1];
      } else {
        out.segment.col(k) = 0.5 * (fmid[k - 1] + fmid[k]);
      }
    } else {
      out.segment.col(k) = traj.eval_left(theta);
    }
  }
  return out;
}

}  // namespace delaylab

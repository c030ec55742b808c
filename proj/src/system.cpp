#include "delaylab/system.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace delaylab {

namespace {

// Phase-1 simplex for the feasibility problem
//   find lambda >= 0 with V*lambda = x, sum(lambda) = 1.
// Rows r = m+1, columns = vertices + r artificials; Bland's rule.
bool simplex_feasible(const std::vector<Vec>& vertices, const Vec& x,
                      double tol) {
  const int m = static_cast<int>(x.size());
  const int nv = static_cast<int>(vertices.size());
  const int rows = m + 1;
  const int cols = nv + rows;

  Mat T(rows, cols + 1);  // last column = rhs
  T.setZero();
  for (int j = 0; j < nv; ++j) {
    T.block(0, j, m, 1) = vertices[j];
    T(m, j) = 1.0;
  }
  Vec rhs(rows);
  rhs.head(m) = x;
  rhs(m) = 1.0;
  // Flip rows so rhs >= 0, then add artificial basis.
  for (int i = 0; i < rows; ++i) {
    if (rhs(i) < 0) {
      T.row(i) *= -1.0;
      rhs(i) *= -1.0;
    }
    T(i, nv + i) = 1.0;
  }
  T.col(cols) = rhs;

  std::vector<int> basis(rows);
  for (int i = 0; i < rows; ++i) basis[i] = nv + i;

  // Reduced costs for min sum(artificials): c_j = -sum_i T(i,j) over rows
  // whose basic variable is artificial.
  auto objective = [&]() {
    double obj = 0;
    for (int i = 0; i < rows; ++i)
      if (basis[i] >= nv) obj += T(i, cols);
    return obj;
  };

  const int max_iter = 200 * (cols + 1);
  for (int iter = 0; iter < max_iter; ++iter) {
    // Reduced cost of column j.
    int enter = -1;
    for (int j = 0; j < nv; ++j) {  // never re-enter artificials
      double cj = 0;
      for (int i = 0; i < rows; ++i)
        if (basis[i] >= nv) cj -= T(i, j);
      if (cj < -1e-11) {
        enter = j;
        break;  // Bland: smallest index
      }
    }
    if (enter < 0) break;

    int leave = -1;
    double best = 0;
    for (int i = 0; i < rows; ++i) {
      if (T(i, enter) > 1e-11) {
        double ratio = T(i, cols) / T(i, enter);
        if (leave < 0 || ratio < best - 1e-14 ||
            (std::abs(ratio - best) <= 1e-14 && basis[i] < basis[leave])) {
          leave = i;
          best = ratio;
        }
      }
    }
    if (leave < 0) break;  // unbounded (cannot happen here)

    T.row(leave) /= T(leave, enter);
    for (int i = 0; i < rows; ++i) {
      if (i == leave) continue;
      double f = T(i, enter);
      if (f != 0.0) T.row(i) -= f * T.row(leave);
    }
    basis[leave] = enter;
  }
  return objective() <= tol;
}

}  // namespace

bool in_convex_hull(const std::vector<Vec>& vertices, const Vec& x,
                    double tol) {
  if (vertices.empty()) return false;
  const double scale = 1.0 + x.cwiseAbs().maxCoeff();
  // Quick accept: exact vertex match.
  for (const auto& v : vertices) {
    if (v.size() != x.size())
      throw std::invalid_argument("in_convex_hull: dimension mismatch");
    if ((v - x).cwiseAbs().maxCoeff() <= tol * scale) return true;
  }
  return simplex_feasible(vertices, x, tol * scale * 10.0);
}

bool DelaySystem::omega_contains(const Vec& u, double tol) const {
  return in_convex_hull(omega_vertices, u, tol);
}

DelaySystem DelaySystem::create(int n, int m, std::vector<double> delays,
                                std::vector<Mat> A, std::vector<Mat> B,
                                std::vector<Vec> omega_vertices, int n_seg) {
  DelaySystem sys;
  if (n < 1 || m < 1) throw std::invalid_argument("create: n, m must be >= 1");
  if (delays.empty())
    throw std::invalid_argument("create: at least one positive delay (p >= 1)");
  sys.n = n;
  sys.m = m;
  sys.p = static_cast<int>(delays.size());
  if (static_cast<int>(A.size()) != sys.p + 1 ||
      static_cast<int>(B.size()) != sys.p + 1)
    throw std::invalid_argument("create: need p+1 matrices A and B");
  double prev = 0.0;
  for (double hi : delays) {
    if (!(hi > prev))
      throw std::invalid_argument(
          "create: delays must be strictly increasing and positive");
    prev = hi;
  }
  for (const Mat& a : A)
    if (a.rows() != n || a.cols() != n)
      throw std::invalid_argument("create: A_i must be n x n");
  for (const Mat& b : B)
    if (b.rows() != n || b.cols() != m)
      throw std::invalid_argument("create: B_i must be n x m");
  if (omega_vertices.empty())
    throw std::invalid_argument("create: omega_vertices must be nonempty");
  for (const Vec& v : omega_vertices)
    if (v.size() != m)
      throw std::invalid_argument("create: omega vertices must lie in R^m");
  if (n_seg < 2) throw std::invalid_argument("create: n_seg must be >= 2");

  sys.delays = std::move(delays);
  sys.A = std::move(A);
  sys.B = std::move(B);
  sys.omega_vertices = std::move(omega_vertices);
  sys.n_seg = n_seg;

  // Grid alignment: each h_i must sit on the segment grid.
  const double h = sys.horizon();
  const double dg = sys.seg_step();
  for (double hi : sys.delays) {
    double k = hi / dg;
    if (std::abs(k - std::round(k)) * dg > 1e-9 * h) {
      std::ostringstream os;
      os << "create: delay " << hi << " is not representable on the segment "
         << "grid h/n_seg = " << dg;
      throw std::invalid_argument(os.str());
    }
  }

  sys.zero_in_omega = in_convex_hull(sys.omega_vertices, Vec::Zero(m));
  return sys;
}

bool ValidationReport::all_pass() const {
  for (const auto& f : findings)
    if (!f.pass) return false;
  return true;
}

const Finding* ValidationReport::find(const std::string& check) const {
  for (const auto& f : findings)
    if (f.check == check) return &f;
  return nullptr;
}

ValidationReport validate_system(const DelaySystem& sys) {
  ValidationReport rep;
  {
    bool mono = true;
    double prev = 0.0;
    for (double hi : sys.delays) {
      if (!(hi > prev)) mono = false;
      prev = hi;
    }
    rep.findings.push_back({"delays_strictly_increasing", mono, ""});
  }
  rep.findings.push_back(
      {"omega_nonempty", !sys.omega_vertices.empty(), ""});
  {
    const Mat& Ap = sys.A.back();
    double det = Ap.determinant();
    double scale = std::pow(Ap.norm() + 1e-300, sys.n);
    bool inj = std::abs(det) > 1e-10 * scale;
    std::ostringstream os;
    os << "det A_p = " << det;
    rep.findings.push_back({"injectivity_det_Ap", inj, os.str()});
  }
  rep.findings.push_back({"zero_in_omega", sys.zero_in_omega, ""});
  return rep;
}

// ---- M2State ----------------------------------------------------------

M2State M2State::zero(int n, int n_seg, double h) {
  M2State y;
  y.head = Vec::Zero(n);
  y.segment = Mat::Zero(n, n_seg + 1);
  y.h = h;
  return y;
}

M2State M2State::constant(const Vec& v, int n_seg, double h) {
  M2State y;
  y.head = v;
  y.segment = v.replicate(1, n_seg + 1);
  y.h = h;
  return y;
}

bool M2State::same_grid(const M2State& o) const {
  return head.size() == o.head.size() && segment.cols() == o.segment.cols() &&
         std::abs(h - o.h) <= 1e-12 * (1.0 + std::abs(h));
}

double M2State::norm() const {
  const int N = n_seg();
  const double dg = h / N;
  double seg2 = 0.5 * (segment.col(0).squaredNorm() +
                       segment.col(N).squaredNorm());
  for (int k = 1; k < N; ++k) seg2 += segment.col(k).squaredNorm();
  return std::sqrt(head.squaredNorm() + dg * seg2);
}

Vec M2State::segment_at(double theta) const {
  const int N = n_seg();
  const double dg = h / N;
  double pos = (theta + h) / dg;
  if (pos <= 0) return segment.col(0);
  if (pos >= N) return segment.col(N);
  int k = static_cast<int>(std::floor(pos));
  double w = pos - k;
  return (1.0 - w) * segment.col(k) + w * segment.col(k + 1);
}

M2State& M2State::operator+=(const M2State& o) {
  head += o.head;
  segment += o.segment;
  seams.clear();
  return *this;
}
M2State& M2State::operator-=(const M2State& o) {
  head -= o.head;
  segment -= o.segment;
  seams.clear();
  return *this;
}
M2State& M2State::operator*=(double a) {
  head *= a;
  segment *= a;
  for (auto& s : seams) s.second *= a;
  return *this;
}
M2State operator+(M2State a, const M2State& b) { return a += b; }
M2State operator-(M2State a, const M2State& b) { return a -= b; }
M2State operator*(double a, M2State x) { return x *= a; }

double m2_inner(const M2State& a, const M2State& b) {
  if (!a.same_grid(b))
    throw std::invalid_argument("m2_inner: grid mismatch");
  const int N = a.n_seg();
  const double dg = a.h / N;
  double s = 0.5 * (a.segment.col(0).dot(b.segment.col(0)) +
                    a.segment.col(N).dot(b.segment.col(N)));
  for (int k = 1; k < N; ++k) s += a.segment.col(k).dot(b.segment.col(k));
  return a.head.dot(b.head) + dg * s;
}

double m2_distance(const M2State& a, const M2State& b) {
  if (!a.same_grid(b))
    throw std::invalid_argument("m2_distance: grid mismatch");
  M2State d = a;
  d -= b;
  return d.norm();
}

Vec m2_flatten(const M2State& y) {
  const int n = y.n();
  const int cols = static_cast<int>(y.segment.cols());
  Vec v(n + n * cols);
  v.head(n) = y.head;
  for (int k = 0; k < cols; ++k) v.segment(n + k * n, n) = y.segment.col(k);
  return v;
}

M2State m2_unflatten(const Vec& v, int n, int n_seg, double h) {
  M2State y = M2State::zero(n, n_seg, h);
  y.head = v.head(n);
  for (int k = 0; k <= n_seg; ++k)
    y.segment.col(k) = v.segment(n + k * n, n);
  return y;
}

Vec m2_flat_weights(int n, int n_seg, double h) {
  const double dg = h / n_seg;
  Vec w(n + n * (n_seg + 1));
  w.head(n).setOnes();
  for (int k = 0; k <= n_seg; ++k) {
    double wk = (k == 0 || k == n_seg) ? 0.5 * dg : dg;
    w.segment(n + k * n, n).setConstant(wk);
  }
  return w;
}

// ---- ControlSignal -----------------------------------------------------

ControlSignal ControlSignal::zero(int m) {
  ControlSignal u;
  u.m = m;
  u.t0 = 0;
  u.dt = 1;
  return u;
}

ControlSignal ControlSignal::constant(const Vec& v, double t0, double t1,
                                      double dt) {
  ControlSignal u;
  u.m = static_cast<int>(v.size());
  u.t0 = t0;
  u.dt = dt;
  int steps = static_cast<int>(std::llround((t1 - t0) / dt));
  if (steps < 1 || std::abs(t0 + steps * dt - t1) > 1e-9 * (1 + std::abs(t1)))
    throw std::invalid_argument("ControlSignal::constant: window not a "
                                "multiple of dt");
  u.values.assign(steps, v);
  return u;
}

ControlSignal ControlSignal::steps(std::vector<Vec> vals, double t0,
                                   double dt) {
  if (vals.empty())
    throw std::invalid_argument("ControlSignal::steps: empty value list");
  ControlSignal u;
  u.m = static_cast<int>(vals.front().size());
  u.t0 = t0;
  u.dt = dt;
  u.values = std::move(vals);
  return u;
}

Vec ControlSignal::eval(double t) const {
  if (values.empty()) return Vec::Zero(m);
  if (t < t0) return Vec::Zero(m);
  double pos = (t - t0) / dt;
  auto idx = static_cast<long long>(std::floor(pos + 1e-12));
  if (idx >= static_cast<long long>(values.size())) return values.back();
  if (idx < 0) return Vec::Zero(m);
  return values[static_cast<size_t>(idx)];
}

Vec ControlSignal::eval_left(double t) const {
  if (values.empty()) return Vec::Zero(m);
  if (t <= t0) return Vec::Zero(m);
  double pos = (t - t0) / dt;
  // Left limit: an exact breakpoint belongs to the previous cell.
  auto idx = static_cast<long long>(std::ceil(pos - 1e-12)) - 1;
  if (idx < 0) return Vec::Zero(m);
  if (idx >= static_cast<long long>(values.size())) return values.back();
  return values[static_cast<size_t>(idx)];
}

ControlSignal ControlSignal::shifted(double s) const {
  ControlSignal u = *this;
  u.t0 -= s;
  return u;
}

ControlSignal ControlSignal::scaled(double a) const {
  ControlSignal u = *this;
  for (auto& v : u.values) v *= a;
  return u;
}

Vec ControlSignal::integral(double a, double b) const {
  if (b < a) return -integral(b, a);
  Vec acc = Vec::Zero(m);
  if (values.empty()) return acc;
  const double te = t_end();
  // Window part.
  for (size_t i = 0; i < values.size(); ++i) {
    double lo = std::max(a, t0 + dt * static_cast<double>(i));
    double hi = std::min(b, t0 + dt * static_cast<double>(i + 1));
    if (hi > lo) acc += (hi - lo) * values[i];
  }
  // Hold-last tail.
  double lo = std::max(a, te);
  if (b > lo) acc += (b - lo) * values.back();
  return acc;
}

bool ControlSignal::admissible(const DelaySystem& sys, double tol) const {
  if (m != sys.m) return false;
  for (const auto& v : values)
    if (!sys.omega_contains(v, tol)) return false;
  return true;
}

ControlSignal splice_controls(const ControlSignal& past, double cut,
                              const ControlSignal& future) {
  if (past.m != future.m)
    throw std::invalid_argument("splice_controls: dimension mismatch");
  const double dt = past.values.empty() ? future.dt : past.dt;
  if (!past.values.empty() && !future.values.empty() &&
      std::abs(past.dt - future.dt) > 1e-12)
    throw std::invalid_argument("splice_controls: steps must match");

  if (!past.values.empty()) {
    double k = (cut - past.t0) / dt;
    if (std::abs(k - std::round(k)) > 1e-9)
      throw std::invalid_argument("splice_controls: cut misaligned with past");
  }
  if (!future.values.empty()) {
    double k = future.t0 / dt;
    if (std::abs(k - std::round(k)) > 1e-9)
      throw std::invalid_argument("splice_controls: future grid misaligned");
  }

  double w0 = past.values.empty() ? cut : std::min(past.t0, cut);
  double w1 = future.values.empty() ? cut : cut + std::max(future.t_end(), 0.0);
  if (w1 <= w0) w1 = w0 + dt;

  long long steps = std::llround((w1 - w0) / dt);
  ControlSignal w;
  w.m = past.m;
  w.t0 = w0;
  w.dt = dt;
  w.values.reserve(static_cast<size_t>(steps));
  for (long long k = 0; k < steps; ++k) {
    double tk = w0 + (static_cast<double>(k) + 0.5) * dt;  // cell midpoint
    w.values.push_back(tk <= cut ? past.eval(tk) : future.eval(tk - cut));
  }
  return w;
}

// ---- metric on U -------------------------------------------------------

double MetricBasis::support_radius(int k) const {
  int j = (k - 1) / m;
  return std::pow(2.0, j);
}

int MetricBasis::coord(int k) const { return (k - 1) % m; }

double metric_u(const ControlSignal& u, const ControlSignal& v,
                const MetricBasis& basis) {
  if (u.m != v.m)
    throw std::invalid_argument("metric_u: control dimensions differ");
  double total = 0;
  double pow2 = 1.0;
  for (int k = 1; k <= basis.K_terms; ++k) {
    pow2 *= 0.5;
    double r = basis.support_radius(k);
    int c = basis.coord(k);
    double I = u.integral(-r, r)(c) - v.integral(-r, r)(c);
    double a = std::abs(I);
    total += pow2 * a / (1.0 + a);
  }
  return total;
}

}  // namespace delaylab

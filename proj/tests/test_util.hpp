// Shared fixtures for the test suites: benchmark systems and random
// instance generators.
#ifndef DELAYLAB_TESTS_TEST_UTIL_HPP_
#define DELAYLAB_TESTS_TEST_UTIL_HPP_

#include "delaylab/system.hpp"

#include <random>
#include <vector>

namespace testutil {

using namespace delaylab;

inline Mat mat1(double a) {
  Mat m(1, 1);
  m(0, 0) = a;
  return m;
}

inline Vec vec1(double a) {
  Vec v(1);
  v(0) = a;
  return v;
}

// xdot = a0 x(t) + a1 x(t-1) + b0 u(t), Omega = [-1, 1].
inline DelaySystem scalar_system(double a0, double a1, double b0 = 1.0,
                                 int n_seg = 256) {
  return DelaySystem::create(1, 1, {1.0}, {mat1(a0), mat1(a1)},
                             {mat1(b0), mat1(0.0)},
                             {vec1(-1.0), vec1(1.0)}, n_seg);
}

// The stable benchmark: xdot = -x(t) - 0.5 x(t-1) + u.
inline DelaySystem stable_benchmark(int n_seg = 256) {
  return scalar_system(-1.0, -0.5, 1.0, n_seg);
}

// xdot = -x(t-1); rightmost roots -0.3181... +- 1.3372...i.
inline DelaySystem pure_delay_benchmark(int n_seg = 256) {
  return scalar_system(0.0, -1.0, 1.0, n_seg);
}

// Hayes equation at the Hopf point: xdot = -(pi/2) x(t-1).
inline DelaySystem hayes_benchmark(int n_seg = 256) {
  return scalar_system(0.0, -1.5707963267948966, 1.0, n_seg);
}

// Random dense system with n <= 3, p <= 2, entries scaled so that
// ||A_i||, ||B_i|| <= bound; delays dyadic in (0, 1]; Omega = cube [-1,1]^m.
inline DelaySystem random_system(std::mt19937_64& rng, int max_n = 3,
                                 int max_p = 2, double bound = 2.0,
                                 int n_seg = 64) {
  std::uniform_int_distribution<int> nd(1, max_n), pd(1, max_p), md(1, 2);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  int n = nd(rng), p = pd(rng), m = md(rng);
  // delays on the 1/8 grid, strictly increasing, last one = 1
  std::vector<double> delays;
  if (p == 1) {
    delays = {1.0};
  } else {
    std::uniform_int_distribution<int> kd(1, 7);
    delays = {kd(rng) / 8.0, 1.0};
  }
  auto rand_mat = [&](int r, int c) {
    Mat M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = coef(rng);
    double nm = M.norm();
    if (nm > bound) M *= bound / nm;
    return M;
  };
  std::vector<Mat> A, B;
  for (int i = 0; i <= p; ++i) {
    A.push_back(rand_mat(n, n));
    B.push_back(rand_mat(n, m));
  }
  // Keep A_p comfortably invertible.
  A.back() += 0.3 * Mat::Identity(n, n);
  std::vector<Vec> omega;
  for (int corner = 0; corner < (1 << m); ++corner) {
    Vec v(m);
    for (int j = 0; j < m; ++j) v(j) = (corner >> j & 1) ? 1.0 : -1.0;
    omega.push_back(v);
  }
  return DelaySystem::create(n, m, delays, A, B, omega, n_seg);
}

inline M2State random_state(std::mt19937_64& rng, int n, int n_seg, double h,
                            double amp = 1.0) {
  std::uniform_real_distribution<double> d(-amp, amp);
  M2State y = M2State::zero(n, n_seg, h);
  for (int i = 0; i < n; ++i) y.head(i) = d(rng);
  for (int k = 0; k <= n_seg; ++k)
    for (int i = 0; i < n; ++i) y.segment(i, k) = d(rng);
  return y;
}

// Bang-bang control on [t0, t1]: vertex-valued, switching every `dt`.
inline ControlSignal random_bangbang(std::mt19937_64& rng,
                                     const DelaySystem& sys, double t0,
                                     double t1, double dt) {
  std::uniform_int_distribution<size_t> pick(0, sys.omega_vertices.size() - 1);
  std::vector<Vec> vals;
  int steps = static_cast<int>((t1 - t0) / dt + 0.5);
  for (int i = 0; i < steps; ++i)
    vals.push_back(sys.omega_vertices[pick(rng)]);
  return ControlSignal::steps(vals, t0, dt);
}

}  // namespace testutil

#endif  // DELAYLAB_TESTS_TEST_UTIL_HPP_

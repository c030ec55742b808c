#include "delaylab/integrator.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace delaylab;
using namespace testutil;

namespace {

double rel_linf(const Trajectory& a, const Trajectory& b) {
  double num = 0, den = 1.0;
  int hist = a.hist_len();
  for (size_t k = hist; k < a.x.size(); ++k) {
    num = std::max(num, (a.x[k] - b.x[k]).cwiseAbs().maxCoeff());
    den = std::max(den, a.x[k].cwiseAbs().maxCoeff());
  }
  return num / den;
}

}  // namespace

TEST_CASE("pure integrator: xdot = u with u = 1 gives x(t) = t") {
  auto sys = DelaySystem::create(1, 1, {1.0}, {mat1(0), mat1(0)},
                                 {mat1(1), mat1(0)}, {vec1(-1), vec1(1)}, 64);
  auto u = ControlSignal::constant(vec1(1.0), 0.0, 4.0, 0.25);
  auto y0 = M2State::zero(1, 64, 1.0);
  auto tr = solve(sys, y0, u, 4.0, 1.0 / 64);
  CHECK(tr.eval(1.0)(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tr.eval(3.5)(0) == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("zero input and zero state stay at zero") {
  auto sys = stable_benchmark(64);
  auto y0 = M2State::zero(1, 64, 1.0);
  auto tr = solve(sys, y0, ControlSignal::zero(1), 3.0, 1.0 / 64);
  for (size_t k = 0; k < tr.x.size(); ++k) CHECK(tr.x[k].norm() == 0.0);
}

TEST_CASE("method-of-steps oracle: xdot = -x(t-1), f = 1") {
  // Symbolic: x = 1-t on [0,1]; x = 1-t+(t-1)^2/2 on [1,2].
  auto sys = pure_delay_benchmark(128);
  auto y0 = M2State::constant(vec1(1.0), 128, 1.0);
  auto tr = solve(sys, y0, ControlSignal::zero(1), 2.0, 1.0 / 128);
  CHECK(std::abs(tr.eval(1.0)(0) - 0.0) < 1e-6);
  CHECK(std::abs(tr.eval(2.0)(0) - (-0.5)) < 1e-6);
  CHECK(std::abs(tr.eval(0.5)(0) - 0.5) < 1e-9);
  CHECK(std::abs(tr.eval(1.5)(0) - (-0.375)) < 1e-8);
}

TEST_CASE("fundamental matrix basics and the symbolic value X(1.5)") {
  auto sys = pure_delay_benchmark(128);
  CHECK(fundamental_matrix(sys, 0.0)(0, 0) == 1.0);
  CHECK(fundamental_matrix(sys, -0.5)(0, 0) == 0.0);
  // X = 1 on [0,1], X = 1-(t-1) on [1,2].
  CHECK(std::abs(fundamental_matrix(sys, 1.5, 1.0 / 128)(0, 0) - 0.5) < 1e-6);
  CHECK(std::abs(fundamental_matrix(sys, 1.0, 1.0 / 128)(0, 0) - 1.0) < 1e-9);
}

TEST_CASE("solve_vdp equals solve for u = 0 and for y0 = 0 separately") {
  auto sys = stable_benchmark(64);
  std::mt19937_64 rng(11);
  auto y0 = random_state(rng, 1, 64, 1.0);

  auto a = solve(sys, y0, ControlSignal::zero(1), 3.0, 1.0 / 64);
  auto b = solve_vdp(sys, y0, ControlSignal::zero(1), 3.0, 1.0 / 64);
  CHECK(rel_linf(a, b) == doctest::Approx(0.0));

  auto u = random_bangbang(rng, sys, 0.0, 3.0, 0.25);
  auto z = M2State::zero(1, 64, 1.0);
  auto forced_direct = solve(sys, z, u, 3.0, 1.0 / 256);
  auto forced_vdp = solve_vdp(sys, z, u, 3.0, 1.0 / 256);
  CHECK(rel_linf(forced_direct, forced_vdp) < 1e-6);
}

TEST_CASE("solve vs solve_vdp on random scalar systems") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 5; ++rep) {
    auto sys = random_system(rng, 1, 2, 1.5, 64);
    auto y0 = random_state(rng, sys.n, sys.n_seg, sys.horizon());
    auto u = random_bangbang(rng, sys, 0.0, 5.0, 0.25);
    double step = aligned_step(sys, u, sys.horizon() / 512);
    auto a = solve(sys, y0, u, 5.0, step);
    auto b = solve_vdp(sys, y0, u, 5.0, step);
    CHECK(rel_linf(a, b) < 1e-6);
  }
}

TEST_CASE("semiflow identity at t = 0 and the cocycle property") {
  auto sys = stable_benchmark(64);
  std::mt19937_64 rng(5);
  auto y0 = random_state(rng, 1, 64, 1.0);
  auto u = random_bangbang(rng, sys, 0.0, 4.0, 0.25);

  auto [u0, s0] = semiflow_step(sys, u, y0, 0.0);
  CHECK(m2_distance(s0, y0) == 0.0);
  CHECK(u0.t0 == u.t0);

  // Phi_{0.5} after Phi_{1.0} vs Phi_{1.5}.
  double step = 1.0 / 64;
  auto [u1, s1] = semiflow_step(sys, u, y0, 1.0, step);
  auto [u2, s2] = semiflow_step(sys, u1, s1, 0.5, step);
  auto [u3, s3] = semiflow_step(sys, u, y0, 1.5, step);
  CHECK(m2_distance(s2, s3) < 1e-8);
  CHECK(u2.t0 == doctest::Approx(u3.t0));

  // Equilibrium: zero state, zero control.
  auto z = M2State::zero(1, 64, 1.0);
  auto [uz, sz] = semiflow_step(sys, ControlSignal::zero(1), z, 2.0, step);
  CHECK(sz.norm() == 0.0);
}

TEST_CASE("cocycle over random (t, s) pairs") {
  std::mt19937_64 rng(99);
  auto sys = stable_benchmark(64);
  double step = 1.0 / 64;
  for (int rep = 0; rep < 50; ++rep) {
    auto y0 = random_state(rng, 1, 64, 1.0);
    auto u = random_bangbang(rng, sys, 0.0, 6.0, 0.25);
    std::uniform_int_distribution<int> pick(1, 8);
    double t = pick(rng) * 0.25, s = pick(rng) * 0.25;
    auto [us, ys] = semiflow_step(sys, u, y0, s, step);
    auto [ut, yt] = semiflow_step(sys, us, ys, t, step);
    auto [uts, yts] = semiflow_step(sys, u, y0, t + s, step);
    CHECK(m2_distance(yt, yts) < 1e-6 * (1.0 + y0.norm()));
  }
}

TEST_CASE("affine split: recombination and degenerate parts") {
  auto sys = stable_benchmark(64);
  std::mt19937_64 rng(17);
  double step = 1.0 / 64;

  auto z = M2State::zero(1, 64, 1.0);
  auto u = random_bangbang(rng, sys, 0.0, 3.0, 0.25);
  auto [homz, forcedz] = affine_split(sys, z, u, 2.0, step);
  CHECK(homz.norm() == 0.0);

  auto y0 = random_state(rng, 1, 64, 1.0);
  auto [homy, forcedy] = affine_split(sys, y0, ControlSignal::zero(1), 2.0,
                                      step);
  CHECK(forcedy.norm() == 0.0);

  for (int rep = 0; rep < 10; ++rep) {
    auto y = random_state(rng, 1, 64, 1.0);
    auto v = random_bangbang(rng, sys, 0.0, 3.0, 0.25);
    auto [hom, forced] = affine_split(sys, y, v, 2.0, step);
    auto full = solve(sys, y, v, 2.0, step).state_at(2.0);
    double rel = m2_distance(hom + forced, full) / (1.0 + full.norm());
    CHECK(rel < 1e-9);
  }
}

TEST_CASE("solution maps are affine in the initial state") {
  auto sys = stable_benchmark(64);
  std::mt19937_64 rng(23);
  double step = 1.0 / 64;
  for (int rep = 0; rep < 10; ++rep) {
    auto a = random_state(rng, 1, 64, 1.0);
    auto b = random_state(rng, 1, 64, 1.0);
    auto u = random_bangbang(rng, sys, 0.0, 3.0, 0.25);
    double lam = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    M2State mix = lam * a + (1.0 - lam) * b;
    auto pa = solve(sys, a, u, 2.0, step).state_at(2.0);
    auto pb = solve(sys, b, u, 2.0, step).state_at(2.0);
    auto pm = solve(sys, mix, u, 2.0, step).state_at(2.0);
    M2State combo = lam * pa + (1.0 - lam) * pb;
    CHECK(m2_distance(pm, combo) / (1.0 + pm.norm()) < 1e-9);
  }
}

TEST_CASE("boundedness on compacta scales with the initial norm") {
  auto sys = stable_benchmark(64);
  std::mt19937_64 rng(31);
  auto y0 = random_state(rng, 1, 64, 1.0);
  double step = 1.0 / 64;
  auto sup2 = [&](const M2State& y) {
    auto tr = solve(sys, y, ControlSignal::zero(1), 4.0, step);
    double s = 0;
    for (size_t k = tr.hist_len(); k < tr.x.size(); ++k)
      s = std::max(s, tr.x[k].squaredNorm());
    return s;
  };
  double s1 = sup2(y0), s2 = sup2(2.0 * y0), s4 = sup2(4.0 * y0);
  CHECK(std::isfinite(s1));
  // Homogeneous scaling: sup |x|^2 scales exactly quadratically.
  CHECK(s2 == doctest::Approx(4.0 * s1).epsilon(1e-9));
  CHECK(s4 == doctest::Approx(16.0 * s1).epsilon(1e-9));
  // Fitted constant in sup |x|^2 <= C (||y0||^2 + 1) stays finite.
  double C = s4 / (16.0 * y0.norm() * y0.norm() + 1.0);
  CHECK(std::isfinite(C));
}

TEST_CASE("step halving improves the symbolic oracle error by >= 3x") {
  auto sys = pure_delay_benchmark(32);
  auto y0 = M2State::constant(vec1(1.0), 32, 1.0);
  auto err = [&](double step) {
    auto tr = solve(sys, y0, ControlSignal::zero(1), 2.0, step);
    // exact x(2) = -0.5
    return std::abs(tr.eval(2.0)(0) + 0.5);
  };
  double e1 = err(1.0 / 32), e2 = err(1.0 / 64);
  // Guard the degenerate case of hitting roundoff exactly.
  if (e2 > 1e-13) CHECK(e1 / e2 >= 3.0);
}

TEST_CASE("reconstruct_initial roundtrip") {
  // Scalar xdot = -x(t) - 0.5 x(t-1): p = 1, window tau <= h.
  auto sys = stable_benchmark(128);
  std::mt19937_64 rng(41);

  SUBCASE("zero state recovers zero") {
    auto z = M2State::zero(1, 128, 1.0);
    auto tr = solve(sys, z, ControlSignal::zero(1), 1.0, 1.0 / 128);
    auto rec = reconstruct_initial(sys, tr, 0.5);
    CHECK(rec.norm() == doctest::Approx(0.0));
  }

  SUBCASE("random f recovered within 1e-4 in L2 on the recovered window") {
    // Smooth-ish random initial segment.
    auto y0 = M2State::zero(1, 128, 1.0);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    double a = d(rng), b = d(rng), c = d(rng);
    for (int k = 0; k <= 128; ++k) {
      double th = -1.0 + k / 128.0;
      y0.segment(0, k) = a + b * std::sin(3 * th) + c * th * th;
    }
    y0.head(0) = d(rng);
    double tau = 0.5;
    auto tr = solve(sys, y0, ControlSignal::zero(1), tau, 1.0 / 256);
    auto rec = reconstruct_initial(sys, tr, tau);
    CHECK(rec.head(0) == doctest::Approx(y0.head(0)));
    // L2 error over the reconstructed part [-1, tau-1].
    double err2 = 0.0, dg = 1.0 / 128;
    int kmax = static_cast<int>(tau / dg);
    for (int k = 1; k < kmax; ++k)
      err2 += dg * std::pow(rec.segment(0, k) - y0.segment(0, k), 2);
    CHECK(std::sqrt(err2) < 1e-4);
  }

  SUBCASE("singular A_p is rejected") {
    auto bad = scalar_system(-1.0, 0.0, 1.0, 128);
    auto z = M2State::zero(1, 128, 1.0);
    auto tr = solve(bad, z, ControlSignal::zero(1), 1.0, 1.0 / 128);
    CHECK_THROWS_AS(reconstruct_initial(bad, tr, 0.5), std::invalid_argument);
  }
}

TEST_CASE("misaligned steps and blow-ups are reported") {
  auto sys = stable_benchmark(64);
  auto y0 = M2State::zero(1, 64, 1.0);
  CHECK_THROWS_AS(solve(sys, y0, ControlSignal::zero(1), 1.0, 0.3),
                  std::invalid_argument);

  // Strongly unstable system blows up past inf within 300 time units.
  auto boom = scalar_system(8.0, 0.5, 1.0, 64);
  auto y1 = M2State::constant(vec1(1.0), 64, 1.0);
  CHECK_THROWS_AS(solve(boom, y1, ControlSignal::zero(1), 300.0, 1.0 / 64),
                  std::runtime_error);
}

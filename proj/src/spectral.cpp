#include "delaylab/spectral.hpp"

#include "delaylab/integrator.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace delaylab {

namespace {

MatC char_matrix(const DelaySystem& sys, Complex s) {
  const int n = sys.n;
  MatC M = s * MatC::Identity(n, n) - sys.A[0].cast<Complex>();
  for (int i = 0; i < sys.p; ++i)
    M -= std::exp(-sys.delays[i] * s) * sys.A[i + 1].cast<Complex>();
  return M;
}

MatC char_matrix_derivative(const DelaySystem& sys, Complex s) {
  const int n = sys.n;
  MatC M = MatC::Identity(n, n);
  for (int i = 0; i < sys.p; ++i)
    M += sys.delays[i] * std::exp(-sys.delays[i] * s) *
         sys.A[i + 1].cast<Complex>();
  return M;
}

// |Delta'(mu)|; exact for n = 1, central difference of the analytic
// determinant otherwise (used only for multiplicity thresholding).
double delta_derivative_abs(const DelaySystem& sys, Complex mu) {
  if (sys.n == 1) return std::abs(char_matrix_derivative(sys, mu)(0, 0));
  double d = 1e-6 * (1.0 + std::abs(mu));
  return std::abs(delta_eval(sys, mu + d) - delta_eval(sys, mu - d)) /
         (2.0 * d);
}

struct ChebGrid {
  Eigen::VectorXd theta;  // nodes on [-h, 0], theta_0 = 0, theta_N = -h
  Mat D;                  // differentiation matrix on the nodes
};

ChebGrid cheb_lobatto(int N, double h) {
  ChebGrid g;
  g.theta.resize(N + 1);
  Eigen::VectorXd xi(N + 1);
  for (int j = 0; j <= N; ++j) {
    xi(j) = std::cos(M_PI * j / N);
    g.theta(j) = 0.5 * h * (xi(j) - 1.0);
  }
  Mat D(N + 1, N + 1);
  auto c = [&](int i) { return (i == 0 || i == N) ? 2.0 : 1.0; };
  for (int i = 0; i <= N; ++i) {
    double row = 0;
    for (int j = 0; j <= N; ++j) {
      if (i == j) continue;
      D(i, j) = (c(i) / c(j)) * (((i + j) % 2) ? -1.0 : 1.0) /
                (xi(i) - xi(j));
      row += D(i, j);
    }
    D(i, i) = -row;  // negative sum trick
  }
  g.D = (2.0 / h) * D;
  return g;
}

// Barycentric interpolation weights at theta_star for Chebyshev-Lobatto.
Eigen::VectorXd cheb_interp_row(const ChebGrid& g, double theta_star) {
  const int N = static_cast<int>(g.theta.size()) - 1;
  Eigen::VectorXd row = Eigen::VectorXd::Zero(N + 1);
  for (int j = 0; j <= N; ++j) {
    if (std::abs(theta_star - g.theta(j)) < 1e-14 * (1.0 + std::abs(theta_star))) {
      row(j) = 1.0;
      return row;
    }
  }
  double denom = 0;
  for (int j = 0; j <= N; ++j) {
    double w = (j % 2 ? -1.0 : 1.0);
    if (j == 0 || j == N) w *= 0.5;
    double term = w / (theta_star - g.theta(j));
    row(j) = term;
    denom += term;
  }
  row /= denom;
  return row;
}

// Exact integrals of e^{-mu theta} times the PL hat decomposition over one
// cell [a, b]: returns weights (w_left, w_right) with
// int_a^b e^{-mu theta} f(theta) d theta = w_left f(a) + w_right f(b)
// for f linear on the cell.
std::pair<Complex, Complex> exp_cell_weights(Complex mu, double a, double b) {
  double d = b - a;
  if (std::abs(mu) * d < 1e-7) {  // series fallback near mu = 0
    return {0.5 * d, 0.5 * d};
  }
  Complex ea = std::exp(-mu * a), eb = std::exp(-mu * b);
  Complex I0 = (ea - eb) / mu;
  Complex I1 = (a * ea - b * eb) / mu + I0 / mu;
  return {(b * I0 - I1) / d, (I1 - a * I0) / d};
}

// Eigenfunctions of a root mu as analytic M2 states (v, e^{mu theta} v).
// Returns the real span: one state per real root direction, Re/Im pairs per
// complex root direction. Phase is canonicalized on the largest component.
std::vector<M2State> real_eigenfunctions(const DelaySystem& sys, Complex mu,
                                         int want_dim,
                                         std::vector<Complex>* mus_out) {
  MatC M = char_matrix(sys, mu);
  Eigen::JacobiSVD<MatC> svd(M, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double smax = sv(0) + 1e-300;
  std::vector<VecC> nullvecs;
  for (int i = sys.n - 1; i >= 0; --i) {
    if (sv(i) < 1e-8 * smax + 1e-12)
      nullvecs.push_back(svd.matrixV().col(i));
    if (static_cast<int>(nullvecs.size()) >= want_dim) break;
  }
  if (nullvecs.empty()) nullvecs.push_back(svd.matrixV().col(sys.n - 1));

  const bool is_real = std::abs(mu.imag()) < 1e-9;
  std::vector<M2State> out;
  const int n_seg = sys.n_seg;
  const double h = sys.horizon();
  for (auto& v : nullvecs) {
    // Rotate the largest component to the positive real axis.
    int imax = 0;
    for (int i = 1; i < sys.n; ++i)
      if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
    v *= std::conj(v(imax)) / std::abs(v(imax));

    M2State re = M2State::zero(sys.n, n_seg, h);
    M2State im = M2State::zero(sys.n, n_seg, h);
    for (int i = 0; i < sys.n; ++i) {
      re.head(i) = v(i).real();
      im.head(i) = v(i).imag();
    }
    for (int k = 0; k <= n_seg; ++k) {
      double theta = -h + k * h / n_seg;
      Complex e = std::exp(mu * theta);
      for (int i = 0; i < sys.n; ++i) {
        Complex val = e * v(i);
        re.segment(i, k) = val.real();
        im.segment(i, k) = val.imag();
      }
    }
    out.push_back(re);
    if (mus_out) mus_out->push_back(mu);
    if (!is_real) out.push_back(im);
  }
  return out;
}

}  // namespace

Complex delta_eval(const DelaySystem& sys, Complex s) {
  return char_matrix(sys, s).determinant();
}

Mat generator_collocation_matrix(const DelaySystem& sys, int Nc) {
  const int n = sys.n;
  const double h = sys.horizon();
  ChebGrid g = cheb_lobatto(Nc, h);
  const int dim = n * (Nc + 1);
  Mat M = Mat::Zero(dim, dim);

  // Boundary row at theta_0 = 0: A_0 f(0) + sum_i A_i f(-h_i).
  M.block(0, 0, n, n) = sys.A[0];
  for (int i = 0; i < sys.p; ++i) {
    Eigen::VectorXd row = cheb_interp_row(g, -sys.delays[i]);
    for (int j = 0; j <= Nc; ++j)
      if (row(j) != 0.0) M.block(0, j * n, n, n) += row(j) * sys.A[i + 1];
  }
  // Differentiation rows at theta_1..theta_N.
  for (int r = 1; r <= Nc; ++r)
    for (int j = 0; j <= Nc; ++j)
      M.block(r * n, j * n, n, n) = g.D(r, j) * Mat::Identity(n, n);
  return M;
}

Spectrum compute_spectrum(const DelaySystem& sys, double sigma, int Nc) {
  if (Nc < 8) throw std::invalid_argument("compute_spectrum: N_c must be >= 8");
  Spectrum out;
  out.strip_bound = sigma;
  out.discretization_order = Nc;

  Mat M = generator_collocation_matrix(sys, Nc);
  Eigen::EigenSolver<Mat> eig(M);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("compute_spectrum: eigensolver failed");

  const double margin = std::max(0.5, 0.05 * std::abs(sigma));
  std::vector<Complex> seeds;
  for (int i = 0; i < M.rows(); ++i) {
    Complex lam = eig.eigenvalues()(i);
    if (lam.real() >= sigma - margin && lam.imag() >= -1e-12)
      seeds.push_back(lam);
  }
  std::sort(seeds.begin(), seeds.end(), [](Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() < b.imag();
  });

  // Newton refinement on Delta: s <- s - 1/tr(M(s)^{-1} M'(s)).
  std::vector<Complex> refined;
  for (Complex s0 : seeds) {
    Complex s = s0;
    bool ok = false;
    for (int it = 0; it < 60; ++it) {
      MatC Ms = char_matrix(sys, s);
      double res = std::abs(Ms.determinant());
      double scale = std::pow(1.0 + std::abs(s), sys.n);
      if (res < 1e-13 * scale) {
        ok = true;
        break;
      }
      Eigen::PartialPivLU<MatC> lu(Ms);
      Complex tr = (lu.solve(char_matrix_derivative(sys, s))).trace();
      if (!std::isfinite(tr.real()) || !std::isfinite(tr.imag()) ||
          std::abs(tr) < 1e-300) {
        break;
      }
      Complex ds = 1.0 / tr;
      s -= ds;
      if (!std::isfinite(s.real()) || !std::isfinite(s.imag()) ||
          std::abs(s) > 1e6) {
        break;
      }
      if (std::abs(ds) < 1e-14 * (1.0 + std::abs(s))) {
        ok = std::abs(delta_eval(sys, s)) < 1e-8 * scale;
        break;
      }
    }
    if (ok) {
      refined.push_back(s);
    } else {
      std::ostringstream os;
      os << "newton dropped seed (" << s0.real() << "," << s0.imag() << ")";
      out.diagnostics.push_back(os.str());
    }
  }

  // Cluster within 1e-6 (multiplicity), canonicalize near-real roots.
  std::vector<std::pair<Complex, int>> clusters;
  for (Complex s : refined) {
    if (std::abs(s.imag()) < 1e-9) s = Complex(s.real(), 0.0);
    bool merged = false;
    for (auto& c : clusters) {
      if (std::abs(c.first - s) < 1e-6 * (1.0 + std::abs(s))) {
        c.second += 1;
        merged = true;
        break;
      }
    }
    if (!merged) clusters.emplace_back(s, 1);
  }

  for (auto& [mu, count] : clusters) {
    if (mu.real() < sigma) continue;
    double res = std::abs(delta_eval(sys, mu));
    double bound = 1e-8 * std::pow(1.0 + std::abs(mu), sys.n);
    if (res >= bound) {
      std::ostringstream os;
      os << "root (" << mu.real() << "," << mu.imag()
         << ") dropped: residual " << res;
      out.diagnostics.push_back(os.str());
      continue;
    }
    int mult = count;
    if (mult > 1 &&
        delta_derivative_abs(sys, mu) >
            1e-6 * std::pow(1.0 + std::abs(mu), std::max(0, sys.n - 1)))
      mult = 1;  // spurious seed merge onto a simple root
    Root r{mu, mult, res};
    out.roots.push_back(r);
    if (mu.imag() > 0) {
      Root rc{std::conj(mu), mult, res};
      out.roots.push_back(rc);
    }
  }

  std::sort(out.roots.begin(), out.roots.end(), [](const Root& a,
                                                   const Root& b) {
    if (a.mu.real() != b.mu.real()) return a.mu.real() > b.mu.real();
    return a.mu.imag() < b.mu.imag();
  });
  return out;
}

const char* to_string(Hyperbolicity v) {
  switch (v) {
    case Hyperbolicity::hyperbolic: return "hyperbolic";
    case Hyperbolicity::non_hyperbolic: return "non_hyperbolic";
    default: return "undecided";
  }
}

Hyperbolicity check_hyperbolic(const Spectrum& spec, double axis_margin) {
  if (!(spec.strip_bound < 0))
    throw std::invalid_argument("check_hyperbolic: strip_bound must be < 0");
  for (const auto& r : spec.roots)
    if (std::abs(r.mu.real()) < axis_margin)
      return Hyperbolicity::non_hyperbolic;
  if (spec.strip_bound > -2.0 * axis_margin) return Hyperbolicity::undecided;
  for (const auto& r : spec.roots)
    if (std::abs(r.mu.real()) < 2.0 * axis_margin)
      return Hyperbolicity::undecided;
  return Hyperbolicity::hyperbolic;
}

M2State HyperbolicSplitting::project_plus(const M2State& y) const {
  if (dim_plus == 0) return M2State::zero(n, n_seg, h);
  Vec c = dual_flat * m2_flatten(y);
  return m2_unflatten(basis_flat * c, n, n_seg, h);
}

M2State HyperbolicSplitting::project_minus(const M2State& y) const {
  if (dim_plus == 0) {
    M2State out = y;
    out.seams.clear();
    return out;
  }
  M2State out = y - project_plus(y);
  return out;
}

VecC HyperbolicSplitting::coords_plus(const M2State& y) const {
  Vec c = dual_flat * m2_flatten(y);
  VecC z(mu_plus.size());
  for (size_t j = 0; j < mu_plus.size(); ++j) {
    int col = block_col[j];
    if (block_is_pair[j])
      z(j) = Complex(c(col), -c(col + 1));
    else
      z(j) = Complex(c(col), 0.0);
  }
  return z;
}

M2State HyperbolicSplitting::from_coords(const VecC& zeta) const {
  Vec c = Vec::Zero(basis_flat.cols());
  for (size_t j = 0; j < mu_plus.size(); ++j) {
    int col = block_col[j];
    c(col) = zeta(j).real();
    if (block_is_pair[j]) c(col + 1) = -zeta(j).imag();
  }
  return m2_unflatten(basis_flat * c, n, n_seg, h);
}

HyperbolicSplitting hyperbolic_split(const DelaySystem& sys,
                                     const Spectrum& spec) {
  HyperbolicSplitting sp;
  sp.n = sys.n;
  sp.n_seg = sys.n_seg;
  sp.h = sys.horizon();

  double alpha = std::abs(spec.strip_bound);
  for (const auto& r : spec.roots)
    alpha = std::min(alpha, std::abs(r.mu.real()));
  sp.alpha_hat = alpha;

  // Unstable roots, one entry per conjugate pair (Im >= 0).
  std::vector<Root> unstable;
  for (const auto& r : spec.roots)
    if (r.mu.real() > 0 && r.mu.imag() >= 0) unstable.push_back(r);

  int dim = 0;
  for (const auto& r : unstable)
    dim += r.multiplicity * (r.mu.imag() > 0 ? 2 : 1);
  sp.dim_plus = dim;

  if (dim > 0) {
    // Analytic eigenfunction basis on the segment grid.
    for (const auto& r : unstable) {
      std::vector<Complex> mus;
      auto funcs = real_eigenfunctions(sys, r.mu, r.multiplicity, &mus);
      int col = static_cast<int>(sp.unstable_basis.size());
      for (size_t q = 0; q < mus.size(); ++q) {
        sp.mu_plus.push_back(mus[q]);
        sp.block_is_pair.push_back(r.mu.imag() > 0);
        sp.block_col.push_back(col);
        col += r.mu.imag() > 0 ? 2 : 1;
      }
      for (auto& f : funcs) sp.unstable_basis.push_back(f);
    }
    const int n = sys.n;
    const int flatdim = n + n * (sys.n_seg + 1);
    sp.basis_flat.resize(flatdim, sp.unstable_basis.size());
    for (size_t j = 0; j < sp.unstable_basis.size(); ++j)
      sp.basis_flat.col(j) = m2_flatten(sp.unstable_basis[j]);

    // Residue form of the spectral projection: for a (semi)simple root mu
    // with right null vectors v_q and left null vectors psi_q of M(mu), the
    // modal coefficient of (r, f) is
    //   N^{-1} [psi^T (r + sum_i A_i e^{-mu h_i} int_{-h_i}^0 e^{-mu s} f ds)]
    // with N_{ab} = psi_a^T M'(mu) v_b. The integral is evaluated exactly on
    // the piecewise-linear segment class, so the dual functionals are exact
    // on M2 states and pi+ commutes with the flow to integrator accuracy.
    const double dg = sys.seg_step();
    std::vector<Eigen::RowVectorXcd> raw_rows;
    for (const auto& r : unstable) {
      Complex mu = r.mu;
      MatC M = char_matrix(sys, mu);
      Eigen::JacobiSVD<MatC> svd_r(M, Eigen::ComputeFullV);
      Eigen::JacobiSVD<MatC> svd_l(M.transpose().eval(), Eigen::ComputeFullV);
      const auto& sv = svd_r.singularValues();
      double smax = sv(0) + 1e-300;
      int nullity = 0;
      for (int i = 0; i < n; ++i)
        if (sv(i) < 1e-8 * smax + 1e-12) ++nullity;
      nullity = std::max(nullity, 1);
      if (nullity < r.multiplicity) {
        std::ostringstream os;
        os << "hyperbolic_split: defective root at (" << mu.real() << ","
           << mu.imag() << ") not supported";
        throw std::runtime_error(os.str());
      }
      int take = std::min(r.multiplicity, nullity);
      MatC V(n, take), Psi(n, take);
      for (int q = 0; q < take; ++q) {
        V.col(q) = svd_r.matrixV().col(n - 1 - q);
        Psi.col(q) = svd_l.matrixV().col(n - 1 - q);
      }
      MatC Mp = char_matrix_derivative(sys, mu);
      MatC N = Psi.transpose() * Mp * V;
      MatC Ninv = N.inverse();

      for (int q = 0; q < take; ++q) {
        Eigen::RowVectorXcd psi_eff = Eigen::RowVectorXcd::Zero(n);
        for (int b = 0; b < take; ++b)
          psi_eff += Ninv(q, b) * Psi.col(b).transpose();

        Eigen::RowVectorXcd row = Eigen::RowVectorXcd::Zero(flatdim);
        row.head(n) = psi_eff;  // head contribution
        for (int i = 0; i < sys.p; ++i) {
          Eigen::RowVectorXcd pa =
              psi_eff * (std::exp(-mu * sys.delays[i]) *
                         sys.A[i + 1].cast<Complex>());
          int cells = static_cast<int>(std::llround(sys.delays[i] / dg));
          int k0 = sys.n_seg - cells;
          for (int c = k0; c < sys.n_seg; ++c) {
            double a = -sys.delays[i] + (c - k0) * dg;
            double b = a + dg;
            auto [wl, wr] = exp_cell_weights(mu, a, b);
            row.segment(n + c * n, n) += wl * pa;
            row.segment(n + (c + 1) * n, n) += wr * pa;
          }
        }
        raw_rows.push_back(row);
      }
    }

    // Real raw dual rows: (Re, -Im) per complex pair, Re for real roots;
    // then normalize so dual * basis = I exactly.
    Mat raw(sp.unstable_basis.size(), flatdim);
    {
      int out = 0;
      size_t rr = 0;
      for (const auto& r : unstable) {
        for (int q = 0; q < r.multiplicity; ++q, ++rr) {
          raw.row(out++) = raw_rows[rr].real();
          if (r.mu.imag() > 0) raw.row(out++) = -raw_rows[rr].imag();
        }
      }
    }
    Mat Z = raw * sp.basis_flat;
    sp.dual_flat = Z.partialPivLu().solve(raw);
  }

  // Fitted transient constant for the stable part.
  {
    std::mt19937_64 rng(0x5eed5eedULL);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    double T = std::max(2.0 * sys.horizon(), 3.0 / std::max(sp.alpha_hat, 0.1));
    double step = aligned_step(sys, ControlSignal::zero(sys.m),
                               sys.horizon() / 64);
    double K = 1.0;
    for (int rep = 0; rep < 4; ++rep) {
      M2State y = M2State::zero(sys.n, sys.n_seg, sys.horizon());
      for (int i = 0; i < sys.n; ++i) y.head(i) = d(rng);
      for (int k = 0; k <= sys.n_seg; ++k)
        for (int i = 0; i < sys.n; ++i) y.segment(i, k) = d(rng);
      M2State z = sp.project_minus(y);
      double z0 = z.norm();
      if (z0 < 1e-12) continue;
      double Tsolve = std::ceil(T / step) * step;
      Trajectory tr = solve(sys, z, ControlSignal::zero(sys.m), Tsolve, step);
      for (double t = 0.25 * T; t <= T; t += 0.25 * T) {
        double nt = tr.state_at(std::round(t / step) * step).norm();
        K = std::max(K, nt * std::exp(sp.alpha_hat * t) / z0);
      }
    }
    sp.K_hat = 1.1 * K;
  }
  return sp;
}

std::vector<M2State> SelgradeGrouping::cumulative_basis(size_t i) const {
  std::vector<M2State> out;
  for (size_t l = 0; l < i && l < levels.size(); ++l)
    for (const auto& b : levels[l].basis) out.push_back(b);
  return out;
}

SelgradeGrouping selgrade_grouping(const DelaySystem& sys,
                                   const Spectrum& spec, double tol_group) {
  SelgradeGrouping out;
  out.tol_group = tol_group;
  // One entry per conjugate pair.
  std::vector<Root> reps;
  for (const auto& r : spec.roots)
    if (r.mu.imag() >= 0) reps.push_back(r);
  std::sort(reps.begin(), reps.end(), [](const Root& a, const Root& b) {
    return a.mu.real() > b.mu.real();
  });

  std::vector<std::vector<Root>> clusters;
  for (const auto& r : reps) {
    if (!clusters.empty() &&
        std::abs(clusters.back().back().mu.real() - r.mu.real()) <= tol_group)
      clusters.back().push_back(r);
    else
      clusters.push_back({r});
  }
  for (size_t i = 0; i + 1 < clusters.size(); ++i) {
    double gap = clusters[i].back().mu.real() - clusters[i + 1].front().mu.real();
    if (gap < 2.0 * tol_group)
      throw std::runtime_error(
          "selgrade_grouping: ambiguous grouping, refine tol_group");
  }

  for (const auto& c : clusters) {
    SelgradeLevel lvl;
    double lsum = 0;
    for (const auto& r : c) {
      auto funcs = real_eigenfunctions(sys, r.mu, r.multiplicity, nullptr);
      for (auto& f : funcs) lvl.basis.push_back(f);
      lvl.dim += r.multiplicity * (r.mu.imag() > 0 ? 2 : 1);
      lsum += r.mu.real();
    }
    lvl.lambda = lsum / c.size();
    // Semisimple multiplicities beyond the null space fall back to the
    // computed null directions; defective roots are not expanded.
    out.levels.push_back(std::move(lvl));
  }
  return out;
}

SeparationEstimate check_exponential_separation(const DelaySystem& sys,
                                                const HyperbolicSplitting& sp,
                                                double T, int samples,
                                                std::uint64_t seed) {
  SeparationEstimate est;
  if (samples < 2) samples = 2;

  // Minimum norm of T(t) restricted to V+ via the eigenblock action and the
  // basis Gram matrix; 1 when V+ is trivial.
  Mat G;
  if (sp.dim_plus > 0) {
    const int d = static_cast<int>(sp.unstable_basis.size());
    G.resize(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        G(i, j) = m2_inner(sp.unstable_basis[i], sp.unstable_basis[j]);
  }
  auto min_norm_plus = [&](double t) -> double {
    if (sp.dim_plus == 0) return 1.0;
    const int d = static_cast<int>(sp.unstable_basis.size());
    Mat R = Mat::Zero(d, d);
    for (size_t j = 0; j < sp.mu_plus.size(); ++j) {
      int col = sp.block_col[j];
      Complex e = std::exp(sp.mu_plus[j] * t);
      if (sp.block_is_pair[j]) {
        R(col, col) = e.real();
        R(col, col + 1) = e.imag();
        R(col + 1, col) = -e.imag();
        R(col + 1, col + 1) = e.real();
      } else {
        R(col, col) = e.real();
      }
    }
    Mat Aq = R.transpose() * G * R;
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(Aq, G);
    double lmin = ges.eigenvalues().minCoeff();
    return std::sqrt(std::max(lmin, 0.0));
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  double step = aligned_step(sys, ControlSignal::zero(sys.m),
                             sys.horizon() / 64);
  double Tsolve = std::ceil(T / step) * step;

  const int nt = 8;
  std::vector<double> ratio(nt, 0.0);
  std::vector<double> times(nt);
  for (int q = 0; q < nt; ++q) times[q] = (q + 1) * T / nt;

  for (int rep = 0; rep < samples; ++rep) {
    M2State y = M2State::zero(sys.n, sys.n_seg, sys.horizon());
    for (int i = 0; i < sys.n; ++i) y.head(i) = d(rng);
    for (int k = 0; k <= sys.n_seg; ++k)
      for (int i = 0; i < sys.n; ++i) y.segment(i, k) = d(rng);
    M2State z = sp.project_minus(y);
    double z0 = z.norm();
    if (z0 < 1e-12) continue;  // ratio 0, vacuously fine
    Trajectory tr = solve(sys, z, ControlSignal::zero(sys.m), Tsolve, step);
    for (int q = 0; q < nt; ++q) {
      double t = std::round(times[q] / step) * step;
      double val = tr.state_at(t).norm() / z0;
      ratio[q] = std::max(ratio[q], val);
    }
  }

  // Least squares fit of log(ratio/m) = log K - gamma t over the later
  // samples (early times carry the smoothing transient of rough data).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int q = nt / 3; q < nt; ++q) {
    if (ratio[q] <= 0) continue;
    double v = std::log(ratio[q] / min_norm_plus(times[q]));
    sx += times[q];
    sy += v;
    sxx += times[q] * times[q];
    sxy += times[q] * v;
    ++cnt;
  }
  if (cnt >= 2) {
    double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    double icept = (sy - slope * sx) / cnt;
    est.gamma_hat = -slope;
    est.K_hat = std::exp(icept);
  } else {
    est.gamma_hat = 0;
    est.K_hat = 1;
  }
  est.pass = (sp.dim_plus == 0) || est.gamma_hat > 1e-3;
  return est;
}

}  // namespace delaylab

// Characteristic function Delta(s), eigenvalues via pseudospectral
// collocation of the generator, hyperbolicity certification, spectral
// projections and the Selgrade grouping of the homogeneous semigroup.
#ifndef DELAYLAB_SPECTRAL_HPP_
#define DELAYLAB_SPECTRAL_HPP_

#include "delaylab/system.hpp"

#include <complex>
#include <cstdint>
#include <vector>

namespace delaylab {

using Complex = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;

/// det(s I - sum_i A_i e^{-h_i s}).
Complex delta_eval(const DelaySystem& sys, Complex s);

struct Root {
  Complex mu;
  int multiplicity = 1;
  double residual = 0;  // |Delta(mu)|
};

struct Spectrum {
  std::vector<Root> roots;  // conjugation-closed, sorted by Re desc, Im asc
  double strip_bound = 0;   // sigma: roots with Re >= sigma are claimed found
  int discretization_order = 0;  // collocation degree N_c
  std::vector<std::string> diagnostics;  // dropped Newton candidates etc.
};

/// Collocation matrix of the generator on N_c+1 Chebyshev-Lobatto nodes over
/// [-h, 0]: boundary row A_0 f(0) + sum_i A_i f(-h_i), differentiation rows
/// elsewhere. Size n(N_c+1).
Mat generator_collocation_matrix(const DelaySystem& sys, int Nc);

/// Eigenvalues of the collocation matrix with Re >= sigma - margin are
/// Newton-refined on Delta; converged roots with Re >= sigma are reported
/// with residuals. Requires N_c >= 8.
Spectrum compute_spectrum(const DelaySystem& sys, double sigma, int Nc);

enum class Hyperbolicity { hyperbolic, non_hyperbolic, undecided };
const char* to_string(Hyperbolicity v);

/// hyperbolic iff no computed root has |Re mu| < axis_margin and the strip
/// reaches past the margin band; non_hyperbolic if a root sits inside the
/// band; undecided when a root is within twice the band edge or the strip is
/// too shallow to certify the band. Requires strip_bound < 0.
Hyperbolicity check_hyperbolic(const Spectrum& spec, double axis_margin = 0.05);

/// Hyperbolic splitting M2 = V+ \oplus V- realized on the segment grid.
/// V+ is spanned by eigenfunctions theta -> e^{mu theta} v of the unstable
/// roots; the projector pi+ = B D is assembled from the collocation matrix's
/// Schur spectral projector, with the dual functionals normalized so that
/// D B = I (pi+ is then idempotent to machine precision).
struct HyperbolicSplitting {
  int n = 0, n_seg = 0;
  double h = 0;
  int dim_plus = 0;
  double alpha_hat = 0;  // min distance of computed roots to the axis
  double K_hat = 1;      // fitted transient constant for ||T(t) pi- y||
  std::vector<M2State> unstable_basis;     // real basis of V+
  Mat basis_flat;                          // columns: flattened basis
  Mat dual_flat;                           // rows: dual functionals
  std::vector<Complex> mu_plus;            // unstable roots, one per block
  std::vector<bool> block_is_pair;         // 2x2 real block vs 1x1
  std::vector<int> block_col;              // first basis column of the block

  M2State project_plus(const M2State& y) const;
  M2State project_minus(const M2State& y) const;
  /// Complex coordinates zeta with pi+ y = sum_j Re(zeta_j w_j).
  VecC coords_plus(const M2State& y) const;
  M2State from_coords(const VecC& zeta) const;
};

HyperbolicSplitting hyperbolic_split(const DelaySystem& sys,
                                     const Spectrum& spec);

struct SelgradeLevel {
  double lambda = 0;           // common real part
  int dim = 0;                 // real dimension of V_i
  std::vector<M2State> basis;  // eigenfunction basis of V_i
};

struct SelgradeGrouping {
  std::vector<SelgradeLevel> levels;  // strictly decreasing lambda
  double tol_group = 0;
  /// Basis of V_i^+ = V_1 + ... + V_i.
  std::vector<M2State> cumulative_basis(size_t i) const;
};

/// Clusters roots by real part within tol_group; throws "ambiguous grouping"
/// when two clusters come closer than 2*tol_group.
SelgradeGrouping selgrade_grouping(const DelaySystem& sys,
                                   const Spectrum& spec, double tol_group);

struct SeparationEstimate {
  double K_hat = 0;
  double gamma_hat = 0;
  bool pass = false;
};

/// Samples sup ||T(t)y^-||/||y^-|| against the minimum norm of T(t) on V+
/// over t <= T and fits K e^{-gamma t}; with dim_plus = 0 the minimum norm
/// is replaced by 1 (vacuous pass convention).
SeparationEstimate check_exponential_separation(const DelaySystem& sys,
                                                const HyperbolicSplitting& split,
                                                double T, int samples,
                                                std::uint64_t seed);

}  // namespace delaylab

#endif  // DELAYLAB_SPECTRAL_HPP_

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eigenscope/hilbert.hpp"

namespace eigenscope {

using Point = std::array<double, 2>;  // (q, p) on [0,1)^2
using Lattice = std::array<std::int64_t, 2>;

/// log of the expanding eigenvalue of [[a,b],[c,d]]; throws "not Anosov"
/// when |a + d| <= 2.
double lyapunov(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d);

/// Integer matrix A = [[a,b],[c,d]] with det A = 1 and |tr A| > 2 acting on
/// column vectors (q, p).
class ClassicalCatMap {
 public:
  ClassicalCatMap() : ClassicalCatMap(2, 1, 3, 2) {}
  ClassicalCatMap(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d);

  std::int64_t a() const { return a_; }
  std::int64_t b() const { return b_; }
  std::int64_t c() const { return c_; }
  std::int64_t d() const { return d_; }
  double lambda() const { return lambda_; }
  const Eigen::Vector2d& unstable_dir() const { return unstable_; }
  const Eigen::Vector2d& stable_dir() const { return stable_; }
  /// a·b and c·d both even.
  bool quantizable() const;

  Lattice apply(const Lattice& v) const;
  Lattice apply_inverse(const Lattice& v) const;
  ClassicalCatMap power(int t) const;
  std::string describe() const;

 private:
  std::int64_t a_, b_, c_, d_;
  double lambda_;
  Eigen::Vector2d unstable_, stable_;
};

/// A·ρ mod 1.
Point classical_step(const ClassicalCatMap& map, const Point& rho);

/// Dense propagator U(j', j) = σ N^{-1/2} exp(iπ/(bN) (a j² − 2 j j' + d j'²)).
/// Requires the evenness condition and |b| = 1.
OperatorHandle quantize_cat(const ClassicalCatMap& map, Index n);

/// (T(v)ψ)(j) = e^{iπ v₁v₂/N} e^{2πi v₂ j/N} ψ(j − v₁ mod N).
OperatorHandle weyl_translation(Index n, const Lattice& v);

struct TranslationDefect {
  double defect = 0.0;  // ‖U T(v) − μ T(Av) U‖
  cplx phase = 1.0;     // μ
};

/// Egorov identity for translations with the best unimodular μ; O(N²) per
/// product since T(v) is monomial.
TranslationDefect translation_egorov_defect(const Matrix& u, const ClassicalCatMap& map,
                                            const Lattice& v);

/// Periodized Gaussian centred at (q₀, p₀) with width squeeze/√N.
StateVector coherent_state(Index n, const Point& center, double squeeze = 1.0);

struct StripPartitionSpec {
  int K = 3;
  double eta = 0.02;
};

/// Profiles p_k(x) of the smooth strip partition, validated on construction.
class StripProfile {
 public:
  explicit StripProfile(const StripPartitionSpec& spec);

  int K() const { return spec_.K; }
  double eta() const { return spec_.eta; }
  const StripPartitionSpec& spec() const { return spec_; }
  /// All K values at x, with Σ p_k(x)² = 1.
  std::vector<double> values(double x) const;
  /// x lies in the open support (k/K − η, (k+1)/K + η) mod 1.
  bool in_support(int k, double x) const;

 private:
  double raw(int k, double x) const;
  StripPartitionSpec spec_;
};

/// Diagonal partition (P_k ψ)(j) = p_k(j/N) ψ(j).
QuantumPartition build_strip_partition(Index n, const StripPartitionSpec& spec);

/// One-step coarse Jacobians on a K-letter alphabet.
class JacobianTable {
 public:
  JacobianTable() = default;
  /// Entry e^{−λ} where `realizable(ε₀, ε₁)` holds, else e^{−Λ}.
  static JacobianTable from_transitions(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& realizable,
                                        double lambda, double Lambda_penalty,
                                        double grid_step = 0.0);

  int K() const { return static_cast<int>(j1_.rows()); }
  double lambda() const { return lambda_; }
  double Lambda_penalty() const { return Lambda_; }
  double grid_step() const { return grid_step_; }
  const RealMatrix& j1() const { return j1_; }
  double j1(int e0, int e1) const { return j1_(e0, e1); }
  bool realizable(int e0, int e1) const { return realizable_(e0, e1); }
  double log_j1(int e0, int e1) const { return log_j1_(e0, e1); }

  /// log J_n(ε) = Σ_i log J_1(ε_i, ε_{i+1}) for letters ε_0 … ε_n.
  double log_word(const std::vector<int>& letters) const;
  double word(const std::vector<int>& letters) const;
  /// Number of penalized transitions in the word.
  int penalized_steps(const std::vector<int>& letters) const;

 private:
  RealMatrix j1_, log_j1_;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> realizable_;
  double lambda_ = 0.0;
  double Lambda_ = 0.0;
  double grid_step_ = 0.0;
};

/// Transitions found by sweeping a resolution² grid: ε₀ → ε₁ is realizable when
/// some grid point ρ has q(ρ) in supp p_{ε₀} and q(Aρ) in supp p_{ε₁}.
JacobianTable coarse_jacobian_table(const ClassicalCatMap& map, const StripPartitionSpec& spec,
                                    double Lambda_penalty, int resolution = 1024);

/// G×G grid; entry (g₁, g₂) = |⟨coherent_state(N, (g₁/G, g₂/G)), ψ⟩|².
RealMatrix husimi(const StateVector& psi, int grid);

/// Mass Σ H N / G² of grid cells within `radius` (torus distance) of `center`.
double husimi_disc_mass(const RealMatrix& h, Index n, const Point& center, double radius);

}  // namespace eigenscope

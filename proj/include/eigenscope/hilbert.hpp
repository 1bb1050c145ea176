#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "eigenscope/core.hpp"

namespace eigenscope {

/// Complex amplitude vector of dimension N. Normalization is not enforced by
/// the type; use `StateVector::normalized` to obtain a unit vector.
struct StateVector {
  Vector amps;

  StateVector() = default;
  explicit StateVector(Vector v) : amps(std::move(v)) {}

  /// Rescales `v` to unit norm; throws when `v` is (numerically) zero.
  static StateVector normalized(Vector v);
  static StateVector basis(Index dim, Index j);

  Index dim() const { return amps.size(); }
  double norm() const { return amps.norm(); }
  bool is_normalized(double tol = 1e-12) const {
    return std::abs(amps.norm() - 1.0) <= tol;
  }
};

/// Linear operator on C^N in one of three representations. Payloads are
/// shared and immutable, so handles are cheap to copy.
///
/// A chain {A, B, C} denotes the composition A∘B∘C: C is applied first.
class OperatorHandle {
 public:
  enum class Kind { Dense, Diagonal, Chain };

  OperatorHandle() = default;

  static OperatorHandle dense(Matrix m);
  static OperatorHandle diagonal(Vector d);
  static OperatorHandle identity(Index n);
  static OperatorHandle zero(Index n);
  /// Throws DimensionMismatch naming the first incompatible pair of stages.
  static OperatorHandle chain(std::vector<OperatorHandle> stages);

  Kind kind() const { return kind_; }
  Index rows() const;
  Index cols() const;
  /// Dimension of a square operator; throws for rectangular ones.
  Index dim() const;

  Vector apply(const Vector& x) const;
  Vector apply_adjoint(const Vector& x) const;
  /// Applies the operator to every column of `x`.
  Matrix apply(const Matrix& x) const;
  Matrix apply_adjoint(const Matrix& x) const;

  OperatorHandle adjoint() const;
  OperatorHandle scaled(cplx factor) const;
  Matrix materialize() const;

  /// Dense payload; throws unless kind() == Dense. Ignores the adjoint flag,
  /// see `is_adjoint()`.
  const Matrix& dense_payload() const;
  /// Diagonal entries with conjugation already applied for adjoints.
  Vector diagonal_entries() const;
  const std::vector<OperatorHandle>& stages() const;
  bool is_adjoint() const { return adjoint_; }

 private:
  Kind kind_ = Kind::Dense;
  bool adjoint_ = false;
  cplx scale_ = 1.0;
  std::shared_ptr<const Matrix> dense_;
  std::shared_ptr<const Vector> diag_;
  std::shared_ptr<const std::vector<OperatorHandle>> stages_;
};

struct NormOptions {
  std::uint64_t seed = 0x5eed'c0de'2024ULL;
  double tolerance = 1e-8;  // relative Rayleigh-quotient stagnation
  int max_iterations = 10'000;
  /// Chains at or below this dimension are materialized and decomposed.
  Index materialize_limit = 256;
};

struct PowerIterationResult {
  double value = 0.0;  // estimated largest singular value
  int iterations = 0;
  bool converged = false;
};

/// Largest singular value of a linear map known only through its action.
/// `apply` maps C^cols -> C^rows and `apply_adjoint` the reverse.
PowerIterationResult power_iteration_norm(
    const std::function<Vector(const Vector&)>& apply,
    const std::function<Vector(const Vector&)>& apply_adjoint, Index cols,
    const NormOptions& options = {});

double operator_norm(const OperatorHandle& a, const NormOptions& options = {});
double operator_norm(const Matrix& a);

struct SpectralDecomposition {
  std::vector<cplx> eigenvalues;  // sorted by phase in [0, 2π)
  Matrix eigenvectors;            // column i pairs with eigenvalues[i]

  Index dim() const { return eigenvectors.rows(); }
  StateVector vector(Index i) const {
    return StateVector(eigenvectors.col(i));
  }
  double phase(Index i) const;
};

/// Eigendecomposition of a unitary matrix through its complex Schur form.
/// Clusters of eigenphases closer than `cluster_gap` receive a canonical
/// orthonormal basis: the standard basis vectors are projected onto the
/// cluster's eigenspace and Gram–Schmidt orthonormalized in index order.
SpectralDecomposition eig_unitary(const OperatorHandle& u,
                                  double cluster_gap = 1e-10);

/// ‖U U* − I‖ in operator norm.
double unitarity_defect(const Matrix& u);

/// Family of operators (π_k) intended to satisfy Σ π_k π_k* = I.
class QuantumPartition {
 public:
  QuantumPartition() = default;
  explicit QuantumPartition(std::vector<OperatorHandle> elements);

  std::size_t size() const { return elements_.size(); }
  Index dim() const { return dim_; }
  const OperatorHandle& operator[](std::size_t k) const { return elements_[k]; }
  const std::vector<OperatorHandle>& elements() const { return elements_; }
  bool all_diagonal() const;
  /// Diagonals as a dim × size real matrix; only for real diagonal families.
  RealMatrix diagonal_profiles() const;

  /// Partition into projectors onto the standard basis lines.
  static QuantumPartition basis_projectors(Index dim);

 private:
  std::vector<OperatorHandle> elements_;
  Index dim_ = 0;
};

/// ‖Σ_k P_k P_k* − I‖ (operator norm). Throws on an empty family.
double verify_partition_of_unity(std::span<const OperatorHandle> family);
double verify_partition_of_unity(const QuantumPartition& family);

}  // namespace eigenscope

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eigenscope/hilbert.hpp"

namespace eigenscope {

/// Positive weights (α_k) or (β_j); the maximum is cached.
class WeightFamily {
 public:
  WeightFamily() = default;
  explicit WeightFamily(std::vector<double> weights);
  static WeightFamily uniform(std::size_t count, double value = 1.0);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t k) const { return weights_[k]; }
  double max() const { return max_; }
  const std::vector<double>& values() const { return weights_; }

 private:
  std::vector<double> weights_;
  double max_ = 0.0;
};

using BlockVector = std::vector<Vector>;

/// Block masses ‖π_k* ψ‖².
std::vector<double> block_masses(const Vector& psi, const QuantumPartition& pi);

/// −Σ m log m with blocks below 1e-300 contributing 0.
double entropy_of_masses(std::span<const double> masses);
/// Entropy of the masses minus Σ m_k log α_k².
double pressure_of_masses(std::span<const double> masses, const WeightFamily& alpha);

double shannon_entropy(const StateVector& psi, const QuantumPartition& pi);
double pressure(const StateVector& psi, const QuantumPartition& pi,
                const WeightFamily& alpha);

/// (Σ α_k^{p−2} ‖Ψ_k‖^p)^{1/p}; p = +inf gives max α_k ‖Ψ_k‖.
double weighted_lp_norm(std::span<const Vector> blocks, const WeightFamily& alpha,
                        double p);
double weighted_lp_norm_of_norms(std::span<const double> block_norms,
                                 const WeightFamily& alpha, double p);

struct DualityCheck {
  double sup_value = 0.0;  // |⟨Λ, Ψ*⟩| at the analytic maximizer
  double dual_norm = 0.0;  // ‖Λ‖_q^{(α)}
  double gap = 0.0;
  BlockVector maximizer;
};

/// l_p^{(α)} – l_q^{(α)} duality at the Hölder maximizer, 1 < p < inf.
DualityCheck dual_norm_check(std::span<const Vector> lambda, const WeightFamily& alpha,
                             double p);

enum class PartitionMode { Single, Pair };

struct EupCertificate {
  double c_O = 0.0;
  double A = 0.0;
  double B = 0.0;
  double eps = 0.0;
  std::size_t n_terms = 0;
  double p_alpha = 0.0;
  double p_beta = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  PartitionMode mode = PartitionMode::Single;
};

/// JSON object with exactly the numeric certificate fields.
std::string to_json(const EupCertificate& cert);

/// Fills lhs/rhs/margin from the other fields.
void finalize_certificate(EupCertificate& cert);

/// Weighted entropic uncertainty bound for ψ under the isometry U.
///
/// c_O = max_{j,k} α_k β_j ‖τ_j* U π_k O‖, where τ = π in Single mode. The
/// hypothesis ‖(I − O) π_k* ψ‖ ≤ eps is verified for every k; a violation
/// throws Precondition naming k and the measured value.
EupCertificate eup_bound_certificate(const OperatorHandle& u, const QuantumPartition& pi,
                                     const WeightFamily& alpha, const WeightFamily& beta,
                                     const OperatorHandle& o, double eps,
                                     const StateVector& psi);
EupCertificate eup_bound_certificate(const OperatorHandle& u, const QuantumPartition& pi,
                                     const QuantumPartition& tau,
                                     const WeightFamily& alpha, const WeightFamily& beta,
                                     const OperatorHandle& o, double eps,
                                     const StateVector& psi);

/// Bounded operator H^𝒩 → H^𝒨 as an 𝒨 × 𝒩 grid of blocks T_{jk}.
class BlockOperator {
 public:
  BlockOperator(std::size_t out_blocks, std::size_t in_blocks,
                std::vector<OperatorHandle> blocks);
  /// T_{jk} = τ_j* U π_k.
  static BlockOperator from_partitions(const OperatorHandle& u, const QuantumPartition& pi,
                                       const QuantumPartition& tau);

  std::size_t out_blocks() const { return out_; }
  std::size_t in_blocks() const { return in_; }
  Index block_dim() const { return dim_; }
  const OperatorHandle& block(std::size_t j, std::size_t k) const {
    return blocks_[j * in_ + k];
  }
  BlockOperator scaled(double factor) const;

  BlockVector apply(const BlockVector& psi) const;
  BlockVector apply_adjoint(const BlockVector& phi) const;
  /// ‖T‖_{2,2} by power iteration on T*T over the stacked space.
  double norm22(const NormOptions& options = {}) const;
  /// max_{j,k} α_k β_j ‖T_{jk} O‖.
  double c_O(const WeightFamily& alpha, const WeightFamily& beta,
             const OperatorHandle& o) const;

 private:
  std::size_t out_ = 0;
  std::size_t in_ = 0;
  Index dim_ = 0;
  std::vector<OperatorHandle> blocks_;
};

struct InterpolationCheck {
  double lhs = 0.0;  // ‖TΨ‖^{(β)}_{2/(1−t)}
  double rhs = 0.0;  // (c_O(T) + 𝒩AB eps)^t ‖Ψ‖^{(α)}_{2/(1+t)}
  bool ok = false;
};

InterpolationCheck interpolation_check(const BlockOperator& t_op, const BlockVector& psi,
                                       const WeightFamily& alpha, const WeightFamily& beta,
                                       const OperatorHandle& o, double eps, double t);

struct BlockNormIdentity {
  double block_norm = 0.0;     // ‖T‖_{2,2}
  double operator_norm = 0.0;  // ‖U‖
  double gap = 0.0;            // relative
};

BlockNormIdentity block_norm_identity_check(const OperatorHandle& u,
                                            const QuantumPartition& pi,
                                            const QuantumPartition& tau);

}  // namespace eigenscope

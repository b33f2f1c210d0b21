#pragma once

// One-level block Jacobi machinery on explicit finite-dimensional operators.
// Used as the dense oracle against which the convolutional operators are
// checked. Block indices are 0-based.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "t2lc/tensor.hpp"

namespace t2lc::jacobi {

/// A linear map V -> W as a row-major (dim W) x (dim V) matrix.
using DenseOperator = Matrix;

/// V = V_0 (+) ... (+) V_{N-1} with contiguous index blocks.
class DirectSumDecomposition {
 public:
  explicit DirectSumDecomposition(std::vector<std::size_t> block_dims);
  /// `blocks` equal blocks of size total / blocks.
  static DirectSumDecomposition uniform(std::size_t total, std::size_t blocks);

  std::size_t total_dim() const { return total_; }
  std::size_t num_blocks() const { return dims_.size(); }
  std::size_t block_dim(std::size_t k) const;
  std::size_t offset(std::size_t k) const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// R_k x: block k of x.
std::vector<double> restrict_to(std::span<const double> x, const DirectSumDecomposition& decomp,
                                std::size_t k);
/// R_k^T x_k: x_k embedded in V with zeros elsewhere.
std::vector<double> prolong(std::span<const double> x_k, const DirectSumDecomposition& decomp,
                            std::size_t k);

/// A_ij = R~_i A R_j^T.
DenseOperator block_entry(const DenseOperator& a, const DirectSumDecomposition& rows,
                          const DirectSumDecomposition& cols, std::size_t i, std::size_t j);

/// A_k = R~_k A R_k^T.
DenseOperator local_operator(const DenseOperator& a, const DirectSumDecomposition& rows,
                             const DirectSumDecomposition& cols, std::size_t k);

/// M = sum_k R~_k^T A_k R_k, i.e. the block-diagonal part of A.
DenseOperator jacobi_approx(const DenseOperator& a, const DirectSumDecomposition& rows,
                            const DirectSumDecomposition& cols);

/// Mx evaluated blockwise as sum_k prolong(A_k restrict(x, k)) without
/// assembling M.
std::vector<double> jacobi_apply(const DenseOperator& a, const DirectSumDecomposition& rows,
                                 const DirectSumDecomposition& cols, std::span<const double> x);

/// Dense matrix of a linear map obtained by feeding every basis vector.
DenseOperator materialize(const std::function<std::vector<double>(std::span<const double>)>& op,
                          std::size_t in_dim);

/// Same, for tensor-to-tensor maps; vectors are in (channel, row, col) order.
DenseOperator materialize(const std::function<Tensor(const Tensor&)>& op,
                          std::size_t channels, std::size_t height, std::size_t width);

/// Numerical rank by Gaussian elimination with partial pivoting; pivots
/// below tol * max|entry| count as zero.
std::size_t numeric_rank(const DenseOperator& a, double tol = 1e-10);

}  // namespace t2lc::jacobi

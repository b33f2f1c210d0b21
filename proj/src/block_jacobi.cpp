#include "t2lc/block_jacobi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "t2lc/errors.hpp"

namespace t2lc::jacobi {

DirectSumDecomposition::DirectSumDecomposition(std::vector<std::size_t> block_dims)
    : dims_(std::move(block_dims)) {
  if (dims_.empty()) throw ConfigError("decomposition needs at least one block");
  for (std::size_t d : dims_) {
    if (d == 0) throw ConfigError("decomposition blocks must be non-empty");
    offsets_.push_back(total_);
    total_ += d;
  }
}

DirectSumDecomposition DirectSumDecomposition::uniform(std::size_t total, std::size_t blocks) {
  if (blocks == 0 || total % blocks != 0) {
    throw ConfigError(std::to_string(blocks) + " blocks do not divide dimension " +
                      std::to_string(total));
  }
  return DirectSumDecomposition(std::vector<std::size_t>(blocks, total / blocks));
}

std::size_t DirectSumDecomposition::block_dim(std::size_t k) const {
  if (k >= dims_.size()) {
    throw ConfigError("block index " + std::to_string(k) + " out of range");
  }
  return dims_[k];
}

std::size_t DirectSumDecomposition::offset(std::size_t k) const {
  if (k >= dims_.size()) {
    throw ConfigError("block index " + std::to_string(k) + " out of range");
  }
  return offsets_[k];
}

std::vector<double> restrict_to(std::span<const double> x, const DirectSumDecomposition& decomp,
                                std::size_t k) {
  if (x.size() != decomp.total_dim()) throw ConfigError("restrict: vector length mismatch");
  const auto first = x.begin() + static_cast<std::ptrdiff_t>(decomp.offset(k));
  return {first, first + static_cast<std::ptrdiff_t>(decomp.block_dim(k))};
}

std::vector<double> prolong(std::span<const double> x_k, const DirectSumDecomposition& decomp,
                            std::size_t k) {
  if (x_k.size() != decomp.block_dim(k)) throw ConfigError("prolong: block length mismatch");
  std::vector<double> x(decomp.total_dim(), 0.0);
  std::copy(x_k.begin(), x_k.end(), x.begin() + static_cast<std::ptrdiff_t>(decomp.offset(k)));
  return x;
}

namespace {

void check_shape(const DenseOperator& a, const DirectSumDecomposition& rows,
                 const DirectSumDecomposition& cols) {
  if (a.rows() != rows.total_dim() || a.cols() != cols.total_dim()) {
    throw ConfigError("decompositions do not match operator shape");
  }
}

void check_matching(const DirectSumDecomposition& rows, const DirectSumDecomposition& cols) {
  if (rows.num_blocks() != cols.num_blocks()) {
    throw ConfigError("row and column decompositions have different block counts");
  }
}

}  // namespace

DenseOperator block_entry(const DenseOperator& a, const DirectSumDecomposition& rows,
                          const DirectSumDecomposition& cols, std::size_t i, std::size_t j) {
  check_shape(a, rows, cols);
  const std::size_t r0 = rows.offset(i);
  const std::size_t c0 = cols.offset(j);
  DenseOperator block(rows.block_dim(i), cols.block_dim(j));
  for (std::size_t r = 0; r < block.rows(); ++r)
    for (std::size_t c = 0; c < block.cols(); ++c) block(r, c) = a(r0 + r, c0 + c);
  return block;
}

DenseOperator local_operator(const DenseOperator& a, const DirectSumDecomposition& rows,
                             const DirectSumDecomposition& cols, std::size_t k) {
  check_matching(rows, cols);
  return block_entry(a, rows, cols, k, k);
}

DenseOperator jacobi_approx(const DenseOperator& a, const DirectSumDecomposition& rows,
                            const DirectSumDecomposition& cols) {
  check_shape(a, rows, cols);
  check_matching(rows, cols);
  DenseOperator m(a.rows(), a.cols());
  for (std::size_t k = 0; k < rows.num_blocks(); ++k) {
    const DenseOperator ak = local_operator(a, rows, cols, k);
    for (std::size_t r = 0; r < ak.rows(); ++r)
      for (std::size_t c = 0; c < ak.cols(); ++c)
        m(rows.offset(k) + r, cols.offset(k) + c) = ak(r, c);
  }
  return m;
}

std::vector<double> jacobi_apply(const DenseOperator& a, const DirectSumDecomposition& rows,
                                 const DirectSumDecomposition& cols, std::span<const double> x) {
  check_shape(a, rows, cols);
  check_matching(rows, cols);
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t k = 0; k < rows.num_blocks(); ++k) {
    const auto yk = local_operator(a, rows, cols, k).apply(restrict_to(x, cols, k));
    const auto part = prolong(yk, rows, k);
    for (std::size_t r = 0; r < y.size(); ++r) y[r] += part[r];
  }
  return y;
}

DenseOperator materialize(const std::function<std::vector<double>(std::span<const double>)>& op,
                          std::size_t in_dim) {
  std::vector<double> e(in_dim, 0.0);
  DenseOperator out;
  for (std::size_t j = 0; j < in_dim; ++j) {
    e[j] = 1.0;
    const std::vector<double> col = op(e);
    e[j] = 0.0;
    if (j == 0) out = DenseOperator(col.size(), in_dim);
    if (col.size() != out.rows()) throw ConfigError("materialize: output length changed");
    for (std::size_t r = 0; r < col.size(); ++r) out(r, j) = col[r];
  }
  return out;
}

DenseOperator materialize(const std::function<Tensor(const Tensor&)>& op, std::size_t channels,
                          std::size_t height, std::size_t width) {
  return materialize(
      [&](std::span<const double> x) {
        Tensor t(Shape{1, channels, height, width}, false,
                 std::vector<double>(x.begin(), x.end()));
        const Tensor y = op(t);
        return std::vector<double>(y.values().begin(), y.values().end());
      },
      channels * height * width);
}

std::size_t numeric_rank(const DenseOperator& a, double tol) {
  DenseOperator m = a;
  const double scale = max_abs(m.entries());
  if (scale == 0.0) return 0;
  std::size_t rank = 0;
  for (std::size_t c = 0; c < m.cols() && rank < m.rows(); ++c) {
    std::size_t pivot = rank;
    for (std::size_t r = rank + 1; r < m.rows(); ++r)
      if (std::abs(m(r, c)) > std::abs(m(pivot, c))) pivot = r;
    if (std::abs(m(pivot, c)) <= tol * scale) continue;
    for (std::size_t k = 0; k < m.cols(); ++k) std::swap(m(pivot, k), m(rank, k));
    for (std::size_t r = rank + 1; r < m.rows(); ++r) {
      const double f = m(r, c) / m(rank, c);
      for (std::size_t k = c; k < m.cols(); ++k) m(r, k) -= f * m(rank, k);
    }
    ++rank;
  }
  return rank;
}

}  // namespace t2lc::jacobi

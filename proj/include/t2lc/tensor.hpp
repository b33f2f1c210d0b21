#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace t2lc {

/// Extent of a (batch, channel, row, col) array. Unbatched tensors have batch 1.
struct Shape {
  std::size_t batch = 1;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t plane() const { return height * width; }
  std::size_t sample_size() const { return channels * plane(); }
  std::size_t size() const { return batch * sample_size(); }

  bool operator==(const Shape&) const = default;
};

/// Dense real image stack stored row-major as (batch, channel, row, col).
///
/// A tensor built with the three-argument constructor is an element of the
/// c-channel image space; `Tensor::batched` adds an outer sample index. The
/// batched flag only affects serialization (3 or 4 stored dims).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t channels, std::size_t height, std::size_t width);
  Tensor(Shape shape, bool batched);
  Tensor(Shape shape, bool batched, std::vector<double> values);

  static Tensor batched(std::size_t batch, std::size_t channels,
                        std::size_t height, std::size_t width);
  /// Same shape and batched flag as `like`, filled with zeros.
  static Tensor zeros_like(const Tensor& like);

  const Shape& shape() const { return shape_; }
  std::size_t batch() const { return shape_.batch; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return values_.size(); }
  bool is_batched() const { return batched_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double* sample(std::size_t b) { return values_.data() + b * shape_.sample_size(); }
  const double* sample(std::size_t b) const {
    return values_.data() + b * shape_.sample_size();
  }
  double* channel(std::size_t b, std::size_t c) {
    return sample(b) + c * shape_.plane();
  }
  const double* channel(std::size_t b, std::size_t c) const {
    return sample(b) + c * shape_.plane();
  }

  double& at(std::size_t c, std::size_t y, std::size_t x) { return at(0, c, y, x); }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return at(0, c, y, x); }
  double& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
    return values_[((b * shape_.channels + c) * shape_.height + y) * shape_.width + x];
  }
  double at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return values_[((b * shape_.channels + c) * shape_.height + y) * shape_.width + x];
  }

  Tensor& operator+=(const Tensor& other);
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_{};
  bool batched_ = false;
  std::vector<double> values_;
};

/// Weights of a d x d cross-correlation from `in` to `out` channels,
/// stored as (out, in, row, col).
class ConvKernel {
 public:
  ConvKernel() = default;
  ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t size);
  ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t size,
             std::vector<double> weights);

  std::size_t out_channels() const { return out_; }
  std::size_t in_channels() const { return in_; }
  std::size_t size() const { return size_; }
  std::size_t taps() const { return in_ * size_ * size_; }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }

  double& at(std::size_t o, std::size_t i, std::size_t u, std::size_t v) {
    return weights_[((o * in_ + i) * size_ + u) * size_ + v];
  }
  double at(std::size_t o, std::size_t i, std::size_t u, std::size_t v) const {
    return weights_[((o * in_ + i) * size_ + u) * size_ + v];
  }

  bool operator==(const ConvKernel&) const = default;

 private:
  std::size_t out_ = 0;
  std::size_t in_ = 0;
  std::size_t size_ = 1;
  std::vector<double> weights_;
};

/// Row-major dense real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<double> entries() { return entries_; }
  std::span<const double> entries() const { return entries_; }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::vector<double> apply(std::span<const double> x) const;
  Matrix transpose() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

// --- the two convolution primitives -----------------------------------------

/// Stride-1, zero same-padded cross-correlation:
///   out[o][y][x] = sum_{i,u,v} k[o][i][u][v] * in_pad[i][y+u][x+v].
/// Each output pixel is accumulated in (in-channel, kernel row, kernel col)
/// order starting from zero.
Tensor conv2d(const Tensor& input, const ConvKernel& kernel);

/// Pixelwise channel mixing; identical to conv2d with d = 1.
Tensor conv1x1(const Tensor& input, const Matrix& weights);

/// Channels [begin, end) of every sample.
Tensor channel_slice(const Tensor& input, std::size_t begin, std::size_t end);
Tensor channel_concat(std::span<const Tensor> parts);

// --- numeric helpers ---------------------------------------------------------

double max_abs(std::span<const double> values);
/// max|a - b| / max|reference|; 0 when both are identically zero.
double max_rel_diff(std::span<const double> a, std::span<const double> reference);
double max_rel_diff(const Tensor& a, const Tensor& reference);
bool all_finite(std::span<const double> values);
double dot(std::span<const double> a, std::span<const double> b);

void fill_normal(std::span<double> values, std::mt19937_64& rng, double stddev = 1.0);
Tensor random_tensor(std::size_t channels, std::size_t height, std::size_t width,
                     std::mt19937_64& rng);
ConvKernel random_kernel(std::size_t out_channels, std::size_t in_channels,
                         std::size_t size, std::mt19937_64& rng);
Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

}  // namespace t2lc

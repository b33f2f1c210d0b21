#include "t2lc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "t2lc/detail/kernels.hpp"
#include "t2lc/errors.hpp"

namespace t2lc {

Tensor::Tensor(std::size_t channels, std::size_t height, std::size_t width)
    : Tensor(Shape{1, channels, height, width}, false) {}

Tensor::Tensor(Shape shape, bool batched)
    : shape_(shape), batched_(batched), values_(shape.size(), 0.0) {
  if (!batched && shape.batch != 1) {
    throw ConfigError("unbatched tensor must have batch 1");
  }
}

Tensor::Tensor(Shape shape, bool batched, std::vector<double> values)
    : shape_(shape), batched_(batched), values_(std::move(values)) {
  if (!batched && shape.batch != 1) {
    throw ConfigError("unbatched tensor must have batch 1");
  }
  if (values_.size() != shape_.size()) {
    throw ConfigError("tensor data length " + std::to_string(values_.size()) +
                      " does not match shape size " + std::to_string(shape_.size()));
  }
}

Tensor Tensor::batched(std::size_t batch, std::size_t channels, std::size_t height,
                       std::size_t width) {
  return Tensor(Shape{batch, channels, height, width}, true);
}

Tensor Tensor::zeros_like(const Tensor& like) { return Tensor(like.shape_, like.batched_); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) throw ConfigError("tensor += with mismatched shapes");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ConvKernel::ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t size)
    : ConvKernel(out_channels, in_channels, size,
                 std::vector<double>(out_channels * in_channels * size * size, 0.0)) {}

ConvKernel::ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t size,
                       std::vector<double> weights)
    : out_(out_channels), in_(in_channels), size_(size), weights_(std::move(weights)) {
  if (size_ % 2 == 0) {
    throw ConfigError("kernel size must be odd, got " + std::to_string(size_));
  }
  if (weights_.size() != out_ * in_ * size_ * size_) {
    throw ConfigError("kernel weight count does not match out*in*d*d");
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), entries_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (entries_.size() != rows_ * cols_) {
    throw ConfigError("matrix entry count does not match rows*cols");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> Matrix::apply(std::span<const double> x) const {
  if (x.size() != cols_) throw ConfigError("matrix-vector dimension mismatch");
  std::vector<double> y(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) acc += entries_[r * cols_ + c] * x[c];
    y[r] = acc;
  }
  return y;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Tensor conv2d(const Tensor& input, const ConvKernel& kernel) {
  if (kernel.in_channels() != input.channels()) {
    throw ConfigError("conv2d: kernel expects " + std::to_string(kernel.in_channels()) +
                      " input channels, got " + std::to_string(input.channels()));
  }
  Shape out_shape = input.shape();
  out_shape.channels = kernel.out_channels();
  Tensor out(out_shape, input.is_batched());
  const detail::PlaneGeom geom{input.height(), input.width(), kernel.size()};
  for (std::size_t b = 0; b < input.batch(); ++b) {
    detail::correlate_forward(input.sample(b), input.channels(), kernel.weights().data(),
                              kernel.out_channels(), geom, out.sample(b));
  }
  return out;
}

Tensor conv1x1(const Tensor& input, const Matrix& weights) {
  if (weights.cols() != input.channels()) {
    throw ConfigError("conv1x1: weight matrix has " + std::to_string(weights.cols()) +
                      " columns for " + std::to_string(input.channels()) + " channels");
  }
  Shape out_shape = input.shape();
  out_shape.channels = weights.rows();
  Tensor out(out_shape, input.is_batched());
  const detail::PlaneGeom geom{input.height(), input.width(), 1};
  for (std::size_t b = 0; b < input.batch(); ++b) {
    detail::correlate_forward(input.sample(b), input.channels(), weights.entries().data(),
                              weights.rows(), geom, out.sample(b));
  }
  return out;
}

Tensor channel_slice(const Tensor& input, std::size_t begin, std::size_t end) {
  if (begin > end || end > input.channels()) {
    throw ConfigError("channel_slice [" + std::to_string(begin) + ", " +
                      std::to_string(end) + ") out of range for " +
                      std::to_string(input.channels()) + " channels");
  }
  Shape s = input.shape();
  s.channels = end - begin;
  Tensor out(s, input.is_batched());
  const std::size_t plane = s.plane();
  for (std::size_t b = 0; b < s.batch; ++b) {
    std::copy_n(input.channel(b, begin), s.channels * plane, out.sample(b));
  }
  return out;
}

Tensor channel_concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ConfigError("channel_concat of zero parts");
  Shape s = parts.front().shape();
  s.channels = 0;
  for (const Tensor& p : parts) {
    if (p.height() != s.height || p.width() != s.width || p.batch() != s.batch) {
      throw ConfigError("channel_concat: parts differ in batch or spatial size");
    }
    s.channels += p.channels();
  }
  Tensor out(s, parts.front().is_batched());
  for (std::size_t b = 0; b < s.batch; ++b) {
    double* dst = out.sample(b);
    for (const Tensor& p : parts) {
      dst = std::copy_n(p.sample(b), p.shape().sample_size(), dst);
    }
  }
  return out;
}

double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

double max_rel_diff(std::span<const double> a, std::span<const double> reference) {
  if (a.size() != reference.size()) throw ConfigError("max_rel_diff: size mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - reference[i]));
  const double scale = max_abs(reference);
  if (scale == 0.0) return diff == 0.0 ? 0.0 : diff / max_abs(a);
  return diff / scale;
}

double max_rel_diff(const Tensor& a, const Tensor& reference) {
  if (a.shape() != reference.shape()) throw ConfigError("max_rel_diff: shape mismatch");
  return max_rel_diff(a.values(), reference.values());
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void fill_normal(std::span<double> values, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : values) v = dist(rng);
}

Tensor random_tensor(std::size_t channels, std::size_t height, std::size_t width,
                     std::mt19937_64& rng) {
  Tensor t(channels, height, width);
  fill_normal(t.values(), rng);
  return t;
}

ConvKernel random_kernel(std::size_t out_channels, std::size_t in_channels, std::size_t size,
                         std::mt19937_64& rng) {
  ConvKernel k(out_channels, in_channels, size);
  fill_normal(k.weights(), rng);
  return k;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  fill_normal(m.entries(), rng);
  return m;
}

}  // namespace t2lc

#pragma once

// Reference implementations used only by the tests. They share no code with
// the library: convolutions are direct sums over the padded window, dense
// operators are built by feeding basis tensors through the operator.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "t2lc/tensor.hpp"

namespace oracle {

using t2lc::ConvKernel;
using t2lc::Matrix;
using t2lc::Tensor;

inline Tensor naive_conv(const Tensor& x, const ConvKernel& k) {
  const long h = static_cast<long>(x.height());
  const long w = static_cast<long>(x.width());
  const long d = static_cast<long>(k.size());
  const long pad = d / 2;
  t2lc::Shape s = x.shape();
  s.channels = k.out_channels();
  Tensor y(s, x.is_batched());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t o = 0; o < k.out_channels(); ++o)
      for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c) {
          double acc = 0.0;
          for (std::size_t i = 0; i < k.in_channels(); ++i)
            for (long u = 0; u < d; ++u)
              for (long v = 0; v < d; ++v) {
                const long rr = r + u - pad;
                const long cc = c + v - pad;
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                acc += k.at(o, i, u, v) * x.at(b, i, rr, cc);
              }
          y.at(b, o, r, c) = acc;
        }
  return y;
}

inline Tensor naive_mix(const Tensor& x, const Matrix& w) {
  t2lc::Shape s = x.shape();
  s.channels = w.rows();
  Tensor y(s, x.is_batched());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t o = 0; o < w.rows(); ++o)
      for (std::size_t r = 0; r < x.height(); ++r)
        for (std::size_t c = 0; c < x.width(); ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < w.cols(); ++j) acc += w(o, j) * x.at(b, j, r, c);
          y.at(b, o, r, c) = acc;
        }
  return y;
}

/// Dense (out_dim x in_dim) matrix of a linear tensor map.
inline Matrix dense(const std::function<Tensor(const Tensor&)>& op, std::size_t channels,
                    std::size_t h, std::size_t w) {
  const std::size_t in_dim = channels * h * w;
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < in_dim; ++j) {
    Tensor e(channels, h, w);
    e.values()[j] = 1.0;
    const Tensor y = op(e);
    cols.emplace_back(y.values().begin(), y.values().end());
  }
  const std::size_t out_dim = cols.front().size();
  Matrix m(out_dim, in_dim);
  for (std::size_t j = 0; j < in_dim; ++j)
    for (std::size_t i = 0; i < out_dim; ++i) m(i, j) = cols[j][i];
  return m;
}

inline std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

inline double rel_err(std::span<const double> a, std::span<const double> ref) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - ref[i]));
    den = std::max(den, std::abs(ref[i]));
  }
  return den == 0.0 ? num : num / den;
}

inline double rel_err(const Tensor& a, const Tensor& ref) { return rel_err(a.values(), ref.values()); }
inline double rel_err(const Matrix& a, const Matrix& ref) {
  return rel_err(a.entries(), ref.entries());
}

inline bool all_zero(const Tensor& t) {
  for (double v : t.values())
    if (v != 0.0) return false;
  return true;
}

inline Tensor gaussian(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Tensor t(c, h, w);
  for (double& v : t.values()) v = nd(rng);
  return t;
}

inline ConvKernel gaussian_kernel(std::size_t o, std::size_t i, std::size_t d,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  ConvKernel k(o, i, d);
  for (double& v : k.weights()) v = nd(rng);
  return k;
}

}  // namespace oracle

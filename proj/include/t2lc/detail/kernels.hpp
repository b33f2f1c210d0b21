#pragma once

#include <cstddef>

// Raw single-sample loops shared by the operators, their gradients and the
// simulated workers. Planes are contiguous h*w blocks; weights are
// (out, in, d, d). Every routine accumulates into its destination.
//
// Summation order is fixed so that two callers feeding the same rows of a
// kernel get bit-identical results regardless of how the rows are grouped:
//   forward       per output pixel over (in, u, v)
//   input_grad    per input pixel over (out, u, v)
//   weight_grad   per weight over output pixels in row-major order

namespace t2lc::detail {

struct PlaneGeom {
  std::size_t height;
  std::size_t width;
  std::size_t ksize;

  std::size_t plane() const { return height * width; }
  std::size_t pad() const { return ksize / 2; }
};

void correlate_forward(const double* in, std::size_t n_in, const double* weights,
                       std::size_t n_out, PlaneGeom geom, double* out);

void correlate_input_grad(const double* upstream, std::size_t n_out,
                          const double* weights, std::size_t n_in, PlaneGeom geom,
                          double* d_in);

void correlate_weight_grad(const double* in, std::size_t n_in, const double* upstream,
                           std::size_t n_out, PlaneGeom geom, double* d_weights);

}  // namespace t2lc::detail

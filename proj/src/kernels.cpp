#include "t2lc/detail/kernels.hpp"

#include <algorithm>
#include <vector>

namespace t2lc::detail {
namespace {

// col[(i*d + u)*d + v][y*w + x] = in[i][y + u - pad][x + v - pad], zero outside.
void im2col(const double* in, std::size_t n_in, PlaneGeom g, double* col) {
  const std::size_t d = g.ksize;
  const long pad = static_cast<long>(g.pad());
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
  for (std::size_t i = 0; i < n_in; ++i) {
    const double* src = in + i * g.plane();
    for (std::size_t u = 0; u < d; ++u) {
      for (std::size_t v = 0; v < d; ++v) {
        double* dst = col + ((i * d + u) * d + v) * g.plane();
        const long dy = static_cast<long>(u) - pad;
        const long dx = static_cast<long>(v) - pad;
        for (long y = 0; y < h; ++y) {
          const long sy = y + dy;
          double* row = dst + y * w;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, 0.0);
            continue;
          }
          for (long x = 0; x < w; ++x) {
            const long sx = x + dx;
            row[x] = (sx < 0 || sx >= w) ? 0.0 : src[sy * w + sx];
          }
        }
      }
    }
  }
}

// Pixel-major variant of im2col: colT[p][k].
void im2row(const double* in, std::size_t n_in, PlaneGeom g, double* rows) {
  const std::size_t taps = n_in * g.ksize * g.ksize;
  const long d = static_cast<long>(g.ksize);
  const long pad = static_cast<long>(g.pad());
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double* dst = rows + static_cast<std::size_t>(y * w + x) * taps;
      for (std::size_t i = 0; i < n_in; ++i) {
        const double* src = in + i * g.plane();
        for (long u = 0; u < d; ++u) {
          const long sy = y + u - pad;
          for (long v = 0; v < d; ++v) {
            const long sx = x + v - pad;
            *dst++ = (sy < 0 || sy >= h || sx < 0 || sx >= w) ? 0.0 : src[sy * w + sx];
          }
        }
      }
    }
  }
}

}  // namespace

void correlate_forward(const double* in, std::size_t n_in, const double* weights,
                       std::size_t n_out, PlaneGeom g, double* out) {
  const std::size_t plane = g.plane();
  const std::size_t taps = n_in * g.ksize * g.ksize;
  const double* col = in;
  thread_local std::vector<double> scratch;
  if (g.ksize != 1) {
    scratch.resize(taps * plane);
    im2col(in, n_in, g, scratch.data());
    col = scratch.data();
  }
  for (std::size_t o = 0; o < n_out; ++o) {
    double* dst = out + o * plane;
    const double* wrow = weights + o * taps;
    for (std::size_t k = 0; k < taps; ++k) {
      const double wk = wrow[k];
      const double* src = col + k * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] += wk * src[p];
    }
  }
}

void correlate_input_grad(const double* upstream, std::size_t n_out,
                          const double* weights, std::size_t n_in, PlaneGeom g,
                          double* d_in) {
  const long d = static_cast<long>(g.ksize);
  const long pad = static_cast<long>(g.pad());
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double* up = upstream + o * g.plane();
    for (std::size_t i = 0; i < n_in; ++i) {
      double* dst = d_in + i * g.plane();
      const double* wk = weights + (o * n_in + i) * g.ksize * g.ksize;
      for (long u = 0; u < d; ++u) {
        const long dy = u - pad;
        const long y0 = std::max(0L, -dy);
        const long y1 = std::min(h, h - dy);
        for (long v = 0; v < d; ++v) {
          const long dx = v - pad;
          const long x0 = std::max(0L, -dx);
          const long x1 = std::min(w, w - dx);
          const double wv = wk[u * d + v];
          for (long y = y0; y < y1; ++y) {
            double* drow = dst + (y + dy) * w + dx;
            const double* urow = up + y * w;
            for (long x = x0; x < x1; ++x) drow[x] += wv * urow[x];
          }
        }
      }
    }
  }
}

void correlate_weight_grad(const double* in, std::size_t n_in, const double* upstream,
                           std::size_t n_out, PlaneGeom g, double* d_weights) {
  const std::size_t plane = g.plane();
  const std::size_t taps = n_in * g.ksize * g.ksize;
  thread_local std::vector<double> rows;
  rows.resize(taps * plane);
  im2row(in, n_in, g, rows.data());
  for (std::size_t o = 0; o < n_out; ++o) {
    const double* up = upstream + o * plane;
    double* dw = d_weights + o * taps;
    for (std::size_t p = 0; p < plane; ++p) {
      const double gp = up[p];
      const double* r = rows.data() + p * taps;
      for (std::size_t k = 0; k < taps; ++k) dw[k] += gp * r[k];
    }
  }
}

}  // namespace t2lc::detail

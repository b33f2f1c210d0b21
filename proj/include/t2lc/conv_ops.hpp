#pragma once

// Standard, group, and two-level group convolution plus the coarse-space
// pieces they are assembled from.
//
// Channels are split into N contiguous groups: input group k owns channels
// [k*n/N, (k+1)*n/N), output group k owns [k*m/N, (k+1)*m/N).
//
//   group_conv      y_k = A_k x_k                      (block diagonal)
//   coarse_restrict x0_k = r_k * x_k                   (one channel per group)
//   two_level       y_k = A_k x_k + S_k x0             (S_k: (m/N) x N, 1x1)
//   two_level_proto y_k = A_k x_k + w_k (a0 x0)_k      (a0: N x N, w_k: m/N)

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "t2lc/tensor.hpp"

namespace t2lc {

struct GroupSpec {
  std::size_t n = 0;       // input channels
  std::size_t m = 0;       // output channels
  std::size_t groups = 1;  // N
  std::size_t d = 3;       // local kernel size
  std::size_t d0 = 3;      // coarse restriction kernel size

  /// Throws ConfigError unless N divides n and m and both sizes are odd.
  void validate() const;
  std::size_t in_per_group() const { return n / groups; }
  std::size_t out_per_group() const { return m / groups; }

  bool operator==(const GroupSpec&) const = default;
};

/// Everything a two-level group convolution learns.
struct TwoLevelParams {
  std::vector<ConvKernel> local;            // N x [(m/N) x (n/N) x d x d]
  std::vector<ConvKernel> coarse_restrict;  // N x [1 x (n/N) x d0 x d0]
  std::vector<Matrix> coarse_mix;           // N x [(m/N) x N]

  static TwoLevelParams zeros(const GroupSpec& spec);
  /// Normal(0, 2/fan_in) draws: local and restriction kernels use their
  /// (n/N)*d^2 fan-in, mixing matrices use fan-in N. With zero_coarse the
  /// coarse parts are left at zero (the model then equals group_conv).
  static TwoLevelParams he_init(const GroupSpec& spec, std::mt19937_64& rng,
                                bool zero_coarse = false);
  static TwoLevelParams random(const GroupSpec& spec, std::mt19937_64& rng);

  void validate(const GroupSpec& spec) const;
  std::size_t parameter_count() const;

  bool operator==(const TwoLevelParams&) const = default;
};

/// Coarse path of the prototype operator: a full N x N mixing followed by a
/// per-group distribution vector.
struct ProtoCoarseParams {
  Matrix a0;                               // N x N
  std::vector<std::vector<double>> distribute;  // N x [m/N]

  static ProtoCoarseParams random(const GroupSpec& spec, std::mt19937_64& rng);
  void validate(const GroupSpec& spec) const;
};

Tensor standard_conv(const Tensor& x, const ConvKernel& kernel);

Tensor group_conv(const Tensor& x, const GroupSpec& spec, std::span<const ConvKernel> local);

/// N-channel coarse representation; channel k sees only input group k.
Tensor coarse_restrict(const Tensor& x, const GroupSpec& spec,
                       std::span<const ConvKernel> kernels);

/// Output group k, channel i: w_k[i] * sum_j a0[k][j] x0_j.
Tensor coarse_proto_apply(const Tensor& x0, const ProtoCoarseParams& proto, const GroupSpec& spec);

/// Output group k = conv1x1(x0, S_k).
Tensor coarse_combined_apply(const Tensor& x0, std::span<const Matrix> mix, const GroupSpec& spec);

/// S_k[i][j] = w_k[i] * a0[k][j]; coarse_combined_apply with the result
/// reproduces coarse_proto_apply.
std::vector<Matrix> subsume_prototype(const ProtoCoarseParams& proto, const GroupSpec& spec);

Tensor two_level_proto(const Tensor& x, const GroupSpec& spec, std::span<const ConvKernel> local,
                       std::span<const ConvKernel> restrict_kernels,
                       const ProtoCoarseParams& proto);

/// group_conv(x) + coarse_combined_apply(coarse_restrict(x)), summed in that
/// order.
Tensor two_level(const Tensor& x, const GroupSpec& spec, const TwoLevelParams& params);

/// Transpose shuffle: view channels as an N x (c/N) grid and read it out
/// column by column. Output channel q = j*N + g holds input channel g*(c/N) + j.
std::vector<std::size_t> shuffle_permutation(std::size_t channels, std::size_t groups);
Tensor channel_shuffle(const Tensor& x, std::size_t groups);
Tensor channel_unshuffle(const Tensor& x, std::size_t groups);

/// Full m x n kernel whose diagonal group blocks are `local` and whose
/// off-diagonal blocks are zero.
ConvKernel assemble_group_kernel(const GroupSpec& spec, std::span<const ConvKernel> local);
/// The N diagonal (m/N) x (n/N) blocks of a full kernel.
std::vector<ConvKernel> diagonal_blocks(const ConvKernel& full, const GroupSpec& spec);
/// The m x N matrix obtained by stacking S_0, ..., S_{N-1}.
Matrix stack_coarse_mix(std::span<const Matrix> mix);

}  // namespace t2lc

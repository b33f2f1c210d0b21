#pragma once

// Hand-derived vector-Jacobian products for every operator in conv_ops and a
// central-difference checker that is independent of them.
//
// All operators are linear in their input and in each parameter block, so
// d_input is the transposed operator applied to the upstream gradient and
// each d_param is an input-times-upstream correlation.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "t2lc/conv_ops.hpp"

namespace t2lc::grad {

struct Conv2dGrad {
  Tensor d_input;
  ConvKernel d_kernel;
};
Conv2dGrad conv2d_vjp(const Tensor& x, const ConvKernel& kernel, const Tensor& upstream);

struct Conv1x1Grad {
  Tensor d_input;
  Matrix d_weights;
};
Conv1x1Grad conv1x1_vjp(const Tensor& x, const Matrix& weights, const Tensor& upstream);

struct GroupConvGrad {
  Tensor d_input;
  std::vector<ConvKernel> d_local;
};
GroupConvGrad group_conv_vjp(const Tensor& x, const GroupSpec& spec,
                             std::span<const ConvKernel> local, const Tensor& upstream);

struct CoarseRestrictGrad {
  Tensor d_input;
  std::vector<ConvKernel> d_kernels;
};
CoarseRestrictGrad coarse_restrict_vjp(const Tensor& x, const GroupSpec& spec,
                                       std::span<const ConvKernel> kernels,
                                       const Tensor& upstream);

struct CoarseMixGrad {
  Tensor d_coarse;  // gradient w.r.t. x0
  std::vector<Matrix> d_mix;
};
/// d_coarse is accumulated as sum over groups k (in index order) of S_k^T u_k,
/// the same reduction the distributed backward performs.
CoarseMixGrad coarse_combined_apply_vjp(const Tensor& x0, std::span<const Matrix> mix,
                                        const GroupSpec& spec, const Tensor& upstream);

struct CoarseProtoGrad {
  Tensor d_coarse;
  ProtoCoarseParams d_proto;
};
CoarseProtoGrad coarse_proto_apply_vjp(const Tensor& x0, const ProtoCoarseParams& proto,
                                       const GroupSpec& spec, const Tensor& upstream);

struct TwoLevelGrad {
  Tensor d_input;
  TwoLevelParams d_params;
};
TwoLevelGrad two_level_vjp(const Tensor& x, const GroupSpec& spec, const TwoLevelParams& params,
                           const Tensor& upstream);

struct TwoLevelProtoGrad {
  Tensor d_input;
  std::vector<ConvKernel> d_local;
  std::vector<ConvKernel> d_restrict;
  ProtoCoarseParams d_proto;
};
TwoLevelProtoGrad two_level_proto_vjp(const Tensor& x, const GroupSpec& spec,
                                      std::span<const ConvKernel> local,
                                      std::span<const ConvKernel> restrict_kernels,
                                      const ProtoCoarseParams& proto, const Tensor& upstream);

Tensor channel_shuffle_vjp(const Tensor& upstream, std::size_t groups);

// --- type-erased interface used by the checker and the CLI -------------------

enum class OpId {
  conv2d,
  conv1x1,
  standard_conv,
  group_conv,
  coarse_restrict,
  coarse_proto_apply,
  coarse_combined_apply,
  two_level_proto,
  two_level,
  channel_shuffle,
};

std::string_view op_name(OpId op);
/// Throws ConfigError for unknown names.
OpId parse_op(std::string_view name);
const std::vector<OpId>& all_ops();

/// Flat parameter block. `role` names the block ("kernel", "local", ...),
/// `index` distinguishes per-group blocks.
struct ParamBlock {
  std::string role;
  std::size_t index = 0;
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

struct OpInstance {
  OpId op = OpId::conv2d;
  GroupSpec spec;
  Tensor input;
  std::vector<ParamBlock> params;
};

struct GradBundle {
  Tensor d_input;
  std::vector<ParamBlock> d_params;
};

Tensor forward(const OpInstance& inst);
GradBundle vjp(const OpInstance& inst, const Tensor& upstream);

/// Random input and parameters for `op`. conv2d/conv1x1/standard_conv read
/// n, m, d from `spec`; coarse_*_apply take an N-channel input.
OpInstance make_instance(OpId op, const GroupSpec& spec, std::size_t height, std::size_t width,
                         std::uint64_t seed);

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_coordinate;
  std::size_t coordinates = 0;
};

/// Compares vjp against central differences of <r, op(theta)> for a random
/// projection r drawn from `seed`, over every input entry and parameter. The
/// two perturbed outputs are subtracted entrywise before projecting.
/// Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
FdReport finite_diff_check(const OpInstance& inst, std::uint64_t seed, double h);

}  // namespace t2lc::grad

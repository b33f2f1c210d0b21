#include "t2lc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "t2lc/detail/kernels.hpp"
#include "t2lc/errors.hpp"

namespace t2lc::grad {
namespace {

void check_upstream(const Tensor& upstream, const Shape& expected, const char* op) {
  if (upstream.shape() != expected) {
    throw ConfigError(std::string(op) + ": upstream gradient shape does not match output");
  }
}

Shape with_channels(Shape s, std::size_t c) {
  s.channels = c;
  return s;
}

}  // namespace

Conv2dGrad conv2d_vjp(const Tensor& x, const ConvKernel& kernel, const Tensor& upstream) {
  if (kernel.in_channels() != x.channels()) throw ConfigError("conv2d_vjp: channel mismatch");
  check_upstream(upstream, with_channels(x.shape(), kernel.out_channels()), "conv2d_vjp");
  Conv2dGrad g{Tensor::zeros_like(x),
               ConvKernel(kernel.out_channels(), kernel.in_channels(), kernel.size())};
  const detail::PlaneGeom geom{x.height(), x.width(), kernel.size()};
  for (std::size_t b = 0; b < x.batch(); ++b) {
    detail::correlate_input_grad(upstream.sample(b), kernel.out_channels(),
                                 kernel.weights().data(), x.channels(), geom,
                                 g.d_input.sample(b));
    detail::correlate_weight_grad(x.sample(b), x.channels(), upstream.sample(b),
                                  kernel.out_channels(), geom, g.d_kernel.weights().data());
  }
  return g;
}

Conv1x1Grad conv1x1_vjp(const Tensor& x, const Matrix& weights, const Tensor& upstream) {
  if (weights.cols() != x.channels()) throw ConfigError("conv1x1_vjp: channel mismatch");
  check_upstream(upstream, with_channels(x.shape(), weights.rows()), "conv1x1_vjp");
  Conv1x1Grad g{Tensor::zeros_like(x), Matrix(weights.rows(), weights.cols())};
  const detail::PlaneGeom geom{x.height(), x.width(), 1};
  for (std::size_t b = 0; b < x.batch(); ++b) {
    detail::correlate_input_grad(upstream.sample(b), weights.rows(), weights.entries().data(),
                                 x.channels(), geom, g.d_input.sample(b));
    detail::correlate_weight_grad(x.sample(b), x.channels(), upstream.sample(b), weights.rows(),
                                  geom, g.d_weights.entries().data());
  }
  return g;
}

GroupConvGrad group_conv_vjp(const Tensor& x, const GroupSpec& spec,
                             std::span<const ConvKernel> local, const Tensor& upstream) {
  spec.validate();
  if (x.channels() != spec.n || local.size() != spec.groups) {
    throw ConfigError("group_conv_vjp: shapes do not match group spec");
  }
  check_upstream(upstream, with_channels(x.shape(), spec.m), "group_conv_vjp");
  GroupConvGrad g{Tensor::zeros_like(x), {}};
  for (std::size_t k = 0; k < spec.groups; ++k) {
    g.d_local.emplace_back(spec.out_per_group(), spec.in_per_group(), spec.d);
  }
  const detail::PlaneGeom geom{x.height(), x.width(), spec.d};
  const std::size_t ni = spec.in_per_group();
  const std::size_t mo = spec.out_per_group();
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t k = 0; k < spec.groups; ++k) {
      detail::correlate_input_grad(upstream.channel(b, k * mo), mo, local[k].weights().data(), ni,
                                   geom, g.d_input.channel(b, k * ni));
      detail::correlate_weight_grad(x.channel(b, k * ni), ni, upstream.channel(b, k * mo), mo,
                                    geom, g.d_local[k].weights().data());
    }
  }
  return g;
}

CoarseRestrictGrad coarse_restrict_vjp(const Tensor& x, const GroupSpec& spec,
                                       std::span<const ConvKernel> kernels,
                                       const Tensor& upstream) {
  spec.validate();
  if (x.channels() != spec.n || kernels.size() != spec.groups) {
    throw ConfigError("coarse_restrict_vjp: shapes do not match group spec");
  }
  check_upstream(upstream, with_channels(x.shape(), spec.groups), "coarse_restrict_vjp");
  CoarseRestrictGrad g{Tensor::zeros_like(x), {}};
  for (std::size_t k = 0; k < spec.groups; ++k) {
    g.d_kernels.emplace_back(1, spec.in_per_group(), spec.d0);
  }
  const detail::PlaneGeom geom{x.height(), x.width(), spec.d0};
  const std::size_t ni = spec.in_per_group();
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t k = 0; k < spec.groups; ++k) {
      detail::correlate_input_grad(upstream.channel(b, k), 1, kernels[k].weights().data(), ni,
                                   geom, g.d_input.channel(b, k * ni));
      detail::correlate_weight_grad(x.channel(b, k * ni), ni, upstream.channel(b, k), 1, geom,
                                    g.d_kernels[k].weights().data());
    }
  }
  return g;
}

CoarseMixGrad coarse_combined_apply_vjp(const Tensor& x0, std::span<const Matrix> mix,
                                        const GroupSpec& spec, const Tensor& upstream) {
  spec.validate();
  if (x0.channels() != spec.groups || mix.size() != spec.groups) {
    throw ConfigError("coarse_combined_apply_vjp: shapes do not match group spec");
  }
  check_upstream(upstream, with_channels(x0.shape(), spec.m), "coarse_combined_apply_vjp");
  CoarseMixGrad g{Tensor::zeros_like(x0), {}};
  for (std::size_t k = 0; k < spec.groups; ++k) g.d_mix.emplace_back(spec.out_per_group(), spec.groups);
  const detail::PlaneGeom geom{x0.height(), x0.width(), 1};
  const std::size_t mo = spec.out_per_group();
  const std::size_t sample = x0.shape().sample_size();
  std::vector<double> partial(sample);
  for (std::size_t b = 0; b < x0.batch(); ++b) {
    double* total = g.d_coarse.sample(b);
    for (std::size_t k = 0; k < spec.groups; ++k) {
      std::fill(partial.begin(), partial.end(), 0.0);
      detail::correlate_input_grad(upstream.channel(b, k * mo), mo, mix[k].entries().data(),
                                   spec.groups, geom, partial.data());
      for (std::size_t i = 0; i < sample; ++i) total[i] += partial[i];
      detail::correlate_weight_grad(x0.sample(b), spec.groups, upstream.channel(b, k * mo), mo,
                                    geom, g.d_mix[k].entries().data());
    }
  }
  return g;
}

CoarseProtoGrad coarse_proto_apply_vjp(const Tensor& x0, const ProtoCoarseParams& proto,
                                       const GroupSpec& spec, const Tensor& upstream) {
  proto.validate(spec);
  if (x0.channels() != spec.groups) throw ConfigError("coarse_proto_apply_vjp: channel mismatch");
  check_upstream(upstream, with_channels(x0.shape(), spec.m), "coarse_proto_apply_vjp");
  const Tensor y0 = conv1x1(x0, proto.a0);
  Tensor d_y0 = Tensor::zeros_like(y0);
  CoarseProtoGrad g;
  g.d_proto.distribute.assign(spec.groups, std::vector<double>(spec.out_per_group(), 0.0));
  const std::size_t plane = x0.shape().plane();
  const std::size_t mo = spec.out_per_group();
  for (std::size_t b = 0; b < x0.batch(); ++b) {
    for (std::size_t k = 0; k < spec.groups; ++k) {
      const double* src = y0.channel(b, k);
      double* dsrc = d_y0.channel(b, k);
      for (std::size_t i = 0; i < mo; ++i) {
        const double* up = upstream.channel(b, k * mo + i);
        const double w = proto.distribute[k][i];
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          acc += up[p] * src[p];
          dsrc[p] += w * up[p];
        }
        g.d_proto.distribute[k][i] += acc;
      }
    }
  }
  auto inner = conv1x1_vjp(x0, proto.a0, d_y0);
  g.d_coarse = std::move(inner.d_input);
  g.d_proto.a0 = std::move(inner.d_weights);
  return g;
}

TwoLevelGrad two_level_vjp(const Tensor& x, const GroupSpec& spec, const TwoLevelParams& params,
                           const Tensor& upstream) {
  params.validate(spec);
  if (x.channels() != spec.n) throw ConfigError("two_level_vjp: channel mismatch");
  check_upstream(upstream, with_channels(x.shape(), spec.m), "two_level_vjp");
  const Tensor x0 = coarse_restrict(x, spec, params.coarse_restrict);
  CoarseMixGrad coarse = coarse_combined_apply_vjp(x0, params.coarse_mix, spec, upstream);

  TwoLevelGrad g{Tensor::zeros_like(x), TwoLevelParams::zeros(spec)};
  g.d_params.coarse_mix = std::move(coarse.d_mix);
  const detail::PlaneGeom local_geom{x.height(), x.width(), spec.d};
  const detail::PlaneGeom coarse_geom{x.height(), x.width(), spec.d0};
  const std::size_t ni = spec.in_per_group();
  const std::size_t mo = spec.out_per_group();
  // Per group: local rows first, then the restriction row, accumulated into the
  // same buffer. This is the row order of the combined (m/N + 1)-row kernel
  // used by the simulated workers.
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t k = 0; k < spec.groups; ++k) {
      double* dx = g.d_input.channel(b, k * ni);
      const double* xk = x.channel(b, k * ni);
      detail::correlate_input_grad(upstream.channel(b, k * mo), mo,
                                   params.local[k].weights().data(), ni, local_geom, dx);
      detail::correlate_input_grad(coarse.d_coarse.channel(b, k), 1,
                                   params.coarse_restrict[k].weights().data(), ni, coarse_geom, dx);
      detail::correlate_weight_grad(xk, ni, upstream.channel(b, k * mo), mo, local_geom,
                                    g.d_params.local[k].weights().data());
      detail::correlate_weight_grad(xk, ni, coarse.d_coarse.channel(b, k), 1, coarse_geom,
                                    g.d_params.coarse_restrict[k].weights().data());
    }
  }
  return g;
}

TwoLevelProtoGrad two_level_proto_vjp(const Tensor& x, const GroupSpec& spec,
                                      std::span<const ConvKernel> local,
                                      std::span<const ConvKernel> restrict_kernels,
                                      const ProtoCoarseParams& proto, const Tensor& upstream) {
  const Tensor x0 = coarse_restrict(x, spec, restrict_kernels);
  CoarseProtoGrad coarse = coarse_proto_apply_vjp(x0, proto, spec, upstream);
  GroupConvGrad gc = group_conv_vjp(x, spec, local, upstream);
  CoarseRestrictGrad rg = coarse_restrict_vjp(x, spec, restrict_kernels, coarse.d_coarse);
  gc.d_input += rg.d_input;
  return {std::move(gc.d_input), std::move(gc.d_local), std::move(rg.d_kernels),
          std::move(coarse.d_proto)};
}

Tensor channel_shuffle_vjp(const Tensor& upstream, std::size_t groups) {
  return channel_unshuffle(upstream, groups);
}

// --- type-erased interface ---------------------------------------------------

namespace {

struct OpEntry {
  OpId op;
  std::string_view name;
};

constexpr OpEntry kOps[] = {
    {OpId::conv2d, "conv2d"},
    {OpId::conv1x1, "conv1x1"},
    {OpId::standard_conv, "standard_conv"},
    {OpId::group_conv, "group_conv"},
    {OpId::coarse_restrict, "coarse_restrict"},
    {OpId::coarse_proto_apply, "coarse_proto_apply"},
    {OpId::coarse_combined_apply, "coarse_combined_apply"},
    {OpId::two_level_proto, "two_level_proto"},
    {OpId::two_level, "two_level"},
    {OpId::channel_shuffle, "channel_shuffle"},
};

ParamBlock block_of(std::string role, std::size_t index, const ConvKernel& k) {
  return {std::move(role), index, {k.out_channels(), k.in_channels(), k.size(), k.size()},
          {k.weights().begin(), k.weights().end()}};
}

ParamBlock block_of(std::string role, std::size_t index, const Matrix& m) {
  return {std::move(role), index, {m.rows(), m.cols()}, {m.entries().begin(), m.entries().end()}};
}

ParamBlock block_of(std::string role, std::size_t index, const std::vector<double>& v) {
  return {std::move(role), index, {v.size()}, v};
}

std::vector<const ParamBlock*> with_role(const std::vector<ParamBlock>& blocks,
                                         std::string_view role) {
  std::vector<const ParamBlock*> out;
  for (const auto& b : blocks)
    if (b.role == role) out.push_back(&b);
  return out;
}

std::vector<ConvKernel> kernels(const std::vector<ParamBlock>& blocks, std::string_view role) {
  std::vector<ConvKernel> out;
  for (const ParamBlock* b : with_role(blocks, role)) {
    if (b->dims.size() != 4) throw ConfigError("parameter block is not a kernel");
    out.emplace_back(b->dims[0], b->dims[1], b->dims[2], b->values);
  }
  return out;
}

std::vector<Matrix> matrices(const std::vector<ParamBlock>& blocks, std::string_view role) {
  std::vector<Matrix> out;
  for (const ParamBlock* b : with_role(blocks, role)) {
    if (b->dims.size() != 2) throw ConfigError("parameter block is not a matrix");
    out.emplace_back(b->dims[0], b->dims[1], b->values);
  }
  return out;
}

ProtoCoarseParams proto_of(const std::vector<ParamBlock>& blocks) {
  ProtoCoarseParams p;
  const auto a0 = matrices(blocks, "a0");
  if (a0.size() != 1) throw ConfigError("prototype needs exactly one a0 block");
  p.a0 = a0.front();
  for (const ParamBlock* b : with_role(blocks, "distribute")) p.distribute.push_back(b->values);
  return p;
}

TwoLevelParams two_level_of(const std::vector<ParamBlock>& blocks) {
  return {kernels(blocks, "local"), kernels(blocks, "coarse_restrict"),
          matrices(blocks, "coarse_mix")};
}

void append_kernels(std::vector<ParamBlock>& out, const char* role,
                    const std::vector<ConvKernel>& ks) {
  for (std::size_t k = 0; k < ks.size(); ++k) out.push_back(block_of(role, k, ks[k]));
}

void append_proto(std::vector<ParamBlock>& out, const ProtoCoarseParams& p) {
  out.push_back(block_of("a0", 0, p.a0));
  for (std::size_t k = 0; k < p.distribute.size(); ++k)
    out.push_back(block_of("distribute", k, p.distribute[k]));
}

void append_two_level(std::vector<ParamBlock>& out, const TwoLevelParams& p) {
  append_kernels(out, "local", p.local);
  append_kernels(out, "coarse_restrict", p.coarse_restrict);
  for (std::size_t k = 0; k < p.coarse_mix.size(); ++k)
    out.push_back(block_of("coarse_mix", k, p.coarse_mix[k]));
}

}  // namespace

std::string_view op_name(OpId op) {
  for (const auto& e : kOps)
    if (e.op == op) return e.name;
  return "unknown";
}

OpId parse_op(std::string_view name) {
  for (const auto& e : kOps)
    if (e.name == name) return e.op;
  throw ConfigError("unknown op '" + std::string(name) + "'");
}

const std::vector<OpId>& all_ops() {
  static const std::vector<OpId> ops = [] {
    std::vector<OpId> v;
    for (const auto& e : kOps) v.push_back(e.op);
    return v;
  }();
  return ops;
}

Tensor forward(const OpInstance& inst) {
  const auto& p = inst.params;
  switch (inst.op) {
    case OpId::conv2d:
      return conv2d(inst.input, kernels(p, "kernel").at(0));
    case OpId::standard_conv:
      return standard_conv(inst.input, kernels(p, "kernel").at(0));
    case OpId::conv1x1:
      return conv1x1(inst.input, matrices(p, "weights").at(0));
    case OpId::group_conv:
      return group_conv(inst.input, inst.spec, kernels(p, "local"));
    case OpId::coarse_restrict:
      return coarse_restrict(inst.input, inst.spec, kernels(p, "coarse_restrict"));
    case OpId::coarse_proto_apply:
      return coarse_proto_apply(inst.input, proto_of(p), inst.spec);
    case OpId::coarse_combined_apply:
      return coarse_combined_apply(inst.input, matrices(p, "coarse_mix"), inst.spec);
    case OpId::two_level_proto:
      return two_level_proto(inst.input, inst.spec, kernels(p, "local"),
                             kernels(p, "coarse_restrict"), proto_of(p));
    case OpId::two_level:
      return two_level(inst.input, inst.spec, two_level_of(p));
    case OpId::channel_shuffle:
      return channel_shuffle(inst.input, inst.spec.groups);
  }
  throw ConfigError("unknown op");
}

GradBundle vjp(const OpInstance& inst, const Tensor& upstream) {
  const auto& p = inst.params;
  GradBundle out;
  switch (inst.op) {
    case OpId::conv2d:
    case OpId::standard_conv: {
      auto g = conv2d_vjp(inst.input, kernels(p, "kernel").at(0), upstream);
      out.d_input = std::move(g.d_input);
      out.d_params.push_back(block_of("kernel", 0, g.d_kernel));
      return out;
    }
    case OpId::conv1x1: {
      auto g = conv1x1_vjp(inst.input, matrices(p, "weights").at(0), upstream);
      out.d_input = std::move(g.d_input);
      out.d_params.push_back(block_of("weights", 0, g.d_weights));
      return out;
    }
    case OpId::group_conv: {
      auto g = group_conv_vjp(inst.input, inst.spec, kernels(p, "local"), upstream);
      out.d_input = std::move(g.d_input);
      append_kernels(out.d_params, "local", g.d_local);
      return out;
    }
    case OpId::coarse_restrict: {
      auto g = coarse_restrict_vjp(inst.input, inst.spec, kernels(p, "coarse_restrict"), upstream);
      out.d_input = std::move(g.d_input);
      append_kernels(out.d_params, "coarse_restrict", g.d_kernels);
      return out;
    }
    case OpId::coarse_proto_apply: {
      auto g = coarse_proto_apply_vjp(inst.input, proto_of(p), inst.spec, upstream);
      out.d_input = std::move(g.d_coarse);
      append_proto(out.d_params, g.d_proto);
      return out;
    }
    case OpId::coarse_combined_apply: {
      auto g = coarse_combined_apply_vjp(inst.input, matrices(p, "coarse_mix"), inst.spec,
                                         upstream);
      out.d_input = std::move(g.d_coarse);
      for (std::size_t k = 0; k < g.d_mix.size(); ++k)
        out.d_params.push_back(block_of("coarse_mix", k, g.d_mix[k]));
      return out;
    }
    case OpId::two_level_proto: {
      auto g = two_level_proto_vjp(inst.input, inst.spec, kernels(p, "local"),
                                   kernels(p, "coarse_restrict"), proto_of(p), upstream);
      out.d_input = std::move(g.d_input);
      append_kernels(out.d_params, "local", g.d_local);
      append_kernels(out.d_params, "coarse_restrict", g.d_restrict);
      append_proto(out.d_params, g.d_proto);
      return out;
    }
    case OpId::two_level: {
      auto g = two_level_vjp(inst.input, inst.spec, two_level_of(p), upstream);
      out.d_input = std::move(g.d_input);
      append_two_level(out.d_params, g.d_params);
      return out;
    }
    case OpId::channel_shuffle:
      out.d_input = channel_shuffle_vjp(upstream, inst.spec.groups);
      return out;
  }
  throw ConfigError("unknown op");
}

OpInstance make_instance(OpId op, const GroupSpec& spec, std::size_t height, std::size_t width,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OpInstance inst;
  inst.op = op;
  inst.spec = spec;
  switch (op) {
    case OpId::conv2d:
    case OpId::standard_conv:
      if (spec.d % 2 == 0) throw ConfigError("kernel size must be odd");
      inst.input = random_tensor(spec.n, height, width, rng);
      inst.params.push_back(block_of("kernel", 0, random_kernel(spec.m, spec.n, spec.d, rng)));
      return inst;
    case OpId::conv1x1:
      inst.input = random_tensor(spec.n, height, width, rng);
      inst.params.push_back(block_of("weights", 0, random_matrix(spec.m, spec.n, rng)));
      return inst;
    case OpId::channel_shuffle:
      inst.input = random_tensor(spec.n, height, width, rng);
      shuffle_permutation(spec.n, spec.groups);
      return inst;
    default:
      break;
  }
  spec.validate();
  const bool coarse_input = op == OpId::coarse_proto_apply || op == OpId::coarse_combined_apply;
  inst.input = random_tensor(coarse_input ? spec.groups : spec.n, height, width, rng);
  const TwoLevelParams tl = TwoLevelParams::random(spec, rng);
  switch (op) {
    case OpId::group_conv:
      append_kernels(inst.params, "local", tl.local);
      break;
    case OpId::coarse_restrict:
      append_kernels(inst.params, "coarse_restrict", tl.coarse_restrict);
      break;
    case OpId::coarse_combined_apply:
      for (std::size_t k = 0; k < tl.coarse_mix.size(); ++k)
        inst.params.push_back(block_of("coarse_mix", k, tl.coarse_mix[k]));
      break;
    case OpId::coarse_proto_apply:
      append_proto(inst.params, ProtoCoarseParams::random(spec, rng));
      break;
    case OpId::two_level_proto:
      append_kernels(inst.params, "local", tl.local);
      append_kernels(inst.params, "coarse_restrict", tl.coarse_restrict);
      append_proto(inst.params, ProtoCoarseParams::random(spec, rng));
      break;
    case OpId::two_level:
      append_two_level(inst.params, tl);
      break;
    default:
      break;
  }
  return inst;
}

FdReport finite_diff_check(const OpInstance& inst, std::uint64_t seed, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  const Tensor y = forward(inst);
  std::mt19937_64 rng(seed);
  Tensor projection = Tensor::zeros_like(y);
  fill_normal(projection.values(), rng);
  const GradBundle analytic = vjp(inst, projection);

  FdReport report;
  OpInstance probe = inst;
  // <r, op(x + h e) - op(x - h e)>, differenced entrywise so that outputs the
  // coordinate does not reach cancel exactly.
  auto central = [&](std::span<double> coords, std::size_t i) {
    const double saved = coords[i];
    coords[i] = saved + h;
    const Tensor plus = forward(probe);
    coords[i] = saved - h;
    const Tensor minus = forward(probe);
    coords[i] = saved;
    const auto r = projection.values();
    const auto p = plus.values();
    const auto m = minus.values();
    double acc = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * (p[j] - m[j]);
    return acc / (2.0 * h);
  };

  auto visit = [&](std::span<double> coords, std::span<const double> grads,
                   const std::string& label) {
    if (coords.size() != grads.size()) throw ConfigError("gradient shape mismatch for " + label);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double numeric = central(coords, i);
      const double a = grads[i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        std::ostringstream msg;
        msg << "non-finite gradient at " << label << "[" << i << "] (analytic " << a
            << ", numeric " << numeric << ")";
        throw NumericError(msg.str());
      }
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++report.coordinates;
      if (report.worst_coordinate.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_coordinate = label + "[" + std::to_string(i) + "]";
      }
    }
  };

  visit(probe.input.values(), analytic.d_input.values(), "input");
  if (analytic.d_params.size() != probe.params.size()) {
    throw ConfigError("vjp returned a different number of parameter blocks");
  }
  for (std::size_t b = 0; b < probe.params.size(); ++b) {
    auto& block = probe.params[b];
    visit(block.values, analytic.d_params[b].values,
          block.role + "#" + std::to_string(block.index));
  }
  return report;
}

}  // namespace t2lc::grad

#include "t2lc/conv_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "t2lc/detail/kernels.hpp"
#include "t2lc/errors.hpp"

namespace t2lc {

void GroupSpec::validate() const {
  if (groups == 0) throw ConfigError("number of groups must be positive");
  if (n == 0 || m == 0) throw ConfigError("channel counts must be positive");
  if (n % groups != 0 || m % groups != 0) {
    throw ConfigError("groups N=" + std::to_string(groups) + " must divide n=" +
                      std::to_string(n) + " and m=" + std::to_string(m));
  }
  if (d % 2 == 0 || d0 % 2 == 0) {
    throw ConfigError("kernel sizes must be odd (d=" + std::to_string(d) +
                      ", d0=" + std::to_string(d0) + ")");
  }
}

TwoLevelParams TwoLevelParams::zeros(const GroupSpec& spec) {
  spec.validate();
  TwoLevelParams p;
  for (std::size_t k = 0; k < spec.groups; ++k) {
    p.local.emplace_back(spec.out_per_group(), spec.in_per_group(), spec.d);
    p.coarse_restrict.emplace_back(1, spec.in_per_group(), spec.d0);
    p.coarse_mix.emplace_back(spec.out_per_group(), spec.groups);
  }
  return p;
}

TwoLevelParams TwoLevelParams::he_init(const GroupSpec& spec, std::mt19937_64& rng,
                                       bool zero_coarse) {
  TwoLevelParams p = zeros(spec);
  const double local_std = std::sqrt(2.0 / static_cast<double>(spec.in_per_group() * spec.d * spec.d));
  const double restrict_std =
      std::sqrt(2.0 / static_cast<double>(spec.in_per_group() * spec.d0 * spec.d0));
  const double mix_std = std::sqrt(2.0 / static_cast<double>(spec.groups));
  for (auto& k : p.local) fill_normal(k.weights(), rng, local_std);
  if (zero_coarse) return p;
  for (auto& k : p.coarse_restrict) fill_normal(k.weights(), rng, restrict_std);
  for (auto& s : p.coarse_mix) fill_normal(s.entries(), rng, mix_std);
  return p;
}

TwoLevelParams TwoLevelParams::random(const GroupSpec& spec, std::mt19937_64& rng) {
  TwoLevelParams p = zeros(spec);
  for (auto& k : p.local) fill_normal(k.weights(), rng);
  for (auto& k : p.coarse_restrict) fill_normal(k.weights(), rng);
  for (auto& s : p.coarse_mix) fill_normal(s.entries(), rng);
  return p;
}

void TwoLevelParams::validate(const GroupSpec& spec) const {
  spec.validate();
  if (local.size() != spec.groups || coarse_restrict.size() != spec.groups ||
      coarse_mix.size() != spec.groups) {
    throw ConfigError("two-level parameters must hold one block per group");
  }
  for (std::size_t k = 0; k < spec.groups; ++k) {
    if (local[k].out_channels() != spec.out_per_group() ||
        local[k].in_channels() != spec.in_per_group() || local[k].size() != spec.d) {
      throw ConfigError("local kernel " + std::to_string(k) + " has the wrong shape");
    }
    if (coarse_restrict[k].out_channels() != 1 ||
        coarse_restrict[k].in_channels() != spec.in_per_group() ||
        coarse_restrict[k].size() != spec.d0) {
      throw ConfigError("coarse restriction kernel " + std::to_string(k) +
                        " has the wrong shape");
    }
    if (coarse_mix[k].rows() != spec.out_per_group() || coarse_mix[k].cols() != spec.groups) {
      throw ConfigError("coarse mixing matrix " + std::to_string(k) + " has the wrong shape");
    }
  }
}

std::size_t TwoLevelParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& k : local) total += k.weights().size();
  for (const auto& k : coarse_restrict) total += k.weights().size();
  for (const auto& s : coarse_mix) total += s.entries().size();
  return total;
}

ProtoCoarseParams ProtoCoarseParams::random(const GroupSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  ProtoCoarseParams p;
  p.a0 = random_matrix(spec.groups, spec.groups, rng);
  p.distribute.assign(spec.groups, std::vector<double>(spec.out_per_group()));
  for (auto& w : p.distribute) fill_normal(w, rng);
  return p;
}

void ProtoCoarseParams::validate(const GroupSpec& spec) const {
  spec.validate();
  if (a0.rows() != spec.groups || a0.cols() != spec.groups) {
    throw ConfigError("a0 must be N x N");
  }
  if (distribute.size() != spec.groups) throw ConfigError("need one distribution vector per group");
  for (const auto& w : distribute) {
    if (w.size() != spec.out_per_group()) {
      throw ConfigError("distribution vectors must have m/N entries");
    }
  }
}

namespace {

void check_input(const Tensor& x, std::size_t channels, const char* op) {
  if (x.channels() != channels) {
    throw ConfigError(std::string(op) + ": expected " + std::to_string(channels) +
                      " channels, got " + std::to_string(x.channels()));
  }
}

Tensor output_like(const Tensor& x, std::size_t channels) {
  Shape s = x.shape();
  s.channels = channels;
  return Tensor(s, x.is_batched());
}

void check_kernels(std::span<const ConvKernel> kernels, const GroupSpec& spec,
                   std::size_t out, std::size_t size, const char* what) {
  if (kernels.size() != spec.groups) {
    throw ConfigError(std::string(what) + ": need " + std::to_string(spec.groups) +
                      " kernels, got " + std::to_string(kernels.size()));
  }
  for (const auto& k : kernels) {
    if (k.out_channels() != out || k.in_channels() != spec.in_per_group() || k.size() != size) {
      throw ConfigError(std::string(what) + ": kernel shape does not match group spec");
    }
  }
}

void check_mix(std::span<const Matrix> mix, const GroupSpec& spec) {
  if (mix.size() != spec.groups) throw ConfigError("coarse mix: need one matrix per group");
  for (const auto& s : mix) {
    if (s.rows() != spec.out_per_group() || s.cols() != spec.groups) {
      throw ConfigError("coarse mix: matrices must be (m/N) x N");
    }
  }
}

}  // namespace

Tensor standard_conv(const Tensor& x, const ConvKernel& kernel) { return conv2d(x, kernel); }

Tensor group_conv(const Tensor& x, const GroupSpec& spec, std::span<const ConvKernel> local) {
  spec.validate();
  check_input(x, spec.n, "group_conv");
  check_kernels(local, spec, spec.out_per_group(), spec.d, "group_conv");
  Tensor y = output_like(x, spec.m);
  const detail::PlaneGeom geom{x.height(), x.width(), spec.d};
  const std::size_t ni = spec.in_per_group();
  const std::size_t mo = spec.out_per_group();
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t k = 0; k < spec.groups; ++k) {
      detail::correlate_forward(x.channel(b, k * ni), ni, local[k].weights().data(), mo, geom,
                                y.channel(b, k * mo));
    }
  }
  return y;
}

Tensor coarse_restrict(const Tensor& x, const GroupSpec& spec,
                       std::span<const ConvKernel> kernels) {
  spec.validate();
  check_input(x, spec.n, "coarse_restrict");
  check_kernels(kernels, spec, 1, spec.d0, "coarse_restrict");
  Tensor x0 = output_like(x, spec.groups);
  const detail::PlaneGeom geom{x.height(), x.width(), spec.d0};
  const std::size_t ni = spec.in_per_group();
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t k = 0; k < spec.groups; ++k) {
      detail::correlate_forward(x.channel(b, k * ni), ni, kernels[k].weights().data(), 1, geom,
                                x0.channel(b, k));
    }
  }
  return x0;
}

Tensor coarse_proto_apply(const Tensor& x0, const ProtoCoarseParams& proto,
                          const GroupSpec& spec) {
  proto.validate(spec);
  check_input(x0, spec.groups, "coarse_proto_apply");
  const Tensor y0 = conv1x1(x0, proto.a0);
  Tensor y = output_like(x0, spec.m);
  const std::size_t plane = x0.shape().plane();
  const std::size_t mo = spec.out_per_group();
  for (std::size_t b = 0; b < x0.batch(); ++b) {
    for (std::size_t k = 0; k < spec.groups; ++k) {
      const double* src = y0.channel(b, k);
      for (std::size_t i = 0; i < mo; ++i) {
        const double w = proto.distribute[k][i];
        double* dst = y.channel(b, k * mo + i);
        for (std::size_t p = 0; p < plane; ++p) dst[p] = w * src[p];
      }
    }
  }
  return y;
}

Tensor coarse_combined_apply(const Tensor& x0, std::span<const Matrix> mix,
                             const GroupSpec& spec) {
  spec.validate();
  check_input(x0, spec.groups, "coarse_combined_apply");
  check_mix(mix, spec);
  Tensor y = output_like(x0, spec.m);
  const detail::PlaneGeom geom{x0.height(), x0.width(), 1};
  const std::size_t mo = spec.out_per_group();
  for (std::size_t b = 0; b < x0.batch(); ++b) {
    for (std::size_t k = 0; k < spec.groups; ++k) {
      detail::correlate_forward(x0.sample(b), spec.groups, mix[k].entries().data(), mo, geom,
                                y.channel(b, k * mo));
    }
  }
  return y;
}

std::vector<Matrix> subsume_prototype(const ProtoCoarseParams& proto, const GroupSpec& spec) {
  proto.validate(spec);
  std::vector<Matrix> mix;
  for (std::size_t k = 0; k < spec.groups; ++k) {
    Matrix s(spec.out_per_group(), spec.groups);
    for (std::size_t i = 0; i < s.rows(); ++i)
      for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) = proto.distribute[k][i] * proto.a0(k, j);
    mix.push_back(std::move(s));
  }
  return mix;
}

Tensor two_level_proto(const Tensor& x, const GroupSpec& spec, std::span<const ConvKernel> local,
                       std::span<const ConvKernel> restrict_kernels,
                       const ProtoCoarseParams& proto) {
  Tensor y = group_conv(x, spec, local);
  y += coarse_proto_apply(coarse_restrict(x, spec, restrict_kernels), proto, spec);
  return y;
}

Tensor two_level(const Tensor& x, const GroupSpec& spec, const TwoLevelParams& params) {
  params.validate(spec);
  Tensor y = group_conv(x, spec, params.local);
  y += coarse_combined_apply(coarse_restrict(x, spec, params.coarse_restrict), params.coarse_mix,
                             spec);
  return y;
}

std::vector<std::size_t> shuffle_permutation(std::size_t channels, std::size_t groups) {
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError("channel_shuffle: " + std::to_string(groups) + " groups do not divide " +
                      std::to_string(channels) + " channels");
  }
  const std::size_t per = channels / groups;
  std::vector<std::size_t> perm(channels);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t j = 0; j < per; ++j) perm[j * groups + g] = g * per + j;
  return perm;
}

namespace {

Tensor permute_channels(const Tensor& x, const std::vector<std::size_t>& source_of) {
  Tensor y = Tensor::zeros_like(x);
  const std::size_t plane = x.shape().plane();
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t q = 0; q < source_of.size(); ++q)
      std::copy_n(x.channel(b, source_of[q]), plane, y.channel(b, q));
  return y;
}

}  // namespace

Tensor channel_shuffle(const Tensor& x, std::size_t groups) {
  return permute_channels(x, shuffle_permutation(x.channels(), groups));
}

Tensor channel_unshuffle(const Tensor& x, std::size_t groups) {
  const auto perm = shuffle_permutation(x.channels(), groups);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t q = 0; q < perm.size(); ++q) inverse[perm[q]] = q;
  return permute_channels(x, inverse);
}

ConvKernel assemble_group_kernel(const GroupSpec& spec, std::span<const ConvKernel> local) {
  spec.validate();
  check_kernels(local, spec, spec.out_per_group(), spec.d, "assemble_group_kernel");
  ConvKernel full(spec.m, spec.n, spec.d);
  const std::size_t mo = spec.out_per_group();
  const std::size_t ni = spec.in_per_group();
  for (std::size_t k = 0; k < spec.groups; ++k)
    for (std::size_t o = 0; o < mo; ++o)
      for (std::size_t i = 0; i < ni; ++i)
        for (std::size_t u = 0; u < spec.d; ++u)
          for (std::size_t v = 0; v < spec.d; ++v)
            full.at(k * mo + o, k * ni + i, u, v) = local[k].at(o, i, u, v);
  return full;
}

std::vector<ConvKernel> diagonal_blocks(const ConvKernel& full, const GroupSpec& spec) {
  spec.validate();
  if (full.out_channels() != spec.m || full.in_channels() != spec.n || full.size() != spec.d) {
    throw ConfigError("diagonal_blocks: kernel does not match group spec");
  }
  std::vector<ConvKernel> blocks;
  const std::size_t mo = spec.out_per_group();
  const std::size_t ni = spec.in_per_group();
  for (std::size_t k = 0; k < spec.groups; ++k) {
    ConvKernel b(mo, ni, spec.d);
    for (std::size_t o = 0; o < mo; ++o)
      for (std::size_t i = 0; i < ni; ++i)
        for (std::size_t u = 0; u < spec.d; ++u)
          for (std::size_t v = 0; v < spec.d; ++v)
            b.at(o, i, u, v) = full.at(k * mo + o, k * ni + i, u, v);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

Matrix stack_coarse_mix(std::span<const Matrix> mix) {
  if (mix.empty()) throw ConfigError("stack_coarse_mix: no matrices");
  const std::size_t rows = mix.front().rows();
  const std::size_t cols = mix.front().cols();
  Matrix stacked(rows * mix.size(), cols);
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (mix[k].rows() != rows || mix[k].cols() != cols) {
      throw ConfigError("stack_coarse_mix: matrices differ in shape");
    }
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) stacked(k * rows + i, j) = mix[k](i, j);
  }
  return stacked;
}

}  // namespace t2lc

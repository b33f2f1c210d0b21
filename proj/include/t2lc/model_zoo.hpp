#pragma once

// Layer-level descriptions of WideResNet, MobileNetV2 and small test networks,
// and parameter accounting for each convolution variant.
//
// Per-layer counts for a convertible d x d convolution from n to m channels
// split over N workers:
//
//   variant   total                     per processor
//   sc        d^2 m n                   d^2 m n / N
//   gc        d^2 m n / N               d^2 m n / N^2
//   shuffle   d^2 m n / N               d^2 m n / N^2
//   gc2l      d^2 m n / N + d0^2 n + mN d^2 m n / N^2 + d0^2 n / N + m
//
// Every other parameter (non-convertible convolutions, normalization, the
// classifier) counts once in the total and is divided evenly across the N
// workers in the per-processor figure.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace t2lc::zoo {

enum class Variant { sc, gc, gc2l, shuffle };

std::string_view variant_name(Variant v);
/// Accepts sc, gc, gc2l (or gc-2l) and shuffle, case-insensitively.
Variant parse_variant(std::string_view name);
const std::vector<Variant>& all_variants();

enum class LayerKind { conv, depthwise_conv, batch_norm, affine, activation, pool, fc };

struct LayerDesc {
  LayerKind kind = LayerKind::conv;
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t d = 1;
  std::size_t stride = 1;
  bool convertible = false;  // conv only: replaced by the chosen variant
  bool bias = false;         // fc only
};

struct ArchSpec {
  std::string name;
  std::size_t input_channels = 3;
  std::size_t classes = 10;
  std::vector<LayerDesc> layers;
  /// Variant and group count the network is built with (presets: sc, 1).
  Variant variant = Variant::sc;
  std::size_t groups = 1;
};

/// Pre-activation WideResNet-l-w: l = 6k + 4, stage widths 16w/32w/64w,
/// k residual units per stage. The 3x3 unit convolutions and the 1x1
/// projection shortcuts are convertible; the 3 -> 16 stem is not.
ArchSpec wideresnet(std::size_t depth, std::size_t widen, std::size_t classes = 10);

/// MobileNetV2 (width 1.0, 1000 classes). Expansion, projection and the final
/// 320 -> 1280 1x1 convolutions are convertible; depthwise convolutions and
/// the 3x3 stem are not.
ArchSpec mobilenetv2(std::size_t classes = 1000);

/// 3x3 stem (input -> width, not convertible), then `depth` convertible 3x3
/// width -> width convolutions each followed by a per-channel affine map and
/// ReLU, global average pooling, and a biased classifier.
ArchSpec build_toy_arch(std::size_t depth, std::size_t width, Variant variant, std::size_t groups,
                        std::size_t input_channels = 3, std::size_t classes = 10);

/// Looks up wideresnet-<l>-<w>, mobilenetv2, or toy (depth 3, width 16).
ArchSpec preset(std::string_view name);

struct LayerCount {
  std::string layer;
  std::string role;  // local, coarse_restrict, coarse_mix, conv, depthwise, bn, affine, fc
  std::uint64_t total = 0;
  double per_processor = 0.0;
};

struct ParamCount {
  std::uint64_t total = 0;
  double per_processor = 0.0;
  std::vector<LayerCount> breakdown;
  std::map<std::string, std::uint64_t> by_role;
};

/// Throws ConfigError when N does not divide n and m for a grouped variant.
ParamCount layer_param_count(std::size_t n, std::size_t m, std::size_t d, std::size_t d0,
                             std::size_t groups, Variant variant, std::string_view layer = "conv");

/// Applies `variant` with N = groups to every convertible convolution, with
/// d0 = d. Errors name the offending layer.
ParamCount model_param_count(const ArchSpec& arch, Variant variant, std::size_t groups);

}  // namespace t2lc::zoo

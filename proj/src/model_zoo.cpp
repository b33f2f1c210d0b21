#include "t2lc/model_zoo.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "t2lc/errors.hpp"

namespace t2lc::zoo {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::sc:
      return "sc";
    case Variant::gc:
      return "gc";
    case Variant::gc2l:
      return "gc2l";
    case Variant::shuffle:
      return "shuffle";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "sc") return Variant::sc;
  if (s == "gc") return Variant::gc;
  if (s == "gc2l" || s == "gc-2l") return Variant::gc2l;
  if (s == "shuffle") return Variant::shuffle;
  throw ConfigError("unknown convolution variant '" + std::string(name) +
                    "' (expected sc, gc, gc2l or shuffle)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::sc, Variant::gc, Variant::gc2l, Variant::shuffle};
  return v;
}

namespace {

LayerDesc conv(std::string name, std::size_t in, std::size_t out, std::size_t d,
               std::size_t stride, bool convertible) {
  return {LayerKind::conv, std::move(name), in, out, d, stride, convertible, false};
}
LayerDesc depthwise(std::string name, std::size_t c, std::size_t d, std::size_t stride) {
  return {LayerKind::depthwise_conv, std::move(name), c, c, d, stride, false, false};
}
LayerDesc bn(std::string name, std::size_t c) {
  return {LayerKind::batch_norm, std::move(name), c, c, 1, 1, false, false};
}
LayerDesc affine(std::string name, std::size_t c) {
  return {LayerKind::affine, std::move(name), c, c, 1, 1, false, false};
}
LayerDesc act(std::string name, std::size_t c) {
  return {LayerKind::activation, std::move(name), c, c, 1, 1, false, false};
}
LayerDesc pool(std::string name, std::size_t c) {
  return {LayerKind::pool, std::move(name), c, c, 1, 1, false, false};
}
LayerDesc fc(std::string name, std::size_t in, std::size_t out) {
  return {LayerKind::fc, std::move(name), in, out, 1, 1, false, true};
}

std::size_t parse_count(std::string_view s, std::string_view whole) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("cannot parse architecture name '" + std::string(whole) + "'");
  }
  return v;
}

void add(ParamCount& pc, std::string layer, std::string role, std::uint64_t total,
         double per_processor) {
  pc.total += total;
  pc.per_processor += per_processor;
  pc.by_role[role] += total;
  pc.breakdown.push_back({std::move(layer), std::move(role), total, per_processor});
}

}  // namespace

ArchSpec wideresnet(std::size_t depth, std::size_t widen, std::size_t classes) {
  if (depth < 10 || (depth - 4) % 6 != 0) {
    throw ConfigError("WideResNet depth must be 6k + 4 with k >= 1, got " + std::to_string(depth));
  }
  if (widen == 0) throw ConfigError("WideResNet widening factor must be positive");
  const std::size_t units = (depth - 4) / 6;
  ArchSpec a;
  a.name = "wideresnet-" + std::to_string(depth) + "-" + std::to_string(widen);
  a.classes = classes;
  a.layers.push_back(conv("stem", 3, 16, 3, 1, false));
  std::size_t in = 16;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t out = (16u << s) * widen;
    for (std::size_t u = 0; u < units; ++u) {
      const std::string p = "stage" + std::to_string(s + 1) + ".unit" + std::to_string(u + 1);
      const std::size_t stride = (u == 0 && s > 0) ? 2 : 1;
      const std::size_t cin = u == 0 ? in : out;
      a.layers.push_back(bn(p + ".bn1", cin));
      a.layers.push_back(act(p + ".relu1", cin));
      a.layers.push_back(conv(p + ".conv1", cin, out, 3, stride, true));
      a.layers.push_back(bn(p + ".bn2", out));
      a.layers.push_back(act(p + ".relu2", out));
      a.layers.push_back(conv(p + ".conv2", out, out, 3, 1, true));
      if (cin != out || stride != 1) {
        a.layers.push_back(conv(p + ".shortcut", cin, out, 1, stride, true));
      }
    }
    in = out;
  }
  a.layers.push_back(bn("final.bn", in));
  a.layers.push_back(act("final.relu", in));
  a.layers.push_back(pool("pool", in));
  a.layers.push_back(fc("fc", in, classes));
  return a;
}

ArchSpec mobilenetv2(std::size_t classes) {
  struct Stage {
    std::size_t expand, channels, repeats, stride;
  };
  static constexpr Stage kStages[] = {{1, 16, 1, 1},  {6, 24, 2, 2},  {6, 32, 3, 2},
                                      {6, 64, 4, 2},  {6, 96, 3, 1},  {6, 160, 3, 2},
                                      {6, 320, 1, 1}};
  ArchSpec a;
  a.name = "mobilenetv2";
  a.classes = classes;
  a.layers.push_back(conv("stem", 3, 32, 3, 2, false));
  a.layers.push_back(bn("stem.bn", 32));
  a.layers.push_back(act("stem.relu6", 32));
  std::size_t in = 32;
  std::size_t block = 0;
  for (const Stage& st : kStages) {
    for (std::size_t r = 0; r < st.repeats; ++r) {
      const std::string p = "block" + std::to_string(++block);
      const std::size_t hidden = in * st.expand;
      if (st.expand != 1) {
        a.layers.push_back(conv(p + ".expand", in, hidden, 1, 1, true));
        a.layers.push_back(bn(p + ".expand.bn", hidden));
        a.layers.push_back(act(p + ".expand.relu6", hidden));
      }
      a.layers.push_back(depthwise(p + ".dw", hidden, 3, r == 0 ? st.stride : 1));
      a.layers.push_back(bn(p + ".dw.bn", hidden));
      a.layers.push_back(act(p + ".dw.relu6", hidden));
      a.layers.push_back(conv(p + ".project", hidden, st.channels, 1, 1, true));
      a.layers.push_back(bn(p + ".project.bn", st.channels));
      in = st.channels;
    }
  }
  a.layers.push_back(conv("head", in, 1280, 1, 1, true));
  a.layers.push_back(bn("head.bn", 1280));
  a.layers.push_back(act("head.relu6", 1280));
  a.layers.push_back(pool("pool", 1280));
  a.layers.push_back(fc("fc", 1280, classes));
  return a;
}

ArchSpec build_toy_arch(std::size_t depth, std::size_t width, Variant variant, std::size_t groups,
                        std::size_t input_channels, std::size_t classes) {
  if (depth == 0 || width == 0 || groups == 0 || classes == 0) {
    throw ConfigError("toy architecture needs positive depth, width, groups and classes");
  }
  if (width % groups != 0) {
    throw ConfigError("toy architecture: groups N=" + std::to_string(groups) +
                      " must divide width " + std::to_string(width));
  }
  ArchSpec a;
  a.name = "toy";
  a.input_channels = input_channels;
  a.classes = classes;
  a.variant = variant;
  a.groups = groups;
  a.layers.push_back(conv("stem", input_channels, width, 3, 1, false));
  a.layers.push_back(affine("stem.affine", width));
  a.layers.push_back(act("stem.relu", width));
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string p = "layer" + std::to_string(i + 1);
    a.layers.push_back(conv(p + ".conv", width, width, 3, 1, true));
    a.layers.push_back(affine(p + ".affine", width));
    a.layers.push_back(act(p + ".relu", width));
  }
  a.layers.push_back(pool("pool", width));
  a.layers.push_back(fc("fc", width, classes));
  return a;
}

ArchSpec preset(std::string_view name) {
  if (name == "mobilenetv2") return mobilenetv2();
  if (name == "toy") return build_toy_arch(3, 16, Variant::sc, 1);
  constexpr std::string_view kWrn = "wideresnet-";
  if (name.substr(0, kWrn.size()) == kWrn) {
    const std::string_view rest = name.substr(kWrn.size());
    const auto dash = rest.find('-');
    if (dash == std::string_view::npos) {
      throw ConfigError("expected wideresnet-<depth>-<width>, got '" + std::string(name) + "'");
    }
    return wideresnet(parse_count(rest.substr(0, dash), name),
                      parse_count(rest.substr(dash + 1), name));
  }
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (expected wideresnet-<l>-<w>, mobilenetv2 or toy)");
}

ParamCount layer_param_count(std::size_t n, std::size_t m, std::size_t d, std::size_t d0,
                             std::size_t groups, Variant variant, std::string_view layer) {
  if (groups == 0) throw ConfigError(std::string(layer) + ": number of groups must be positive");
  const std::uint64_t dd = d * d;
  const std::uint64_t full = dd * m * n;
  const double nn = static_cast<double>(groups);
  ParamCount pc;
  if (variant == Variant::sc) {
    add(pc, std::string(layer), "conv", full, static_cast<double>(full) / nn);
    return pc;
  }
  if (n % groups != 0 || m % groups != 0) {
    throw ConfigError(std::string(layer) + ": N=" + std::to_string(groups) +
                      " does not divide n=" + std::to_string(n) + " and m=" + std::to_string(m));
  }
  const std::uint64_t local = full / groups;
  add(pc, std::string(layer), "local", local, static_cast<double>(local) / nn);
  if (variant == Variant::gc2l) {
    const std::uint64_t restrict_total = d0 * d0 * n;
    const std::uint64_t mix_total = static_cast<std::uint64_t>(m) * groups;
    add(pc, std::string(layer), "coarse_restrict", restrict_total,
        static_cast<double>(restrict_total) / nn);
    add(pc, std::string(layer), "coarse_mix", mix_total, static_cast<double>(m));
  }
  return pc;
}

ParamCount model_param_count(const ArchSpec& arch, Variant variant, std::size_t groups) {
  if (groups == 0) throw ConfigError("number of groups must be positive");
  const double nn = static_cast<double>(groups);
  ParamCount pc;
  const auto shared = [&](const LayerDesc& l, const char* role, std::uint64_t count) {
    add(pc, l.name, role, count, static_cast<double>(count) / nn);
  };
  for (const LayerDesc& l : arch.layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        const Variant v = l.convertible ? variant : Variant::sc;
        const ParamCount lc = layer_param_count(l.in, l.out, l.d, l.d, groups, v, l.name);
        for (const LayerCount& c : lc.breakdown) add(pc, c.layer, c.role, c.total, c.per_processor);
        break;
      }
      case LayerKind::depthwise_conv:
        shared(l, "depthwise", static_cast<std::uint64_t>(l.d) * l.d * l.in);
        break;
      case LayerKind::batch_norm:
        shared(l, "bn", 2u * l.in);
        break;
      case LayerKind::affine:
        shared(l, "affine", 2u * l.in);
        break;
      case LayerKind::fc:
        shared(l, "fc", static_cast<std::uint64_t>(l.in) * l.out + (l.bias ? l.out : 0));
        break;
      case LayerKind::activation:
      case LayerKind::pool:
        break;
    }
  }
  return pc;
}

}  // namespace t2lc::zoo

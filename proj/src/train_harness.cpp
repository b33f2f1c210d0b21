#include "t2lc/train_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "t2lc/autodiff.hpp"
#include "t2lc/conv_ops.hpp"
#include "t2lc/errors.hpp"
#include "t2lc/serialize.hpp"

namespace t2lc::train {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t counter_draw(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(mix64(seed ^ 0x243f6a8885a308d3ULL) ^ a) ^ b) ^ c;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// --- hyperparameters -----------------------------------------------------------

void Hyper::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight decay must be finite and >= 0");
  }
  for (const LrDrop& d : drops) {
    if (!(d.factor > 0.0) || !std::isfinite(d.factor)) {
      throw ConfigError("learning-rate drop factors must be finite and > 0");
    }
  }
}

double Hyper::lr_at(std::size_t epoch) const {
  double r = lr;
  for (const LrDrop& d : drops) {
    if (epoch >= d.epoch) r *= d.factor;
  }
  return r;
}

// --- data ------------------------------------------------------------------------

Dataset synth_dataset(std::uint64_t seed, std::size_t classes, std::size_t per_class,
                      std::size_t channels, std::size_t hw, std::size_t test_per_class,
                      double noise) {
  if (classes == 0 || classes > 256 || per_class == 0 || channels == 0 || hw == 0) {
    throw ConfigError("synthetic dataset needs 1..256 classes and positive sizes");
  }
  std::mt19937_64 rng = stream(seed, 0x5a, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t plane = hw * hw;
  const std::size_t sample = channels * plane;

  std::vector<std::vector<double>> templates(classes, std::vector<double>(sample));
  for (auto& t : templates) {
    std::vector<double> raw(sample);
    for (double& v : raw) v = normal(rng);
    double sq = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t y = 0; y < hw; ++y) {
        for (std::size_t x = 0; x < hw; ++x) {
          double s = 0.0;
          for (std::size_t yy = y == 0 ? 0 : y - 1; yy <= std::min(hw - 1, y + 1); ++yy) {
            for (std::size_t xx = x == 0 ? 0 : x - 1; xx <= std::min(hw - 1, x + 1); ++xx) {
              s += raw[c * plane + yy * hw + xx];
            }
          }
          t[c * plane + y * hw + x] = s;
          sq += s * s;
        }
      }
    }
    const double scale = 1.0 / std::sqrt(sq / static_cast<double>(sample));
    for (double& v : t) v *= scale;
  }

  const auto fill = [&](Split& split, std::size_t count) {
    split.channels = channels;
    split.height = hw;
    split.width = hw;
    split.pixels.resize(count * classes * sample);
    split.labels.resize(count * classes);
    for (std::size_t i = 0; i < count * classes; ++i) {
      const std::size_t label = i % classes;
      split.labels[i] = static_cast<std::uint8_t>(label);
      for (std::size_t j = 0; j < sample; ++j) {
        split.pixels[i * sample + j] =
            static_cast<float>(templates[label][j] + noise * normal(rng));
      }
    }
  };
  Dataset data;
  data.classes = classes;
  fill(data.train, per_class);
  fill(data.test, test_per_class);
  data.provenance = "synthetic(seed=" + std::to_string(seed) + ",classes=" +
                    std::to_string(classes) + ",per_class=" + std::to_string(per_class) +
                    ",channels=" + std::to_string(channels) + ",hw=" + std::to_string(hw) +
                    ",noise=" + std::to_string(noise) + ")";
  return data;
}

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarSample = 3 * kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = kCifarSample + 1;

void read_cifar_file(const std::filesystem::path& path, Split& split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open CIFAR-10 file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::size_t whole = bytes.size() / kCifarRecord;
  if (bytes.size() % kCifarRecord != 0 || whole == 0) {
    throw IngestError(path.string() + ": truncated record at byte offset " +
                      std::to_string(whole * kCifarRecord) + " (file has " +
                      std::to_string(bytes.size()) + " bytes, records are 3073 bytes)");
  }
  const std::size_t base = split.size();
  split.labels.resize(base + whole);
  split.pixels.resize((base + whole) * kCifarSample);
  for (std::size_t r = 0; r < whole; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      throw IngestError(path.string() + ": label " + std::to_string(rec[0]) +
                        " out of range at byte offset " + std::to_string(r * kCifarRecord));
    }
    split.labels[base + r] = rec[0];
    float* dst = split.pixels.data() + (base + r) * kCifarSample;
    for (std::size_t j = 0; j < kCifarSample; ++j) dst[j] = static_cast<float>(rec[1 + j] / 255.0);
  }
}

}  // namespace

Dataset load_cifar10(const std::filesystem::path& dir, CifarOptions options) {
  Dataset data;
  data.classes = 10;
  for (Split* s : {&data.train, &data.test}) {
    s->channels = 3;
    s->height = kCifarSide;
    s->width = kCifarSide;
  }
  for (int i = 1; i <= 5; ++i) {
    read_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), data.train);
  }
  read_cifar_file(dir / "test_batch.bin", data.test);

  if (options.normalize) {
    const std::size_t plane = kCifarSide * kCifarSide;
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < data.train.size(); ++i) {
        const float* p = data.train.pixels.data() + i * kCifarSample + c * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          sum += p[j];
          sq += static_cast<double>(p[j]) * p[j];
        }
      }
      const double count = static_cast<double>(data.train.size() * plane);
      const double mean = sum / count;
      const double sd = std::sqrt(std::max(sq / count - mean * mean, 1e-12));
      for (Split* s : {&data.train, &data.test}) {
        for (std::size_t i = 0; i < s->size(); ++i) {
          float* p = s->pixels.data() + i * kCifarSample + c * plane;
          for (std::size_t j = 0; j < plane; ++j) p[j] = static_cast<float>((p[j] - mean) / sd);
        }
      }
    }
  }
  data.augment.enabled = options.augment;
  data.provenance = "cifar10(" + dir.string() + (options.normalize ? ",normalized" : "") +
                    (options.augment ? ",augmented" : "") + ")";
  return data;
}

Tensor make_batch(const Split& split, std::span<const std::size_t> indices, const Augment& augment,
                  std::uint64_t seed, std::size_t epoch) {
  const std::size_t c = split.channels, h = split.height, w = split.width;
  Tensor x = Tensor::batched(indices.size(), c, h, w);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t idx = indices[b];
    if (idx >= split.size()) throw ConfigError("sample index out of range");
    const float* src = split.pixels.data() + idx * split.sample_size();
    double* dst = x.sample(b);
    if (!augment.enabled) {
      for (std::size_t j = 0; j < split.sample_size(); ++j) dst[j] = src[j];
      continue;
    }
    const std::uint64_t r = counter_draw(seed, epoch, idx, 0);
    const std::size_t span = 2 * augment.pad + 1;
    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(r % span) -
                              static_cast<std::ptrdiff_t>(augment.pad);
    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>((r >> 16) % span) -
                              static_cast<std::ptrdiff_t>(augment.pad);
    const bool flip = augment.flip && ((r >> 32) & 1u);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          const std::size_t ox = flip ? w - 1 - xx : xx;
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(ox) + dx;
          double v = 0.0;
          if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) &&
              sx < static_cast<std::ptrdiff_t>(w)) {
            v = src[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
          }
          dst[(ch * h + y) * w + xx] = v;
        }
      }
    }
  }
  return x;
}

// --- layers ------------------------------------------------------------------------

namespace {

class ConvLayer : public Layer {
 public:
  ConvLayer(std::string name, const GroupSpec& spec, zoo::Variant variant, std::mt19937_64& rng,
            const NetOptions& options)
      : name_(std::move(name)), spec_(spec), variant_(variant) {
    spec_.validate();
    coarse_ = variant_ == zoo::Variant::gc2l;
    params_ = TwoLevelParams::he_init(spec_, rng, !coarse_ || options.zero_coarse);
    grads_ = TwoLevelParams::zeros(spec_);
    if (options.distributed && (variant_ == zoo::Variant::gc2l || variant_ == zoo::Variant::gc)) {
      cluster_ = std::make_unique<dist::Cluster>(
          spec_, params_, options.schedule,
          coarse_ ? dist::Cluster::Mode::two_level : dist::Cluster::Mode::group_only);
    }
  }

  Tensor forward(const Tensor& x) override {
    input_ = x;
    if (cluster_) {
      cluster_->set_params(params_);
      return cluster_->forward(x);
    }
    switch (variant_) {
      case zoo::Variant::gc2l:
        return two_level(x, spec_, params_);
      case zoo::Variant::shuffle:
        return channel_shuffle(group_conv(x, spec_, params_.local), spec_.groups);
      default:
        return group_conv(x, spec_, params_.local);
    }
  }

  Tensor backward(const Tensor& upstream) override {
    if (cluster_ || variant_ == zoo::Variant::gc2l) {
      grad::TwoLevelGrad g = cluster_ ? cluster_->backward(upstream)
                                      : grad::two_level_vjp(input_, spec_, params_, upstream);
      accumulate(g.d_params.local, grads_.local);
      if (coarse_) {
        accumulate(g.d_params.coarse_restrict, grads_.coarse_restrict);
        for (std::size_t k = 0; k < spec_.groups; ++k) {
          add_into(grads_.coarse_mix[k].entries(), g.d_params.coarse_mix[k].entries());
        }
      }
      return std::move(g.d_input);
    }
    const Tensor u = variant_ == zoo::Variant::shuffle
                         ? grad::channel_shuffle_vjp(upstream, spec_.groups)
                         : upstream;
    grad::GroupConvGrad g = grad::group_conv_vjp(input_, spec_, params_.local, u);
    accumulate(g.d_local, grads_.local);
    return std::move(g.d_input);
  }

  void collect(std::vector<ParamRef>& out) override {
    for (std::size_t k = 0; k < spec_.groups; ++k) {
      out.push_back({name_ + ".local." + std::to_string(k), params_.local[k].weights(),
                     grads_.local[k].weights()});
    }
    if (!coarse_) return;
    for (std::size_t k = 0; k < spec_.groups; ++k) {
      out.push_back({name_ + ".coarse_restrict." + std::to_string(k),
                     params_.coarse_restrict[k].weights(), grads_.coarse_restrict[k].weights()});
    }
    for (std::size_t k = 0; k < spec_.groups; ++k) {
      out.push_back({name_ + ".coarse_mix." + std::to_string(k), params_.coarse_mix[k].entries(),
                     grads_.coarse_mix[k].entries()});
    }
  }

  dist::Cluster* cluster() { return cluster_.get(); }

 private:
  static void accumulate(const std::vector<ConvKernel>& src, std::vector<ConvKernel>& dst) {
    for (std::size_t k = 0; k < src.size(); ++k) add_into(dst[k].weights(), src[k].weights());
  }

  std::string name_;
  GroupSpec spec_;
  zoo::Variant variant_;
  bool coarse_ = false;
  TwoLevelParams params_;
  TwoLevelParams grads_;
  std::unique_ptr<dist::Cluster> cluster_;
  Tensor input_;
};

class AffineLayer : public Layer {
 public:
  AffineLayer(std::string name, std::size_t channels)
      : name_(std::move(name)), scale_(channels, 1.0), shift_(channels, 0.0),
        d_scale_(channels, 0.0), d_shift_(channels, 0.0) {}

  Tensor forward(const Tensor& x) override {
    if (x.channels() != scale_.size()) throw ConfigError(name_ + ": channel mismatch");
    input_ = x;
    Tensor y = Tensor::zeros_like(x);
    const std::size_t plane = x.shape().plane();
    for (std::size_t b = 0; b < x.batch(); ++b) {
      for (std::size_t c = 0; c < x.channels(); ++c) {
        const double* src = x.channel(b, c);
        double* dst = y.channel(b, c);
        for (std::size_t j = 0; j < plane; ++j) dst[j] = scale_[c] * src[j] + shift_[c];
      }
    }
    return y;
  }

  Tensor backward(const Tensor& upstream) override {
    Tensor dx = Tensor::zeros_like(upstream);
    const std::size_t plane = upstream.shape().plane();
    for (std::size_t b = 0; b < upstream.batch(); ++b) {
      for (std::size_t c = 0; c < upstream.channels(); ++c) {
        const double* u = upstream.channel(b, c);
        const double* x = input_.channel(b, c);
        double* d = dx.channel(b, c);
        double gs = 0.0, gb = 0.0;
        for (std::size_t j = 0; j < plane; ++j) {
          gs += u[j] * x[j];
          gb += u[j];
          d[j] = scale_[c] * u[j];
        }
        d_scale_[c] += gs;
        d_shift_[c] += gb;
      }
    }
    return dx;
  }

  void collect(std::vector<ParamRef>& out) override {
    out.push_back({name_ + ".scale", scale_, d_scale_});
    out.push_back({name_ + ".shift", shift_, d_shift_});
  }

 private:
  std::string name_;
  std::vector<double> scale_, shift_, d_scale_, d_shift_;
  Tensor input_;
};

class ReluLayer : public Layer {
 public:
  Tensor forward(const Tensor& x) override {
    Tensor y = x;
    for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    output_ = y;
    return y;
  }
  Tensor backward(const Tensor& upstream) override {
    Tensor dx = upstream;
    const auto out = output_.values();
    auto d = dx.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(out[i] > 0.0)) d[i] = 0.0;
    }
    return dx;
  }

 private:
  Tensor output_;
};

class PoolLayer : public Layer {
 public:
  Tensor forward(const Tensor& x) override {
    shape_ = x.shape();
    Tensor y = Tensor::batched(x.batch(), x.channels(), 1, 1);
    const std::size_t plane = x.shape().plane();
    for (std::size_t b = 0; b < x.batch(); ++b) {
      for (std::size_t c = 0; c < x.channels(); ++c) {
        const double* p = x.channel(b, c);
        double s = 0.0;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
        y.at(b, c, 0, 0) = s / static_cast<double>(plane);
      }
    }
    return y;
  }
  Tensor backward(const Tensor& upstream) override {
    Tensor dx = Tensor::batched(shape_.batch, shape_.channels, shape_.height, shape_.width);
    const double inv = 1.0 / static_cast<double>(shape_.plane());
    for (std::size_t b = 0; b < shape_.batch; ++b) {
      for (std::size_t c = 0; c < shape_.channels; ++c) {
        const double g = upstream.at(b, c, 0, 0) * inv;
        double* d = dx.channel(b, c);
        for (std::size_t j = 0; j < shape_.plane(); ++j) d[j] = g;
      }
    }
    return dx;
  }

 private:
  Shape shape_;
};

class FcLayer : public Layer {
 public:
  FcLayer(std::string name, std::size_t in, std::size_t out, bool bias, std::mt19937_64& rng)
      : name_(std::move(name)), in_(in), out_(out), bias_(bias),
        weight_(in * out), bias_values_(bias ? out : 0, 0.0), d_weight_(in * out, 0.0),
        d_bias_(bias ? out : 0, 0.0) {
    fill_normal(weight_, rng, std::sqrt(1.0 / static_cast<double>(in)));
  }

  Tensor forward(const Tensor& x) override {
    if (x.shape().sample_size() != in_) throw ConfigError(name_ + ": input size mismatch");
    input_ = x;
    Tensor y = Tensor::batched(x.batch(), out_, 1, 1);
    for (std::size_t b = 0; b < x.batch(); ++b) {
      const double* h = x.sample(b);
      for (std::size_t o = 0; o < out_; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < in_; ++i) s += weight_[o * in_ + i] * h[i];
        y.at(b, o, 0, 0) = bias_ ? s + bias_values_[o] : s;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& upstream) override {
    Tensor dx = Tensor::zeros_like(input_);
    for (std::size_t b = 0; b < input_.batch(); ++b) {
      const double* h = input_.sample(b);
      double* d = dx.sample(b);
      for (std::size_t o = 0; o < out_; ++o) {
        const double u = upstream.at(b, o, 0, 0);
        if (bias_) d_bias_[o] += u;
        for (std::size_t i = 0; i < in_; ++i) {
          d_weight_[o * in_ + i] += u * h[i];
          d[i] += weight_[o * in_ + i] * u;
        }
      }
    }
    return dx;
  }

  void collect(std::vector<ParamRef>& out) override {
    out.push_back({name_ + ".weight", weight_, d_weight_});
    if (bias_) out.push_back({name_ + ".bias", bias_values_, d_bias_});
  }

 private:
  std::string name_;
  std::size_t in_, out_;
  bool bias_;
  std::vector<double> weight_, bias_values_, d_weight_, d_bias_;
  Tensor input_;
};

}  // namespace

// --- network ---------------------------------------------------------------------

Network Network::build(const zoo::ArchSpec& arch, std::uint64_t seed, NetOptions options) {
  Network net;
  net.arch_ = arch;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const zoo::LayerDesc& l = arch.layers[li];
    std::mt19937_64 rng = stream(seed, 0x1a, li);
    switch (l.kind) {
      case zoo::LayerKind::conv: {
        if (l.stride != 1) throw ConfigError(l.name + ": the trainer supports stride 1 only");
        zoo::Variant v = l.convertible ? arch.variant : zoo::Variant::sc;
        const std::size_t groups = v == zoo::Variant::sc ? 1 : arch.groups;
        const GroupSpec spec{l.in, l.out, groups, l.d, l.d};
        if (l.in % groups != 0 || l.out % groups != 0) {
          throw ConfigError(l.name + ": N=" + std::to_string(groups) + " does not divide n=" +
                            std::to_string(l.in) + " and m=" + std::to_string(l.out));
        }
        net.layers_.push_back(std::make_unique<ConvLayer>(l.name, spec, v, rng, options));
        break;
      }
      case zoo::LayerKind::affine:
        net.layers_.push_back(std::make_unique<AffineLayer>(l.name, l.in));
        break;
      case zoo::LayerKind::activation:
        net.layers_.push_back(std::make_unique<ReluLayer>());
        break;
      case zoo::LayerKind::pool:
        net.layers_.push_back(std::make_unique<PoolLayer>());
        break;
      case zoo::LayerKind::fc:
        net.layers_.push_back(std::make_unique<FcLayer>(l.name, l.in, l.out, l.bias, rng));
        break;
      default:
        throw ConfigError(l.name + ": layer kind not supported by the trainer");
    }
  }
  return net;
}

Tensor Network::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

void Network::backward(const Tensor& d_logits) {
  Tensor g = d_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

void Network::zero_grad() {
  for (ParamRef& p : params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (auto& layer : layers_) layer->collect(out);
  return out;
}

dist::CommReport Network::take_comm_report() {
  std::vector<dist::TraceEntry> all;
  for (auto& layer : layers_) {
    if (auto* conv = dynamic_cast<ConvLayer*>(layer.get()); conv && conv->cluster()) {
      const auto t = conv->cluster()->trace();
      all.insert(all.end(), t.begin(), t.end());
      conv->cluster()->clear_trace();
    }
  }
  return dist::summarize(all, 1);
}

std::vector<double> snapshot(Network& net) {
  std::vector<double> out;
  for (const ParamRef& p : net.params()) out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

void restore(Network& net, std::span<const double> values) {
  std::size_t offset = 0;
  auto params = net.params();
  std::size_t total = 0;
  for (const ParamRef& p : params) total += p.value.size();
  if (total != values.size()) {
    throw ConfigError("restore: expected " + std::to_string(total) + " values, got " +
                      std::to_string(values.size()));
  }
  for (ParamRef& p : params) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), p.value.size(),
                p.value.begin());
    offset += p.value.size();
  }
}

void save_checkpoint(const std::filesystem::path& path, Network& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestError("cannot write checkpoint " + path.string());
  for (const ParamRef& p : net.params()) {
    write_record(os, Record{{static_cast<std::uint32_t>(p.value.size())},
                            std::vector<double>(p.value.begin(), p.value.end())});
  }
}

void load_checkpoint(const std::filesystem::path& path, Network& net) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open checkpoint " + path.string());
  auto params = net.params();
  std::vector<Record> records;
  for (const ParamRef& p : params) {
    Record r = read_record(is);
    if (r.values.size() != p.value.size()) {
      throw IngestError(path.string() + ": parameter " + p.name + " has " +
                        std::to_string(r.values.size()) + " values, expected " +
                        std::to_string(p.value.size()));
    }
    records.push_back(std::move(r));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw IngestError(path.string() + ": trailing data after the last parameter");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(records[i].values.begin(), records[i].values.end(), params[i].value.begin());
  }
}

void transplant(Network& source, Network& target) {
  const auto src = source.params();
  for (ParamRef& t : target.params()) {
    const auto it = std::find_if(src.begin(), src.end(),
                                 [&](const ParamRef& s) { return s.name == t.name; });
    if (it == src.end()) {
      std::fill(t.value.begin(), t.value.end(), 0.0);
      continue;
    }
    if (it->value.size() != t.value.size()) {
      throw ConfigError("transplant: parameter " + t.name + " differs in size");
    }
    std::copy(it->value.begin(), it->value.end(), t.value.begin());
  }
}

// --- loss and optimizer ------------------------------------------------------------

LossResult cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels,
                         Tensor* d_logits) {
  const std::size_t batch = logits.batch();
  const std::size_t classes = logits.shape().sample_size();
  if (labels.size() != batch) throw ConfigError("cross_entropy: label count mismatch");
  if (d_logits) *d_logits = Tensor::zeros_like(logits);
  LossResult r;
  r.per_sample.resize(batch);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.sample(b);
    const std::size_t label = labels[b];
    if (label >= classes) throw ConfigError("cross_entropy: label out of range");
    const double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - zmax);
    r.per_sample[b] = std::log(denom) + zmax - z[label];
    if (static_cast<std::size_t>(std::max_element(z, z + classes) - z) == label) ++correct;
    if (d_logits) {
      double* d = d_logits->sample(b);
      const double inv_b = 1.0 / static_cast<double>(batch);
      for (std::size_t c = 0; c < classes; ++c) {
        d[c] = (std::exp(z[c] - zmax) / denom - (c == label ? 1.0 : 0.0)) * inv_b;
      }
    }
  }
  double sum = 0.0;
  for (double v : r.per_sample) sum += v;
  r.loss = batch == 0 ? 0.0 : sum / static_cast<double>(batch);
  r.accuracy = batch == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(batch);
  return r;
}

LossResult evaluate(Network& net, const Split& split, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
  LossResult total;
  total.per_sample.reserve(split.size());
  double correct = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    idx.resize(std::min(batch_size, split.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = net.forward(make_batch(split, idx));
    const LossResult r = cross_entropy(
        logits, std::span<const std::uint8_t>(split.labels).subspan(start, idx.size()));
    total.per_sample.insert(total.per_sample.end(), r.per_sample.begin(), r.per_sample.end());
    correct += r.accuracy * static_cast<double>(idx.size());
  }
  double sum = 0.0;
  for (double v : total.per_sample) sum += v;
  const double n = static_cast<double>(split.size());
  total.loss = split.size() == 0 ? 0.0 : sum / n;
  total.accuracy = split.size() == 0 ? 0.0 : std::round(correct) / n;
  return total;
}

void Sgd::step(std::span<const ParamRef> params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const ParamRef& p : params) velocity_.emplace_back(p.value.size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    std::vector<double>& v = velocity_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      v[j] = hyper_.momentum * v[j] + (p.grad[j] + hyper_.weight_decay * p.value[j]);
      p.value[j] -= lr * v[j];
    }
  }
}

// --- runs --------------------------------------------------------------------------

double History::final_train_loss() const {
  return epochs.empty() ? std::nan("") : epochs.back().train_loss;
}

History train(const zoo::ArchSpec& arch, const Dataset& data, const Hyper& hyper,
              const TrainOptions& options) {
  hyper.validate();
  NetOptions net_options{options.distributed, options.schedule, options.zero_coarse};
  Network net = Network::build(arch, hyper.seed, net_options);
  RunMeta meta{arch.name, std::string(zoo::variant_name(arch.variant)), arch.groups, hyper,
               data.provenance, options.distributed};
  return train_network(net, data, hyper, std::move(meta), options);
}

History train_network(Network& net, const Dataset& data, const Hyper& hyper, RunMeta meta,
                      const TrainOptions& options) {
  hyper.validate();
  if (data.train.size() == 0) throw ConfigError("training split is empty");
  History hist;
  hist.meta = std::move(meta);
  Sgd sgd(hyper);
  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  std::vector<double> losses(n);
  std::vector<std::size_t> batch_idx;
  std::vector<std::uint8_t> batch_labels;
  const auto params = net.params();
  net.take_comm_report();

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = hyper.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng = stream(hyper.seed, 0x0d, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t correct = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < n; start += hyper.batch_size, ++step) {
      const std::size_t count = std::min(hyper.batch_size, n - start);
      batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(start + count));
      batch_labels.resize(count);
      for (std::size_t b = 0; b < count; ++b) batch_labels[b] = data.train.labels[batch_idx[b]];
      const Tensor x = make_batch(data.train, batch_idx, data.augment, hyper.seed, epoch);
      const Tensor logits = net.forward(x);
      Tensor d_logits;
      const LossResult r = cross_entropy(logits, batch_labels, &d_logits);
      if (!std::isfinite(r.loss)) {
        hist.diverged = Divergence{epoch, step};
        return hist;
      }
      for (std::size_t b = 0; b < count; ++b) losses[batch_idx[b]] = r.per_sample[b];
      correct += static_cast<std::size_t>(std::lround(r.accuracy * static_cast<double>(count)));
      net.zero_grad();
      net.backward(d_logits);
      sgd.step(params, lr);
    }
    double sum = 0.0;
    for (double v : losses) sum += v;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = sum / static_cast<double>(n);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    const dist::CommReport comm = net.take_comm_report();
    hist.comm.messages += comm.messages;
    hist.comm.activation_scalars += comm.activation_scalars;
    for (const auto& [phase, stats] : comm.phases) {
      hist.comm.phases[phase].messages += stats.messages;
      hist.comm.phases[phase].scalars += stats.scalars;
    }
    rec.test_accuracy = data.test.size() ? evaluate(net, data.test).accuracy : 0.0;
    net.take_comm_report();
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  hist.comm.samples = n * hyper.epochs;
  return hist;
}

// --- comparisons -------------------------------------------------------------------

CompareReport compare_variants(const CompareConfig& config, const Dataset& data,
                               const Hyper& hyper) {
  CompareReport report;
  for (zoo::Variant v : config.variants) {
    const std::vector<std::size_t> group_list =
        v == zoo::Variant::sc ? std::vector<std::size_t>{1} : config.groups;
    for (std::size_t groups : group_list) {
      CompareSummary summary{std::string(zoo::variant_name(v)), groups, 0, 0.0, 0.0};
      for (std::uint64_t seed : config.seeds) {
        CompareRow row{summary.variant, groups, seed};
        try {
          const zoo::ArchSpec arch = zoo::build_toy_arch(config.depth, config.width, v, groups,
                                                         data.train.channels, data.classes);
          Hyper h = hyper;
          h.seed = seed;
          const History hist = train(arch, data, h);
          if (hist.diverged) {
            row.status = "diverged at epoch " + std::to_string(hist.diverged->epoch) + " step " +
                         std::to_string(hist.diverged->step);
          } else if (hist.epochs.empty()) {
            row.status = "no epochs run";
          } else {
            row.final_train_loss = hist.epochs.back().train_loss;
            row.final_train_accuracy = hist.epochs.back().train_accuracy;
            row.final_test_accuracy = hist.epochs.back().test_accuracy;
          }
        } catch (const std::exception& e) {
          row.status = std::string("error: ") + e.what();
        }
        if (row.status == "ok") {
          ++summary.runs;
          summary.mean_train_loss += row.final_train_loss;
          summary.mean_test_accuracy += row.final_test_accuracy;
        }
        report.rows.push_back(std::move(row));
      }
      if (summary.runs) {
        summary.mean_train_loss /= static_cast<double>(summary.runs);
        summary.mean_test_accuracy /= static_cast<double>(summary.runs);
      }
      report.summary.push_back(summary);
    }
  }
  return report;
}

Dataset desk_dataset() { return synth_dataset(7, 10, 60, 3, 8, 20, 2.5); }

Hyper desk_hyper() {
  Hyper h;
  h.batch_size = 32;
  h.lr = 0.005;
  h.epochs = 30;
  return h;
}

CompareConfig desk_compare_config() {
  CompareConfig c;
  c.variants = {zoo::Variant::sc, zoo::Variant::gc, zoo::Variant::gc2l};
  return c;
}

}  // namespace t2lc::train

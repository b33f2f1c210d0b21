#pragma once

// SGD training of small networks built from the convolution variants, on a
// synthetic task or CIFAR-10 binaries.
//
// Optimizer (coupled weight decay, per parameter):
//   v <- momentum * v + (g + weight_decay * theta)
//   theta <- theta - lr * v
//
// The per-epoch train loss is the mean of per-sample losses recorded during
// that epoch's minibatch forward passes, summed in sample-index order so the
// value does not depend on the order in which minibatches were visited.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "t2lc/dist_sim.hpp"
#include "t2lc/model_zoo.hpp"
#include "t2lc/tensor.hpp"

namespace t2lc::train {

struct LrDrop {
  std::size_t epoch = 0;  // first epoch (0-based) at which the factor applies
  double factor = 0.1;
};

struct Hyper {
  std::size_t batch_size = 128;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  std::size_t epochs = 30;
  double lr = 0.1;
  std::vector<LrDrop> drops;
  std::uint64_t seed = 1;

  /// Throws ConfigError on batch_size 0, momentum outside [0, 1), negative or
  /// non-finite rates.
  void validate() const;
  double lr_at(std::size_t epoch) const;
};

/// Samples stored as floats in (sample, channel, row, col) order.
struct Split {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return channels * height * width; }
};

/// Zero-pad by `pad` pixels, crop back at a random offset, flip horizontally
/// with probability 1/2. Draws depend only on (seed, epoch, sample index).
struct Augment {
  bool enabled = false;
  std::size_t pad = 4;
  bool flip = true;
};

struct Dataset {
  Split train;
  Split test;
  std::size_t classes = 10;
  std::string provenance;
  Augment augment;
};

/// Each class has a smooth random template; samples are template plus
/// independent Gaussian pixel noise. Deterministic in `seed`.
Dataset synth_dataset(std::uint64_t seed, std::size_t classes = 10, std::size_t per_class = 50,
                      std::size_t channels = 3, std::size_t hw = 8,
                      std::size_t test_per_class = 20, double noise = 1.0);

struct CifarOptions {
  bool normalize = true;  // per-channel mean/std of the training split
  bool augment = false;
};

/// Reads data_batch_1..5.bin and test_batch.bin (3073-byte records: label
/// byte, then 1024 R, 1024 G, 1024 B bytes). Pixels are scaled to [0, 1]
/// before normalization. Throws IngestError naming the file and byte offset
/// on missing or truncated input.
Dataset load_cifar10(const std::filesystem::path& dir, CifarOptions options = {});

/// Batched tensor of the given samples, augmented when `augment.enabled`.
Tensor make_batch(const Split& split, std::span<const std::size_t> indices,
                  const Augment& augment = {}, std::uint64_t seed = 0, std::size_t epoch = 0);

// --- network -------------------------------------------------------------------

struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  /// Gradient w.r.t. the last forward input; parameter gradients accumulate.
  virtual Tensor backward(const Tensor& upstream) = 0;
  virtual void collect(std::vector<ParamRef>& out) { (void)out; }
};

struct NetOptions {
  /// Run GC-2L and GC convolutions on simulated workers.
  bool distributed = false;
  dist::ScheduleOptions schedule;
  /// Start GC-2L coarse parameters at zero.
  bool zero_coarse = false;
};

class Network {
 public:
  /// Supports conv (stride 1), affine, activation (ReLU), pool (global
  /// average) and fc layers; convertible convs use arch.variant/arch.groups.
  /// Each layer draws its initial values from its own stream seeded by
  /// (seed, layer index), so variants share every draw they have in common.
  static Network build(const zoo::ArchSpec& arch, std::uint64_t seed, NetOptions options = {});

  /// (batch, classes, 1, 1) logits.
  Tensor forward(const Tensor& x);
  void backward(const Tensor& d_logits);
  void zero_grad();
  std::vector<ParamRef> params();

  const zoo::ArchSpec& arch() const { return arch_; }
  /// Communication recorded by the simulated workers since the last call.
  dist::CommReport take_comm_report();

 private:
  zoo::ArchSpec arch_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Flat copy of every parameter value, in params() order.
std::vector<double> snapshot(Network& net);
void restore(Network& net, std::span<const double> values);

void save_checkpoint(const std::filesystem::path& path, Network& net);
void load_checkpoint(const std::filesystem::path& path, Network& net);

/// Copies every parameter of `source` into the parameter of `target` with the
/// same name; target parameters without a match (the coarse blocks when the
/// source is GC) are set to zero.
void transplant(Network& source, Network& target);

struct LossResult {
  double loss = 0.0;  // mean cross-entropy
  double accuracy = 0.0;
  std::vector<double> per_sample;
};

/// Softmax cross-entropy of `logits` against `labels`; fills d_logits with the
/// gradient of the mean loss when non-null.
LossResult cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels,
                         Tensor* d_logits = nullptr);

/// Mean loss and accuracy over a split, in batches of `batch_size`.
LossResult evaluate(Network& net, const Split& split, std::size_t batch_size = 256);

class Sgd {
 public:
  explicit Sgd(const Hyper& hyper) : hyper_(hyper) {}
  void step(std::span<const ParamRef> params, double lr);

 private:
  Hyper hyper_;
  std::vector<std::vector<double>> velocity_;
};

// --- runs --------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double wall_seconds = 0.0;
};

struct RunMeta {
  std::string arch;
  std::string variant;
  std::size_t groups = 1;
  Hyper hyper;
  std::string data;
  bool distributed = false;
};

struct Divergence {
  std::size_t epoch = 0;
  std::size_t step = 0;
};

struct History {
  RunMeta meta;
  std::vector<EpochRecord> epochs;
  std::optional<Divergence> diverged;
  dist::CommReport comm;  // accumulated over the run when distributed

  double final_train_loss() const;
};

struct TrainOptions {
  bool distributed = false;
  dist::ScheduleOptions schedule;
  bool zero_coarse = false;
  /// Called after every epoch; may be empty.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Builds a network from `arch` with hyper.seed and trains it.
History train(const zoo::ArchSpec& arch, const Dataset& data, const Hyper& hyper,
              const TrainOptions& options = {});

/// Trains an existing network; `meta` is copied into the result.
History train_network(Network& net, const Dataset& data, const Hyper& hyper, RunMeta meta,
                      const TrainOptions& options = {});

// --- comparisons -------------------------------------------------------------

struct CompareConfig {
  std::size_t depth = 3;
  std::size_t width = 16;
  std::vector<std::size_t> groups{4};
  std::vector<zoo::Variant> variants{zoo::Variant::sc, zoo::Variant::gc, zoo::Variant::gc2l,
                                     zoo::Variant::shuffle};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct CompareRow {
  std::string variant;
  std::size_t groups = 1;
  std::uint64_t seed = 0;
  double final_train_loss = 0.0;
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  std::string status = "ok";  // "ok" or a failure description
};

struct CompareSummary {
  std::string variant;
  std::size_t groups = 1;
  std::size_t runs = 0;
  double mean_train_loss = 0.0;
  double mean_test_accuracy = 0.0;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  std::vector<CompareSummary> summary;
};

/// SC runs once per seed with N = 1; the grouped variants run at every N.
/// Failed runs are recorded and left out of the summary.
CompareReport compare_variants(const CompareConfig& config, const Dataset& data,
                               const Hyper& hyper);

// --- frozen desk-scale setup -------------------------------------------------
//
// Calibrated once and then fixed: 10 classes, 60 train / 20 test samples per
// class, 3 x 8 x 8 inputs, noise 2.5, data seed 7; batch 32, lr 0.005,
// momentum 0.9, weight decay 5e-4, 30 epochs; toy net depth 3, width 16, N = 4.

Dataset desk_dataset();
Hyper desk_hyper();
CompareConfig desk_compare_config();

}  // namespace t2lc::train

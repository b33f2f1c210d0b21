#pragma once

// Simulated N-worker execution of the two-level group convolution.
//
// Worker k owns group k: the (m/N + 1)-row combined kernel [A_k ; r_k] and the
// coarse mixing matrix S_k. A forward pass runs four barrier-separated phases:
//
//   local_forward   one combined conv on x_k -> (A_k x_k, representative x0_k)
//   gather          all-gather of the representatives, N(N-1) messages
//   coarse_apply    S_k x0 on every worker, no communication
//   collect         y_k = A_k x_k + S_k x0, concatenated in group order
//
// The backward pass mirrors it with a reduce-scatter of the coarse gradient.
// Only activation-shaped payloads ever travel; parameters never leave their
// worker, and summarize() rejects any trace that says otherwise.

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "t2lc/autodiff.hpp"
#include "t2lc/conv_ops.hpp"

namespace t2lc::dist {

struct WorkerShard {
  std::size_t group = 0;
  ConvKernel combined_kernel;  // rows 0..m/N-1 = A_k, last row = r_k (absent in group-only mode)
  Matrix coarse_mix;           // S_k, (m/N) x N; empty in group-only mode

  /// d^2 (m/N)(n/N) + d^2 (n/N) + m for a two-level shard.
  std::size_t parameter_count() const;
};

/// Requires d0 == d so that A_k and r_k fit one kernel.
std::vector<WorkerShard> shard_params(const GroupSpec& spec, const TwoLevelParams& params);
TwoLevelParams unshard(const GroupSpec& spec, std::span<const WorkerShard> shards);

enum class PayloadKind { representative_channel, coarse_gradient, parameter };
std::string_view payload_kind_name(PayloadKind kind);

inline constexpr int kBroadcast = -1;

struct Message {
  std::string phase;
  std::size_t sender = 0;
  int receiver = 0;  // worker id or kBroadcast
  PayloadKind kind = PayloadKind::representative_channel;
  Tensor payload;    // (batch, 1, H, W)

  std::size_t scalars() const { return payload.size(); }
  std::size_t byte_size() const { return scalars() * sizeof(double); }
};

/// What the router records about a send; payloads are not retained.
struct TraceEntry {
  std::string phase;
  std::size_t sender = 0;
  int receiver = 0;
  PayloadKind kind = PayloadKind::representative_channel;
  std::size_t scalars = 0;
};

struct PhaseStats {
  std::size_t messages = 0;
  std::size_t scalars = 0;
};

struct CommReport {
  std::size_t messages = 0;
  std::size_t activation_scalars = 0;
  std::size_t parameter_scalars = 0;
  std::size_t samples = 1;  // batch size of the traced calls
  std::map<std::string, PhaseStats> phases;

  std::size_t activation_scalars_per_sample() const {
    return samples == 0 ? 0 : activation_scalars / samples;
  }
};

/// Throws ProtocolError if any message carries parameters.
CommReport summarize(std::span<const TraceEntry> trace, std::size_t samples = 1);

/// In-process message router. Delivery is FIFO per (sender, receiver) pair;
/// every send is appended to the trace. Safe to use from worker threads.
class Router {
 public:
  explicit Router(std::size_t workers);

  void send(Message message);
  /// Oldest undelivered message from `sender` to `receiver`.
  Message receive(std::size_t receiver, std::size_t sender);
  bool idle() const;

  std::vector<TraceEntry> trace() const;
  void clear_trace();

 private:
  std::size_t workers_;
  mutable std::mutex mutex_;
  std::vector<std::deque<Message>> queues_;  // index receiver * workers + sender
  std::vector<TraceEntry> trace_;
};

/// Order in which workers execute inside one phase. Phases are always
/// separated by a barrier; results do not depend on the choice.
enum class Schedule { in_order, reversed, shuffled, threaded };

struct ScheduleOptions {
  Schedule kind = Schedule::in_order;
  std::uint64_t seed = 0;  // used by `shuffled`
};

struct LocalOutputs {
  Tensor local_out;       // (batch, m/N, H, W)
  Tensor representative;  // (batch, 1, H, W); empty in group-only mode
};

LocalOutputs worker_local_forward(const WorkerShard& shard, const Tensor& x_k);

struct Worker {
  WorkerShard shard;
  Tensor input;
  std::optional<Tensor> local_out;
  std::optional<Tensor> representative;
  std::optional<Tensor> gathered;    // (batch, N, H, W)
  std::optional<Tensor> coarse_out;  // (batch, m/N, H, W)
};

/// All-gather of representatives; afterwards every worker holds x0.
void gather_representatives(std::span<Worker> workers, Router& router,
                            const ScheduleOptions& schedule = {});
/// coarse_out = S_k x0 on every worker; requires a completed gather.
void coarse_apply_distributed(std::span<Worker> workers, const ScheduleOptions& schedule = {});

struct DistributedForward {
  Tensor output;
  CommReport report;
  std::vector<TraceEntry> trace;
};

DistributedForward forward_distributed(const GroupSpec& spec, const TwoLevelParams& params,
                                       const Tensor& x, const ScheduleOptions& schedule = {});

/// Stateful cluster used by the trainer: keeps the forward activations so that
/// backward can run the reduce-scatter and the local gradient phases.
class Cluster {
 public:
  enum class Mode { two_level, group_only };

  Cluster(const GroupSpec& spec, const TwoLevelParams& params, ScheduleOptions schedule = {},
          Mode mode = Mode::two_level);

  Tensor forward(const Tensor& x);
  grad::TwoLevelGrad backward(const Tensor& upstream);

  const GroupSpec& spec() const { return spec_; }
  Mode mode() const { return mode_; }
  std::span<Worker> workers() { return workers_; }
  TwoLevelParams params() const;
  void set_params(const TwoLevelParams& params);

  std::vector<TraceEntry> trace() const { return router_.trace(); }
  void clear_trace() { router_.clear_trace(); }
  CommReport report() const;

 private:
  GroupSpec spec_;
  Mode mode_;
  ScheduleOptions schedule_;
  Router router_;
  std::vector<Worker> workers_;
  std::size_t batch_ = 0;
};

}  // namespace t2lc::dist

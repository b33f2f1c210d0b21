#include "t2lc/dist_sim.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

#include "t2lc/detail/kernels.hpp"
#include "t2lc/errors.hpp"

namespace t2lc::dist {

std::size_t WorkerShard::parameter_count() const {
  return combined_kernel.weights().size() + coarse_mix.entries().size();
}

std::vector<WorkerShard> shard_params(const GroupSpec& spec, const TwoLevelParams& params) {
  params.validate(spec);
  if (spec.d0 != spec.d) {
    throw ConfigError("combined local/restriction kernel needs d0 == d (got d=" +
                      std::to_string(spec.d) + ", d0=" + std::to_string(spec.d0) + ")");
  }
  const std::size_t mo = spec.out_per_group();
  const std::size_t row = spec.in_per_group() * spec.d * spec.d;
  std::vector<WorkerShard> shards;
  for (std::size_t k = 0; k < spec.groups; ++k) {
    WorkerShard s;
    s.group = k;
    std::vector<double> w(params.local[k].weights().begin(), params.local[k].weights().end());
    w.insert(w.end(), params.coarse_restrict[k].weights().begin(),
             params.coarse_restrict[k].weights().end());
    s.combined_kernel = ConvKernel(mo + 1, spec.in_per_group(), spec.d, std::move(w));
    s.coarse_mix = params.coarse_mix[k];
    if (s.combined_kernel.weights().size() != (mo + 1) * row) {
      throw ConfigError("combined kernel has unexpected size");
    }
    shards.push_back(std::move(s));
  }
  return shards;
}

TwoLevelParams unshard(const GroupSpec& spec, std::span<const WorkerShard> shards) {
  spec.validate();
  if (shards.size() != spec.groups) throw ConfigError("unshard: need one shard per group");
  TwoLevelParams p = TwoLevelParams::zeros(spec);
  const std::size_t mo = spec.out_per_group();
  for (const WorkerShard& s : shards) {
    if (s.group >= spec.groups) throw ConfigError("unshard: shard group out of range");
    const auto w = s.combined_kernel.weights();
    const std::size_t local_size = p.local[s.group].weights().size();
    if (s.combined_kernel.out_channels() == mo + 1) {
      std::copy_n(w.begin(), local_size, p.local[s.group].weights().begin());
      std::copy(w.begin() + static_cast<std::ptrdiff_t>(local_size), w.end(),
                p.coarse_restrict[s.group].weights().begin());
      p.coarse_mix[s.group] = s.coarse_mix;
    } else if (s.combined_kernel.out_channels() == mo) {
      std::copy(w.begin(), w.end(), p.local[s.group].weights().begin());
    } else {
      throw ConfigError("unshard: combined kernel has the wrong number of rows");
    }
  }
  return p;
}

std::string_view payload_kind_name(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::representative_channel:
      return "representative_channel";
    case PayloadKind::coarse_gradient:
      return "coarse_gradient";
    case PayloadKind::parameter:
      return "parameter";
  }
  return "unknown";
}

CommReport summarize(std::span<const TraceEntry> trace, std::size_t samples) {
  CommReport r;
  r.samples = samples;
  for (const TraceEntry& e : trace) {
    ++r.messages;
    auto& phase = r.phases[e.phase];
    ++phase.messages;
    phase.scalars += e.scalars;
    if (e.kind == PayloadKind::parameter) {
      r.parameter_scalars += e.scalars;
    } else {
      r.activation_scalars += e.scalars;
    }
  }
  if (r.parameter_scalars != 0) {
    throw ProtocolError("trace contains " + std::to_string(r.parameter_scalars) +
                        " parameter scalars; workers must never exchange parameters");
  }
  return r;
}

Router::Router(std::size_t workers) : workers_(workers), queues_(workers * workers) {}

void Router::send(Message message) {
  if (message.sender >= workers_ || message.receiver < 0 ||
      static_cast<std::size_t>(message.receiver) >= workers_) {
    throw ProtocolError("message addressed outside the worker set");
  }
  std::lock_guard lock(mutex_);
  trace_.push_back({message.phase, message.sender, message.receiver, message.kind,
                    message.scalars()});
  const auto slot = static_cast<std::size_t>(message.receiver) * workers_ + message.sender;
  queues_[slot].push_back(std::move(message));
}

Message Router::receive(std::size_t receiver, std::size_t sender) {
  std::lock_guard lock(mutex_);
  auto& q = queues_.at(receiver * workers_ + sender);
  if (q.empty()) {
    throw ProtocolError("worker " + std::to_string(receiver) + " expected a message from " +
                        std::to_string(sender) + " but none was delivered");
  }
  Message m = std::move(q.front());
  q.pop_front();
  return m;
}

bool Router::idle() const {
  std::lock_guard lock(mutex_);
  return std::all_of(queues_.begin(), queues_.end(), [](const auto& q) { return q.empty(); });
}

std::vector<TraceEntry> Router::trace() const {
  std::lock_guard lock(mutex_);
  return trace_;
}

void Router::clear_trace() {
  std::lock_guard lock(mutex_);
  trace_.clear();
}

namespace {

// Runs fn(k) for every worker; returning is the phase barrier.
template <typename Fn>
void run_phase(std::size_t workers, const ScheduleOptions& schedule, Fn&& fn) {
  std::vector<std::size_t> order(workers);
  std::iota(order.begin(), order.end(), 0);
  switch (schedule.kind) {
    case Schedule::in_order:
      break;
    case Schedule::reversed:
      std::reverse(order.begin(), order.end());
      break;
    case Schedule::shuffled: {
      std::mt19937_64 rng(schedule.seed);
      std::shuffle(order.begin(), order.end(), rng);
      break;
    }
    case Schedule::threaded: {
      std::vector<std::exception_ptr> errors(workers);
      std::vector<std::thread> threads;
      for (std::size_t k = 0; k < workers; ++k) {
        threads.emplace_back([&, k] {
          try {
            fn(k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
      return;
    }
  }
  for (std::size_t k : order) fn(k);
}

Tensor batched_planes(std::size_t batch, std::size_t channels, std::size_t h, std::size_t w) {
  return Tensor::batched(batch, channels, h, w);
}

}  // namespace

LocalOutputs worker_local_forward(const WorkerShard& shard, const Tensor& x_k) {
  const ConvKernel& k = shard.combined_kernel;
  if (x_k.channels() != k.in_channels()) {
    throw ConfigError("worker " + std::to_string(shard.group) + ": input slice has " +
                      std::to_string(x_k.channels()) + " channels, kernel expects " +
                      std::to_string(k.in_channels()));
  }
  const bool two_level = !shard.coarse_mix.entries().empty();
  const std::size_t mo = two_level ? k.out_channels() - 1 : k.out_channels();
  Tensor combined = batched_planes(x_k.batch(), k.out_channels(), x_k.height(), x_k.width());
  const detail::PlaneGeom geom{x_k.height(), x_k.width(), k.size()};
  for (std::size_t b = 0; b < x_k.batch(); ++b) {
    detail::correlate_forward(x_k.sample(b), x_k.channels(), k.weights().data(), k.out_channels(),
                              geom, combined.sample(b));
  }
  LocalOutputs out;
  out.local_out = channel_slice(combined, 0, mo);
  if (two_level) out.representative = channel_slice(combined, mo, mo + 1);
  return out;
}

void gather_representatives(std::span<Worker> workers, Router& router,
                            const ScheduleOptions& schedule) {
  const std::size_t n = workers.size();
  for (const Worker& w : workers) {
    if (!w.representative) {
      throw ProtocolError("gather: worker " + std::to_string(w.shard.group) +
                          " has not produced its representative channel");
    }
  }
  run_phase(n, schedule, [&](std::size_t k) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == k) continue;
      router.send({"gather", k, static_cast<int>(j), PayloadKind::representative_channel,
                   *workers[k].representative});
    }
  });
  run_phase(n, schedule, [&](std::size_t j) {
    const Tensor& own = *workers[j].representative;
    Tensor x0 = batched_planes(own.batch(), n, own.height(), own.width());
    const std::size_t plane = own.shape().plane();
    for (std::size_t k = 0; k < n; ++k) {
      const Tensor part = (k == j) ? own : router.receive(j, k).payload;
      for (std::size_t b = 0; b < own.batch(); ++b)
        std::copy_n(part.sample(b), plane, x0.channel(b, k));
    }
    workers[j].gathered = std::move(x0);
  });
}

void coarse_apply_distributed(std::span<Worker> workers, const ScheduleOptions& schedule) {
  for (const Worker& w : workers) {
    if (!w.gathered) {
      throw ProtocolError("coarse apply: worker " + std::to_string(w.shard.group) +
                          " has no gathered coarse tensor");
    }
  }
  run_phase(workers.size(), schedule, [&](std::size_t k) {
    const Tensor& x0 = *workers[k].gathered;
    const Matrix& s = workers[k].shard.coarse_mix;
    Tensor out = batched_planes(x0.batch(), s.rows(), x0.height(), x0.width());
    const detail::PlaneGeom geom{x0.height(), x0.width(), 1};
    for (std::size_t b = 0; b < x0.batch(); ++b) {
      detail::correlate_forward(x0.sample(b), x0.channels(), s.entries().data(), s.rows(), geom,
                                out.sample(b));
    }
    workers[k].coarse_out = std::move(out);
  });
}

DistributedForward forward_distributed(const GroupSpec& spec, const TwoLevelParams& params,
                                       const Tensor& x, const ScheduleOptions& schedule) {
  Cluster cluster(spec, params, schedule);
  DistributedForward out;
  out.output = cluster.forward(x);
  out.trace = cluster.trace();
  out.report = cluster.report();
  return out;
}

Cluster::Cluster(const GroupSpec& spec, const TwoLevelParams& params, ScheduleOptions schedule,
                 Mode mode)
    : spec_(spec), mode_(mode), schedule_(schedule), router_(spec.groups) {
  set_params(params);
}

void Cluster::set_params(const TwoLevelParams& params) {
  std::vector<WorkerShard> shards;
  if (mode_ == Mode::two_level) {
    shards = shard_params(spec_, params);
  } else {
    spec_.validate();
    if (params.local.size() != spec_.groups) throw ConfigError("need one local kernel per group");
    for (std::size_t k = 0; k < spec_.groups; ++k) {
      shards.push_back({k, params.local[k], Matrix()});
    }
  }
  workers_.resize(spec_.groups);
  for (std::size_t k = 0; k < spec_.groups; ++k) workers_[k].shard = std::move(shards[k]);
}

TwoLevelParams Cluster::params() const {
  std::vector<WorkerShard> shards;
  for (const Worker& w : workers_) shards.push_back(w.shard);
  return unshard(spec_, shards);
}

Tensor Cluster::forward(const Tensor& x) {
  if (x.channels() != spec_.n) throw ConfigError("cluster forward: channel mismatch");
  batch_ = x.batch();
  const std::size_t ni = spec_.in_per_group();
  const std::size_t mo = spec_.out_per_group();
  for (Worker& w : workers_) {
    w = Worker{std::move(w.shard), {}, {}, {}, {}, {}};
  }
  // Each worker's input slice is resident; it is not routed.
  run_phase(workers_.size(), schedule_, [&](std::size_t k) {
    Worker& w = workers_[k];
    Tensor slice = channel_slice(x, k * ni, (k + 1) * ni);
    LocalOutputs lo = worker_local_forward(w.shard, slice);
    w.input = std::move(slice);
    w.local_out = std::move(lo.local_out);
    if (mode_ == Mode::two_level) w.representative = std::move(lo.representative);
  });
  if (mode_ == Mode::two_level) {
    gather_representatives(workers_, router_, schedule_);
    coarse_apply_distributed(workers_, schedule_);
  }
  Shape s = x.shape();
  s.channels = spec_.m;
  Tensor y(s, x.is_batched());
  const std::size_t block = mo * x.shape().plane();
  for (std::size_t k = 0; k < workers_.size(); ++k) {
    const Tensor& local = *workers_[k].local_out;
    for (std::size_t b = 0; b < x.batch(); ++b) {
      double* dst = y.channel(b, k * mo);
      const double* a = local.sample(b);
      if (mode_ == Mode::two_level) {
        const double* c = workers_[k].coarse_out->sample(b);
        for (std::size_t i = 0; i < block; ++i) dst[i] = a[i] + c[i];
      } else {
        std::copy_n(a, block, dst);
      }
    }
  }
  return y;
}

grad::TwoLevelGrad Cluster::backward(const Tensor& upstream) {
  const std::size_t n = workers_.size();
  const std::size_t ni = spec_.in_per_group();
  const std::size_t mo = spec_.out_per_group();
  for (const Worker& w : workers_) {
    if (!w.local_out) throw ProtocolError("cluster backward called before forward");
  }
  if (upstream.channels() != spec_.m || upstream.batch() != batch_) {
    throw ConfigError("cluster backward: upstream shape mismatch");
  }
  const std::size_t batch = upstream.batch();
  const std::size_t h = upstream.height();
  const std::size_t wdt = upstream.width();
  const std::size_t plane = h * wdt;
  const detail::PlaneGeom geom{h, wdt, spec_.d};
  const detail::PlaneGeom geom1{h, wdt, 1};

  std::vector<Tensor> u(n);
  for (std::size_t k = 0; k < n; ++k) u[k] = channel_slice(upstream, k * mo, (k + 1) * mo);

  std::vector<Tensor> partial(n);   // S_k^T u_k, all N coarse channels
  std::vector<Matrix> d_mix(n);
  std::vector<Tensor> d_coarse(n);  // reduced gradient of representative k
  if (mode_ == Mode::two_level) {
    run_phase(n, schedule_, [&](std::size_t k) {
      const Tensor& x0 = *workers_[k].gathered;
      const Matrix& s = workers_[k].shard.coarse_mix;
      Tensor p = batched_planes(batch, n, h, wdt);
      Matrix dm(mo, n);
      for (std::size_t b = 0; b < batch; ++b) {
        detail::correlate_input_grad(u[k].sample(b), mo, s.entries().data(), n, geom1,
                                     p.sample(b));
        detail::correlate_weight_grad(x0.sample(b), n, u[k].sample(b), mo, geom1,
                                      dm.entries().data());
      }
      partial[k] = std::move(p);
      d_mix[k] = std::move(dm);
    });
    // reduce-scatter: channel j of every partial goes to worker j
    run_phase(n, schedule_, [&](std::size_t k) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == k) continue;
        router_.send({"reduce_scatter", k, static_cast<int>(j), PayloadKind::coarse_gradient,
                      channel_slice(partial[k], j, j + 1)});
      }
    });
    run_phase(n, schedule_, [&](std::size_t j) {
      Tensor acc = batched_planes(batch, 1, h, wdt);
      for (std::size_t k = 0; k < n; ++k) {
        const Tensor part = (k == j) ? channel_slice(partial[j], j, j + 1)
                                     : router_.receive(j, k).payload;
        acc += part;
      }
      d_coarse[j] = std::move(acc);
    });
  }

  std::vector<Tensor> d_in(n);
  std::vector<ConvKernel> d_combined(n);
  run_phase(n, schedule_, [&](std::size_t k) {
    const Worker& w = workers_[k];
    const ConvKernel& kern = w.shard.combined_kernel;
    Tensor up = mode_ == Mode::two_level
                    ? channel_concat(std::vector<Tensor>{u[k], d_coarse[k]})
                    : u[k];
    Tensor dx = batched_planes(batch, ni, h, wdt);
    ConvKernel dk(kern.out_channels(), kern.in_channels(), kern.size());
    for (std::size_t b = 0; b < batch; ++b) {
      detail::correlate_input_grad(up.sample(b), kern.out_channels(), kern.weights().data(), ni,
                                   geom, dx.sample(b));
      detail::correlate_weight_grad(w.input.sample(b), ni, up.sample(b), kern.out_channels(), geom,
                                    dk.weights().data());
    }
    d_in[k] = std::move(dx);
    d_combined[k] = std::move(dk);
  });

  grad::TwoLevelGrad g;
  Shape s = upstream.shape();
  s.channels = spec_.n;
  g.d_input = Tensor(s, upstream.is_batched());
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(d_in[k].sample(b), ni * plane, g.d_input.channel(b, k * ni));
  std::vector<WorkerShard> grads;
  for (std::size_t k = 0; k < n; ++k) {
    grads.push_back({k, std::move(d_combined[k]),
                     mode_ == Mode::two_level ? std::move(d_mix[k]) : Matrix()});
  }
  g.d_params = unshard(spec_, grads);
  return g;
}

CommReport Cluster::report() const {
  const auto t = router_.trace();
  return summarize(t, batch_);
}

}  // namespace t2lc::dist

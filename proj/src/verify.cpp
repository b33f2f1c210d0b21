#include "t2lc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "t2lc/autodiff.hpp"
#include "t2lc/block_jacobi.hpp"
#include "t2lc/conv_ops.hpp"
#include "t2lc/dist_sim.hpp"
#include "t2lc/errors.hpp"

namespace t2lc::verify {

namespace {

Check make(std::string name, double metric, double threshold, std::string detail = {}) {
  return {std::move(name), metric, threshold, metric <= threshold, std::move(detail)};
}

// Number of entries that differ; zero means bit-identical.
double mismatches(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return static_cast<double>(std::max(a.size(), b.size()));
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return static_cast<double>(n);
}

std::string spec_text(const GroupSpec& s) {
  return "n=" + std::to_string(s.n) + " m=" + std::to_string(s.m) + " N=" +
         std::to_string(s.groups) + " d=" + std::to_string(s.d) + " d0=" + std::to_string(s.d0);
}

Tensor random_batch(std::size_t b, std::size_t c, std::size_t hw, std::mt19937_64& rng) {
  Tensor x = Tensor::batched(b, c, hw, hw);
  fill_normal(x.values(), rng);
  return x;
}

}  // namespace

std::string_view suite_name(Suite s) {
  switch (s) {
    case Suite::algebra:
      return "algebra";
    case Suite::gradients:
      return "gradients";
    case Suite::distributed:
      return "distributed";
    case Suite::all:
      return "all";
  }
  return "unknown";
}

Suite parse_suite(std::string_view name) {
  for (Suite s : {Suite::algebra, Suite::gradients, Suite::distributed, Suite::all}) {
    if (suite_name(s) == name) return s;
  }
  throw ConfigError("unknown suite '" + std::string(name) +
                    "' (expected algebra, gradients, distributed or all)");
}

bool Report::passed() const { return first_failure() == nullptr; }

const Check* Report::first_failure() const {
  for (const Check& c : checks) {
    if (!c.passed) return &c;
  }
  return nullptr;
}

std::vector<Check> algebra_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Check> out;

  double bridge = 0.0;
  for (std::size_t groups : {1u, 2u, 4u}) {
    const GroupSpec spec{4, 4, groups, 3, 3};
    const ConvKernel full = random_kernel(4, 4, 3, rng);
    const auto local = diagonal_blocks(full, spec);
    const auto sc = jacobi::materialize([&](const Tensor& t) { return standard_conv(t, full); }, 4, 3, 3);
    const auto gc =
        jacobi::materialize([&](const Tensor& t) { return group_conv(t, spec, local); }, 4, 3, 3);
    const auto rows = jacobi::DirectSumDecomposition::uniform(4 * 9, groups);
    const auto approx = jacobi::jacobi_approx(sc, rows, rows);
    bridge = std::max(bridge, max_rel_diff(gc.entries(), approx.entries()));
  }
  out.push_back(make("block_jacobi_bridge", bridge, 1e-12, "n=m=4 N=1,2,4 H=W=3"));

  {
    const GroupSpec spec{6, 9, 1, 3, 3};
    const ConvKernel k = random_kernel(9, 6, 3, rng);
    const Tensor x = random_batch(2, 6, 5, rng);
    const std::vector<ConvKernel> local{k};
    out.push_back(make("gc_single_group_equals_sc",
                       mismatches(group_conv(x, spec, local).values(), standard_conv(x, k).values()),
                       0.0, "entries differing"));
  }
  {
    const GroupSpec spec{8, 12, 4, 3, 3};
    TwoLevelParams p = TwoLevelParams::random(spec, rng);
    const Tensor x = random_batch(2, 8, 5, rng);
    const Tensor gc = group_conv(x, spec, p.local);
    TwoLevelParams zero = TwoLevelParams::zeros(spec);
    zero.local = p.local;
    out.push_back(make("gc2l_zero_coarse_equals_gc",
                       mismatches(two_level(x, spec, zero).values(), gc.values()), 0.0,
                       "entries differing"));
    Tensor sum = gc;
    sum += coarse_combined_apply(coarse_restrict(x, spec, p.coarse_restrict), p.coarse_mix, spec);
    out.push_back(make("gc2l_is_local_plus_coarse",
                       mismatches(two_level(x, spec, p).values(), sum.values()), 0.0,
                       "entries differing"));
  }

  double subsume = 0.0;
  for (std::size_t groups : {2u, 4u}) {
    const GroupSpec spec{8, 12, groups, 3, 3};
    for (int draw = 0; draw < 50; ++draw) {
      const ProtoCoarseParams proto = ProtoCoarseParams::random(spec, rng);
      const Tensor x0 = random_batch(1, groups, 4, rng);
      const auto mix = subsume_prototype(proto, spec);
      subsume = std::max(subsume, max_rel_diff(coarse_combined_apply(x0, mix, spec),
                                               coarse_proto_apply(x0, proto, spec)));
    }
  }
  out.push_back(make("prototype_subsumption", subsume, 1e-12, "100 draws, n=8 m=12 N=2,4"));

  {
    const Tensor x = random_batch(2, 12, 3, rng);
    out.push_back(make("shuffle_inverse",
                       mismatches(channel_unshuffle(channel_shuffle(x, 4), 4).values(), x.values()),
                       0.0, "entries differing"));
  }
  return out;
}

std::vector<Check> gradient_checks(std::uint64_t seed) {
  std::vector<Check> out;
  const GroupSpec specs[] = {{4, 4, 2, 3, 3}, {8, 12, 4, 3, 3}, {6, 6, 3, 1, 3}};
  for (grad::OpId op : grad::all_ops()) {
    double worst = 0.0;
    std::string where;
    for (const GroupSpec& spec : specs) {
      for (std::uint64_t s = 0; s < 3; ++s) {
        const grad::OpInstance inst = grad::make_instance(op, spec, 5, 5, seed * 1000 + s);
        const grad::FdReport r = grad::finite_diff_check(inst, seed * 7919 + s, 1e-6);
        if (r.max_rel_error >= worst) {
          worst = r.max_rel_error;
          where = spec_text(spec) + " " + r.worst_coordinate;
        }
      }
    }
    out.push_back(make("fd_" + std::string(grad::op_name(op)), worst, 1e-5, where));
  }

  std::mt19937_64 rng(seed ^ 0xad701u);
  const GroupSpec spec{8, 12, 4, 3, 3};
  const TwoLevelParams p = TwoLevelParams::random(spec, rng);
  const Tensor x = random_batch(2, 8, 5, rng);
  const Tensor u = random_batch(2, 12, 5, rng);
  const double lhs = dot(two_level(x, spec, p).values(), u.values());
  const double rhs = dot(x.values(), grad::two_level_vjp(x, spec, p, u).d_input.values());
  out.push_back(make("two_level_adjoint_identity", std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-300),
                     1e-12, spec_text(spec)));
  return out;
}

std::vector<Check> distributed_checks(std::uint64_t seed) {
  std::vector<Check> out;
  std::mt19937_64 rng(seed ^ 0xd157u);
  for (std::size_t groups : {2u, 4u, 8u}) {
    const GroupSpec spec{16, 24, groups, 3, 3};
    const TwoLevelParams p = TwoLevelParams::random(spec, rng);
    const Tensor x = random_batch(3, 16, 5, rng);
    const dist::DistributedForward df = dist::forward_distributed(spec, p, x);
    const std::string tag = "_N" + std::to_string(groups);
    out.push_back(make("dist_forward" + tag, max_rel_diff(df.output, two_level(x, spec, p)), 1e-12,
                       spec_text(spec)));
    const double expected = static_cast<double>(groups * (groups - 1));
    out.push_back(make("dist_messages" + tag,
                       std::abs(static_cast<double>(df.report.messages) - expected), 0.0,
                       std::to_string(df.report.messages) + " messages, expected N(N-1)"));
    out.push_back(make("dist_scalars_per_sample" + tag,
                       std::abs(static_cast<double>(df.report.activation_scalars_per_sample()) -
                                expected * 25),
                       0.0, "expected N(N-1)*H*W"));
    out.push_back(make("dist_parameter_scalars" + tag,
                       static_cast<double>(df.report.parameter_scalars), 0.0));

    dist::Cluster cluster(spec, p, {dist::Schedule::threaded, seed});
    cluster.forward(x);
    const Tensor u = random_batch(3, 24, 5, rng);
    const grad::TwoLevelGrad dg = cluster.backward(u);
    const grad::TwoLevelGrad sg = grad::two_level_vjp(x, spec, p, u);
    out.push_back(make("dist_backward" + tag, max_rel_diff(dg.d_input, sg.d_input), 1e-12,
                       "threaded schedule"));
  }
  return out;
}

Report run(Suite suite, std::uint64_t seed) {
  Report r;
  const auto add = [&](std::vector<Check> c) {
    r.checks.insert(r.checks.end(), c.begin(), c.end());
  };
  if (suite == Suite::algebra || suite == Suite::all) add(algebra_checks(seed));
  if (suite == Suite::gradients || suite == Suite::all) add(gradient_checks(seed));
  if (suite == Suite::distributed || suite == Suite::all) add(distributed_checks(seed));
  return r;
}

}  // namespace t2lc::verify

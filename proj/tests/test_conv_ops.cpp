#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "t2lc/block_jacobi.hpp"
#include "t2lc/conv_ops.hpp"
#include "t2lc/errors.hpp"
#include "t2lc/param_io.hpp"

using namespace t2lc;

namespace {

ConvKernel delta_kernel(std::size_t c, std::size_t d) {
  ConvKernel k(c, c, d);
  for (std::size_t i = 0; i < c; ++i) k.at(i, i, d / 2, d / 2) = 1.0;
  return k;
}

ProtoCoarseParams proto_from(const Matrix& a0, std::vector<std::vector<double>> w) {
  return ProtoCoarseParams{a0, std::move(w)};
}

// Group convolution written as a direct sum over each group's channels.
Tensor naive_group_conv(const Tensor& x, const GroupSpec& spec, std::span<const ConvKernel> local) {
  const std::size_t ni = spec.in_per_group(), mo = spec.out_per_group();
  std::vector<Tensor> outs;
  for (std::size_t k = 0; k < spec.groups; ++k)
    outs.push_back(oracle::naive_conv(channel_slice(x, k * ni, (k + 1) * ni), local[k]));
  return channel_concat(outs);
}

struct Random2L {
  GroupSpec spec;
  TwoLevelParams params;
  Tensor x;
};

Random2L random_two_level(GroupSpec spec, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Random2L r{spec, TwoLevelParams::random(spec, rng), random_tensor(spec.n, h, w, rng)};
  return r;
}

}  // namespace

TEST(GroupSpec, Validation) {
  EXPECT_NO_THROW((GroupSpec{8, 12, 4, 3, 3}.validate()));
  EXPECT_THROW((GroupSpec{8, 12, 3, 3, 3}.validate()), ConfigError);
  EXPECT_THROW((GroupSpec{6, 12, 4, 3, 3}.validate()), ConfigError);
  EXPECT_THROW((GroupSpec{8, 12, 4, 2, 3}.validate()), ConfigError);
  EXPECT_THROW((GroupSpec{8, 12, 4, 3, 4}.validate()), ConfigError);
  EXPECT_THROW((GroupSpec{8, 12, 0, 3, 3}.validate()), ConfigError);
}

TEST(StandardConv, Examples) {
  const Tensor x = oracle::gaussian(2, 3, 3, 1);
  EXPECT_EQ(standard_conv(x, delta_kernel(2, 3)), x);
  const ConvKernel k = oracle::gaussian_kernel(2, 2, 3, 2);
  EXPECT_TRUE(oracle::all_zero(standard_conv(Tensor(2, 3, 3), k)));
  const Matrix a = oracle::dense([&](const Tensor& t) { return oracle::naive_conv(t, k); }, 2, 3, 3);
  EXPECT_LE(oracle::rel_err(standard_conv(x, k).values(),
                            oracle::matvec(a, {x.values().begin(), x.values().end()})),
            1e-12);
}

TEST(GroupConv, SingleGroupIsStandardConv) {
  const GroupSpec spec{5, 7, 1, 3, 3};
  const ConvKernel k = oracle::gaussian_kernel(7, 5, 3, 3);
  const Tensor x = oracle::gaussian(5, 6, 4, 4);
  EXPECT_EQ(group_conv(x, spec, std::vector<ConvKernel>{k}), standard_conv(x, k));
}

TEST(GroupConv, IdentityKernels) {
  const GroupSpec spec{2, 2, 2, 3, 3};
  const Tensor x = oracle::gaussian(2, 4, 4, 5);
  const std::vector<ConvKernel> local{delta_kernel(1, 3), delta_kernel(1, 3)};
  EXPECT_EQ(group_conv(x, spec, local), x);
}

TEST(GroupConv, EqualsAssembledBlockKernel) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GroupSpec spec{4, 4, 2, 3, 3};
    std::mt19937_64 rng(seed);
    std::vector<ConvKernel> local;
    for (int k = 0; k < 2; ++k) local.push_back(random_kernel(2, 2, 3, rng));
    const ConvKernel full = assemble_group_kernel(spec, local);
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t i = 0; i < 4; ++i)
        if (o / 2 != i / 2)
          for (std::size_t u = 0; u < 3; ++u)
            for (std::size_t v = 0; v < 3; ++v) EXPECT_EQ(full.at(o, i, u, v), 0.0);
    const Tensor x = random_tensor(4, 5, 5, rng);
    EXPECT_LE(max_rel_diff(group_conv(x, spec, local), standard_conv(x, full)), 1e-12);
    EXPECT_LE(oracle::rel_err(group_conv(x, spec, local), naive_group_conv(x, spec, local)), 1e-13);
    EXPECT_EQ(diagonal_blocks(full, spec), local);
  }
}

TEST(GroupConv, Errors) {
  const GroupSpec spec{4, 6, 2, 3, 3};
  const Tensor x = oracle::gaussian(4, 3, 3, 6);
  EXPECT_THROW(group_conv(x, GroupSpec{4, 6, 4, 3, 3}, std::vector<ConvKernel>(4)), ConfigError);
  EXPECT_THROW(group_conv(x, spec, std::vector<ConvKernel>{ConvKernel(3, 2, 3)}), ConfigError);
  EXPECT_THROW(group_conv(oracle::gaussian(3, 3, 3, 1), spec,
                          std::vector<ConvKernel>{ConvKernel(3, 2, 3), ConvKernel(3, 2, 3)}),
               ConfigError);
}

TEST(GroupConv, GroupLocality) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GroupSpec spec{8, 12, 4, 3, 3};
    std::mt19937_64 rng(seed);
    const auto params = TwoLevelParams::random(spec, rng);
    const Tensor x = random_tensor(8, 5, 5, rng);
    const std::size_t j = seed % 4;
    Tensor xp = x;
    for (std::size_t c = 2 * j; c < 2 * j + 2; ++c)
      for (std::size_t p = 0; p < 25; ++p) xp.values()[c * 25 + p] += 0.5 + p;
    const Tensor y = group_conv(x, spec, params.local);
    const Tensor yp = group_conv(xp, spec, params.local);
    for (std::size_t g = 0; g < 4; ++g) {
      const Tensor a = channel_slice(y, 3 * g, 3 * g + 3);
      const Tensor b = channel_slice(yp, 3 * g, 3 * g + 3);
      if (g == j) {
        EXPECT_NE(a, b);
      } else {
        EXPECT_EQ(a, b);
      }
    }
  }
}

TEST(CoarseRestrict, Examples) {
  const GroupSpec spec{4, 4, 2, 3, 1};
  std::vector<ConvKernel> ones(2, ConvKernel(1, 2, 1, {1.0, 1.0}));
  const Tensor x = oracle::gaussian(4, 3, 4, 7);
  const Tensor x0 = coarse_restrict(x, spec, ones);
  ASSERT_EQ(x0.channels(), 2u);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t p = 0; p < 12; ++p)
      EXPECT_EQ(x0.values()[k * 12 + p], x.values()[2 * k * 12 + p] + x.values()[(2 * k + 1) * 12 + p]);

  EXPECT_TRUE(oracle::all_zero(coarse_restrict(Tensor(4, 3, 4), spec, ones)));
}

TEST(CoarseRestrict, GroupLocality) {
  const GroupSpec spec{6, 6, 3, 3, 3};
  std::mt19937_64 rng(8);
  const auto params = TwoLevelParams::random(spec, rng);
  const Tensor x = random_tensor(6, 4, 4, rng);
  Tensor xp = x;
  xp.at(0, 1, 1) += 3.0;
  const Tensor a = coarse_restrict(x, spec, params.coarse_restrict);
  const Tensor b = coarse_restrict(xp, spec, params.coarse_restrict);
  EXPECT_NE(channel_slice(a, 0, 1), channel_slice(b, 0, 1));
  EXPECT_EQ(channel_slice(a, 1, 3), channel_slice(b, 1, 3));
}

TEST(CoarseProto, Examples) {
  const GroupSpec spec{4, 6, 2, 3, 3};
  const Tensor x0 = oracle::gaussian(2, 3, 3, 9);
  const auto ident = proto_from(Matrix::identity(2), {{1, 1, 1}, {1, 1, 1}});
  const Tensor y = coarse_proto_apply(x0, ident, spec);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < 3; ++i)
      EXPECT_EQ(channel_slice(y, 3 * k + i, 3 * k + i + 1), channel_slice(x0, k, k + 1));

  const auto zero = proto_from(Matrix(2, 2), {{1, 2, 3}, {4, 5, 6}});
  EXPECT_TRUE(oracle::all_zero(coarse_proto_apply(x0, zero, spec)));
}

TEST(CoarseProto, TwoStageComposition) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GroupSpec spec{4, 4, 2, 3, 3};
    std::mt19937_64 rng(seed);
    const auto proto = ProtoCoarseParams::random(spec, rng);
    const Tensor x0 = random_tensor(2, 4, 3, rng);
    // A0 first, then each mixed channel k spread over group k by w_k.
    const Tensor mixed = oracle::naive_mix(x0, proto.a0);
    Matrix spread(4, 2);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t i = 0; i < 2; ++i) spread(2 * k + i, k) = proto.distribute[k][i];
    const Tensor expect = oracle::naive_mix(mixed, spread);
    EXPECT_LE(oracle::rel_err(coarse_proto_apply(x0, proto, spec), expect), 1e-13);
  }
}

TEST(CoarseCombined, Examples) {
  const GroupSpec spec{4, 4, 2, 3, 3};
  const Tensor x0 = oracle::gaussian(2, 3, 3, 10);
  const std::vector<Matrix> zero(2, Matrix(2, 2));
  EXPECT_TRUE(oracle::all_zero(coarse_combined_apply(x0, zero, spec)));

  // group 0 copies channel 1 twice, group 1 copies channel 0 then channel 1
  const std::vector<Matrix> sel{Matrix(2, 2, {0, 1, 0, 1}), Matrix(2, 2, {1, 0, 0, 1})};
  const Tensor y = coarse_combined_apply(x0, sel, spec);
  EXPECT_EQ(channel_slice(y, 0, 1), channel_slice(x0, 1, 2));
  EXPECT_EQ(channel_slice(y, 1, 2), channel_slice(x0, 1, 2));
  EXPECT_EQ(channel_slice(y, 2, 3), channel_slice(x0, 0, 1));
  EXPECT_EQ(channel_slice(y, 3, 4), channel_slice(x0, 1, 2));
}

TEST(CoarseCombined, StackedMatrixOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GroupSpec spec{8, 12, 4, 3, 3};
    std::mt19937_64 rng(seed);
    const auto params = TwoLevelParams::random(spec, rng);
    const Tensor x0 = random_tensor(4, 5, 5, rng);
    const Matrix stacked = stack_coarse_mix(params.coarse_mix);
    ASSERT_EQ(stacked.rows(), 12u);
    EXPECT_LE(oracle::rel_err(coarse_combined_apply(x0, params.coarse_mix, spec),
                              oracle::naive_mix(x0, stacked)),
              1e-13);
  }
}

TEST(Subsume, OuterProductFormula) {
  const GroupSpec spec{4, 6, 2, 3, 3};
  const auto ident = proto_from(Matrix::identity(2), {{1, 1, 1}, {1, 1, 1}});
  const auto s = subsume_prototype(ident, spec);
  EXPECT_EQ(s[0], Matrix(3, 2, {1, 0, 1, 0, 1, 0}));
  EXPECT_EQ(s[1], Matrix(3, 2, {0, 1, 0, 1, 0, 1}));
  for (const Matrix& m : subsume_prototype(proto_from(Matrix(2, 2), {{1, 2, 3}, {4, 5, 6}}), spec))
    for (double v : m.entries()) EXPECT_EQ(v, 0.0);
}

TEST(Subsume, ReproducesPrototype) {
  for (std::size_t groups : {2u, 4u}) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const GroupSpec spec{8, 12, groups, 3, 3};
      std::mt19937_64 rng(seed * 7 + groups);
      const auto proto = ProtoCoarseParams::random(spec, rng);
      const Tensor x0 = random_tensor(groups, 4, 5, rng);
      EXPECT_LE(max_rel_diff(coarse_combined_apply(x0, subsume_prototype(proto, spec), spec),
                             coarse_proto_apply(x0, proto, spec)),
                1e-12);
    }
  }
}

TEST(Subsume, RankSeparatesTheFamilies) {
  const GroupSpec spec{8, 12, 4, 3, 3};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const auto proto = ProtoCoarseParams::random(spec, rng);
    for (const Matrix& s : subsume_prototype(proto, spec)) EXPECT_LE(jacobi::numeric_rank(s), 1u);
    const auto params = TwoLevelParams::random(spec, rng);
    for (const Matrix& s : params.coarse_mix) EXPECT_EQ(jacobi::numeric_rank(s), 3u);
  }
}

TEST(TwoLevelProto, Examples) {
  const GroupSpec spec{8, 12, 4, 3, 3};
  std::mt19937_64 rng(11);
  const auto params = TwoLevelParams::random(spec, rng);
  auto proto = ProtoCoarseParams::random(spec, rng);
  const Tensor x = random_tensor(8, 5, 5, rng);
  const Tensor y = two_level_proto(x, spec, params.local, params.coarse_restrict, proto);

  TwoLevelParams subsumed = params;
  subsumed.coarse_mix = subsume_prototype(proto, spec);
  EXPECT_LE(max_rel_diff(y, two_level(x, spec, subsumed)), 1e-12);

  EXPECT_TRUE(oracle::all_zero(
      two_level_proto(Tensor(8, 5, 5), spec, params.local, params.coarse_restrict, proto)));

  proto.a0 = Matrix(4, 4);
  EXPECT_EQ(two_level_proto(x, spec, params.local, params.coarse_restrict, proto),
            group_conv(x, spec, params.local));
}

TEST(TwoLevel, ReductionIdentities) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GroupSpec spec{8, 12, 4, 3, 3};
    std::mt19937_64 rng(seed);
    auto params = TwoLevelParams::he_init(spec, rng, true);
    const Tensor x = random_tensor(8, 6, 5, rng);
    EXPECT_EQ(two_level(x, spec, params), group_conv(x, spec, params.local));

    const GroupSpec one{6, 4, 1, 3, 3};
    const auto p1 = TwoLevelParams::he_init(one, rng, true);
    const Tensor x1 = random_tensor(6, 4, 4, rng);
    EXPECT_EQ(two_level(x1, one, p1), standard_conv(x1, p1.local[0]));
  }
}

TEST(TwoLevel, DenseMatrixOracle) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const GroupSpec spec{4, 4, 2, 3, 3};
    const auto r = random_two_level(spec, 4, 4, seed);
    // Independent assembly: naive group conv plus naive coarse path.
    const auto op = [&](const Tensor& t) {
      Tensor y = naive_group_conv(t, spec, r.params.local);
      std::vector<Tensor> reps;
      for (std::size_t k = 0; k < 2; ++k)
        reps.push_back(oracle::naive_conv(channel_slice(t, 2 * k, 2 * k + 2),
                                          r.params.coarse_restrict[k]));
      const Tensor x0 = channel_concat(reps);
      y += oracle::naive_mix(x0, stack_coarse_mix(r.params.coarse_mix));
      return y;
    };
    const Matrix a = oracle::dense(op, 4, 4, 4);
    const auto expect = oracle::matvec(a, {r.x.values().begin(), r.x.values().end()});
    EXPECT_LE(oracle::rel_err(two_level(r.x, spec, r.params).values(), expect), 1e-12);
  }
}

TEST(TwoLevel, Additivity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = random_two_level(GroupSpec{8, 12, 4, 3, 3}, 5, 5, seed);
    const Tensor y = two_level(r.x, r.spec, r.params);
    Tensor gc = group_conv(r.x, r.spec, r.params.local);
    const Tensor coarse = coarse_combined_apply(
        coarse_restrict(r.x, r.spec, r.params.coarse_restrict), r.params.coarse_mix, r.spec);
    Tensor sum = gc;
    sum += coarse;
    EXPECT_EQ(y, sum);
    Tensor diff = Tensor::zeros_like(y);
    for (std::size_t i = 0; i < y.size(); ++i) diff.values()[i] = y.values()[i] - gc.values()[i];
    EXPECT_LE(max_rel_diff(diff, coarse), 1e-12);
  }
}

TEST(TwoLevel, IntergroupCoupling) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = random_two_level(GroupSpec{8, 12, 4, 3, 3}, 5, 5, seed);
    Tensor xp = r.x;
    xp.at(seed % 8, 2, 2) += 1.0;
    const Tensor y = two_level(r.x, r.spec, r.params);
    const Tensor yp = two_level(xp, r.spec, r.params);
    for (std::size_t g = 0; g < 4; ++g) {
      double change = 0.0;
      for (std::size_t i = 3 * g * 25; i < 3 * (g + 1) * 25; ++i)
        change = std::max(change, std::abs(y.values()[i] - yp.values()[i]));
      EXPECT_GT(change, 1e-8) << "group " << g;
    }
  }
}

TEST(TwoLevel, LinearInParameters) {
  const GroupSpec spec{4, 6, 2, 3, 3};
  std::mt19937_64 rng(12);
  const auto a = TwoLevelParams::random(spec, rng);
  const auto b = TwoLevelParams::random(spec, rng);
  const Tensor x = random_tensor(4, 4, 4, rng);
  TwoLevelParams sum = a;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < sum.local[k].weights().size(); ++i)
      sum.local[k].weights()[i] += b.local[k].weights()[i];
  }
  // local part is linear; coarse part of `sum` equals a's
  TwoLevelParams b_local_only = TwoLevelParams::zeros(spec);
  b_local_only.local = b.local;
  Tensor expect = two_level(x, spec, a);
  expect += two_level(x, spec, b_local_only);
  EXPECT_LE(max_rel_diff(two_level(x, spec, sum), expect), 1e-12);
}

TEST(Shuffle, Examples) {
  EXPECT_EQ(shuffle_permutation(4, 2), (std::vector<std::size_t>{0, 2, 1, 3}));
  EXPECT_EQ(shuffle_permutation(6, 3), (std::vector<std::size_t>{0, 2, 4, 1, 3, 5}));
  const Tensor x = oracle::gaussian(4, 3, 3, 13);
  EXPECT_EQ(channel_shuffle(x, 1), x);
  const Tensor s = channel_shuffle(x, 2);
  EXPECT_EQ(channel_slice(s, 1, 2), channel_slice(x, 2, 3));
  EXPECT_EQ(channel_unshuffle(s, 2), x);
  EXPECT_THROW(channel_shuffle(x, 3), ConfigError);
}

TEST(Shuffle, InverseOverRandomShapes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(1, 4);
    const std::size_t groups = pick(rng), per = pick(rng);
    const Tensor x = random_tensor(groups * per, 2, 3, rng);
    EXPECT_EQ(channel_unshuffle(channel_shuffle(x, groups), groups), x);
    EXPECT_EQ(channel_shuffle(channel_unshuffle(x, groups), groups), x);
  }
}

TEST(Params, ValidateAndCount) {
  const GroupSpec spec{8, 12, 4, 3, 3};
  const auto p = TwoLevelParams::zeros(spec);
  EXPECT_NO_THROW(p.validate(spec));
  EXPECT_EQ(p.parameter_count(), 4u * (3 * 2 * 9 + 2 * 9 + 3 * 4));
  EXPECT_THROW(p.validate(GroupSpec{8, 12, 2, 3, 3}), ConfigError);
}

TEST(Params, HeInitScale) {
  const GroupSpec spec{64, 64, 4, 3, 3};
  std::mt19937_64 rng(14);
  const auto p = TwoLevelParams::he_init(spec, rng);
  double ss = 0.0;
  std::size_t count = 0;
  for (const auto& k : p.local)
    for (double v : k.weights()) {
      ss += v * v;
      ++count;
    }
  const double var = ss / static_cast<double>(count);
  EXPECT_NEAR(var, 2.0 / (16 * 9), 0.1 * 2.0 / (16 * 9));
  const auto zero = TwoLevelParams::he_init(spec, rng, true);
  for (const auto& m : zero.coarse_mix)
    for (double v : m.entries()) EXPECT_EQ(v, 0.0);
}

TEST(ParamIo, RoundTrip) {
  const GroupSpec spec{8, 12, 4, 3, 1};
  std::mt19937_64 rng(15);
  const auto params = TwoLevelParams::random(spec, rng);
  const auto prefix = std::filesystem::temp_directory_path() / "t2lc_params_test";
  save_params(prefix, spec, params);
  const LoadedParams loaded = load_params(prefix);
  EXPECT_EQ(loaded.spec, spec);
  EXPECT_EQ(loaded.params, params);
  EXPECT_EQ(loaded.manifest.size(), 12u);
  EXPECT_EQ(loaded.manifest[4].role, "coarse_restrict");
  std::filesystem::remove(prefix.string() + ".bin");
  EXPECT_THROW(load_params(prefix), IngestError);
  std::filesystem::remove(prefix.string() + ".manifest");
}

#include <gtest/gtest.h>

#include <array>

#include "driu/loss.hpp"
#include "driu/network.hpp"
#include "test_util.hpp"

using namespace driu;
using driu::testing::random_tensor;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.width_scale = 8;
  return c;
}

constexpr std::array<Task, 2> kBoth{Task::vessel, Task::disc};
constexpr std::array<Task, 1> kVessel{Task::vessel};
constexpr std::array<Task, 1> kDisc{Task::disc};

int ceil_div_pow2(int n, int s) { return (n + (1 << (s - 1)) - 1) >> (s - 1); }

}  // namespace

TEST(NetConfig, DefaultFirstConvShape) {
  const auto params = build_network(NetConfig{}, 0);
  EXPECT_EQ(params.at("stage1.conv1.weight").shape(), (Shape{64, 3, 3, 3}));
  EXPECT_EQ(params.at("stage5.conv3.weight").shape(), (Shape{512, 512, 3, 3}));
  EXPECT_EQ(params.at("vessel.fuse.weight").shape(), (Shape{1, 64, 1, 1}));
  EXPECT_EQ(params.at("disc.fuse.bias").shape(), (Shape{1}));
}

TEST(NetConfig, WidthScaleDividesStages) {
  EXPECT_EQ(small_config().scaled_channels(), (std::array<int, 5>{8, 16, 32, 64, 64}));
  NetConfig bad;
  bad.width_scale = 128;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.width_scale = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(NetConfig, LayoutCoversBaseAndBothHeads) {
  const auto layout = parameter_layout(small_config());
  // 13 base convs, 4 sides per head, 1 fuse per head; weight + bias each.
  EXPECT_EQ(layout.size(), 2u * (13 + 2 * 5));
  const auto params = build_network(small_config(), 3);
  for (const auto& [name, shape] : layout) {
    ASSERT_TRUE(params.contains(name)) << name;
    EXPECT_EQ(params.at(name).shape(), shape) << name;
  }
  EXPECT_TRUE(params.contains("vessel.side1.weight"));
  EXPECT_FALSE(params.contains("vessel.side5.weight"));
  EXPECT_TRUE(params.contains("disc.side5.weight"));
  EXPECT_FALSE(params.contains("disc.side1.weight"));
}

TEST(BuildNetwork, DeterministicWithZeroBiases) {
  const auto a = build_network(small_config(), 11);
  EXPECT_EQ(a, build_network(small_config(), 11));
  EXPECT_NE(a, build_network(small_config(), 12));
  for (const auto& [name, t] : a) {
    if (t.rank() == 1) {
      for (float v : t.data()) EXPECT_EQ(v, 0.0f) << name;
    }
  }
}

TEST(Forward, StageSizesFollowCeilHalving) {
  const auto params = build_network(small_config(), 1);
  std::mt19937_64 rng(1);
  for (int h : {16, 17, 33, 64}) {
    for (int w : {16, 17, 33, 64}) {
      const Tensor x = random_tensor<float>({3, h, w}, rng);
      const auto r = forward(params, x, std::span<const Task>(kBoth));
      ASSERT_EQ(r.trace.stages.size(), 5u);
      const auto widths = small_config().scaled_channels();
      for (int s = 1; s <= 5; ++s) {
        EXPECT_EQ(r.trace.stages[static_cast<std::size_t>(s - 1)].output_shape,
                  (Shape{widths[static_cast<std::size_t>(s - 1)], ceil_div_pow2(h, s), ceil_div_pow2(w, s)}))
            << h << "x" << w << " stage " << s;
      }
      for (Task t : kBoth) EXPECT_EQ(r.outputs.at(t).activation.shape(), (Shape{1, h, w}));
    }
  }
}

TEST(Forward, HeadsReadTheirOwnStages) {
  EXPECT_EQ(head_for(Task::vessel).stages, (std::array<int, 4>{1, 2, 3, 4}));
  EXPECT_EQ(head_for(Task::disc).stages, (std::array<int, 4>{2, 3, 4, 5}));
  const auto params = build_network(small_config(), 2);
  std::mt19937_64 rng(2);
  const auto r = forward(params, random_tensor<float>({3, 40, 36}, rng), std::span<const Task>(kBoth));
  for (const auto& head : r.trace.heads) {
    const auto& stages = head_for(head.task).stages;
    for (int i = 0; i < 4; ++i) {
      const auto s = static_cast<std::size_t>(stages[static_cast<std::size_t>(i)]);
      EXPECT_EQ(head.side[static_cast<std::size_t>(i)].input.shape(), r.trace.stages[s - 1].output_shape);
    }
  }
}

TEST(Forward, BothHeadsShareOneBaseEvaluation) {
  const auto params = build_network(small_config(), 3);
  std::mt19937_64 rng(3);
  const auto r = forward(params, random_tensor<float>({3, 32, 32}, rng), std::span<const Task>(kBoth));
  EXPECT_EQ(r.trace.base_evaluations, 1);
  for (int s = 1; s <= 5; ++s) {
    for (int c = 1; c <= small_config().convs_per_stage[static_cast<std::size_t>(s - 1)]; ++c) {
      EXPECT_EQ(r.trace.conv_calls.at(conv_weight_name(s, c)), 1);
    }
  }
  EXPECT_EQ(r.trace.base_conv_calls(), 13);
  EXPECT_EQ(r.trace.conv_calls.at(fuse_weight_name(Task::vessel)), 1);
  EXPECT_EQ(r.trace.conv_calls.at(fuse_weight_name(Task::disc)), 1);
}

TEST(Forward, SharedPassMatchesSeparatePasses) {
  const auto params = build_network(small_config(), 4);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor<float>({3, 24, 20}, rng);
  const auto both = forward(params, x, std::span<const Task>(kBoth));
  EXPECT_EQ(both.outputs.at(Task::vessel).activation,
            forward(params, x, std::span<const Task>(kVessel)).outputs.at(Task::vessel).activation);
  EXPECT_EQ(both.outputs.at(Task::disc).activation,
            forward(params, x, std::span<const Task>(kDisc)).outputs.at(Task::disc).activation);
}

TEST(Forward, ProbabilitiesStrictlyInsideUnitInterval) {
  const auto params = build_network(small_config(), 5);
  std::mt19937_64 rng(5);
  const auto r = forward(params, random_tensor<float>({3, 16, 16}, rng), std::span<const Task>(kBoth));
  for (Task t : kBoth) {
    for (float p : r.outputs.at(t).probability.data()) {
      EXPECT_GT(p, 0.0f);
      EXPECT_LT(p, 1.0f);
    }
  }
}

TEST(Forward, RejectsBadInputs) {
  const auto params = build_network(small_config(), 6);
  EXPECT_THROW(forward(params, Tensor({3, 15, 32}), std::span<const Task>(kBoth)), ShapeError);
  EXPECT_THROW(forward(params, Tensor({1, 32, 32}), std::span<const Task>(kBoth)), ShapeError);
  EXPECT_THROW(forward(params, Tensor({3, 32, 32}), std::span<const Task>()), InvalidArgument);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const auto params = build_network(small_config(), 7);
  std::mt19937_64 rng(7);
  const auto r = forward(params, random_tensor<float>({3, 16, 16}, rng), std::span<const Task>(kBoth));
  const auto g = backward(params, r.trace,
                          {{Task::vessel, Tensor({1, 16, 16})}, {Task::disc, Tensor({1, 16, 16})}});
  for (const auto& [name, t] : g) {
    for (float v : t.data()) EXPECT_EQ(v, 0.0f) << name;
  }
}

TEST(Backward, VesselHeadNeverReachesStageFive) {
  const auto params = build_network(small_config(), 8);
  std::mt19937_64 rng(8);
  const auto r = forward(params, random_tensor<float>({3, 32, 32}, rng), std::span<const Task>(kVessel));
  const Mask gold = driu::testing::random_mask(32, 32, 0.1, rng);
  const auto g = backward(params, r.trace,
                          {{Task::vessel, balanced_bce_grad(r.outputs.at(Task::vessel).activation, gold)}});
  for (const auto& [name, t] : g) {
    const bool unreachable = name.rfind("stage5.", 0) == 0 || name.rfind("disc.", 0) == 0;
    float peak = 0.0f;
    for (float v : t.data()) peak = std::max(peak, std::abs(v));
    if (unreachable) {
      EXPECT_EQ(peak, 0.0f) << name;
    } else if (name.find(".weight") != std::string::npos) {
      EXPECT_GT(peak, 0.0f) << name;
    }
  }
}

TEST(Backward, RejectsUntracedHeadAndForeignTrace) {
  const auto params = build_network(small_config(), 9);
  const auto r = forward(params, Tensor({3, 16, 16}, 0.1f), std::span<const Task>(kVessel));
  EXPECT_THROW(backward(params, r.trace, {{Task::disc, Tensor({1, 16, 16})}}), ConsistencyError);
  NetConfig other = small_config();
  other.side_channels = 8;
  EXPECT_THROW(backward(build_network(other, 9), r.trace, {{Task::vessel, Tensor({1, 16, 16})}}),
               ConsistencyError);
}

TEST(ParamsFromTensors, NamesFirstMismatch) {
  const auto params = build_network(small_config(), 10);
  auto tensors = params.tensors();
  EXPECT_EQ(params_from_tensors(small_config(), tensors), params);

  auto missing = tensors;
  missing.erase("stage3.conv2.bias");
  try {
    params_from_tensors(small_config(), missing);
    FAIL() << "expected ConsistencyError";
  } catch (const ConsistencyError& e) {
    EXPECT_NE(std::string(e.what()).find("stage3.conv2.bias"), std::string::npos);
  }

  auto wrong = tensors;
  wrong.at("disc.side4.weight") = Tensor({16, 32, 3, 3});
  try {
    params_from_tensors(small_config(), wrong);
    FAIL() << "expected ConsistencyError";
  } catch (const ConsistencyError& e) {
    EXPECT_NE(std::string(e.what()).find("disc.side4.weight"), std::string::npos);
  }

  auto extra = tensors;
  extra.emplace("bogus", Tensor({1}));
  EXPECT_THROW(params_from_tensors(small_config(), extra), ConsistencyError);
}

TEST(Forward, FloatAndDoublePathsAgree) {
  const auto p32 = build_network(small_config(), 11);
  const auto p64 = p32.cast<double>();
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor<float>({3, 20, 20}, rng);
  const auto a = forward(p32, x, std::span<const Task>(kBoth));
  const auto b = forward(p64, x.cast<double>(), std::span<const Task>(kBoth));
  for (Task t : kBoth) {
    const Tensor& fa = a.outputs.at(t).activation;
    const Tensor64& da = b.outputs.at(t).activation;
    for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fa[i], da[i], 1e-4 * std::max(1.0, std::abs(da[i])));
  }
}

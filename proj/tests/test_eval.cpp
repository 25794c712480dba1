#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "driu/eval.hpp"
#include "test_util.hpp"

using namespace driu;
using driu::testing::random_mask;
using driu::testing::random_tensor;

namespace {

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

Counts brute_counts(std::span<const Tensor> probs, std::span<const Mask> golds,
                    std::span<const std::optional<Mask>> fovs, double t) {
  Counts c;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    for (std::size_t j = 0; j < golds[i].size(); ++j) {
      if (!fovs.empty() && fovs[i] && !(*fovs[i])[j]) continue;
      const bool pred = static_cast<double>(probs[i][j]) > t;
      const bool gold = golds[i][j] != 0;
      c.tp += pred && gold;
      c.fp += pred && !gold;
      c.fn += !pred && gold;
    }
  }
  return c;
}

// Nearest boundary pixel by scanning every pair.
double brute_boundary_error(const Mask& a, const Mask& b) {
  const auto pa = boundary_extract(a), pb = boundary_extract(b);
  auto directed = [](const std::vector<Pixel>& from, const std::vector<Pixel>& to) {
    double sum = 0.0;
    for (const Pixel& p : from) {
      double best = 1e300;
      for (const Pixel& q : to) best = std::min(best, std::hypot(double(p.y - q.y), double(p.x - q.x)));
      sum += best;
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (directed(pa, pb) + directed(pb, pa));
}

Tensor prob_from(int h, int w, std::vector<float> v) { return Tensor({1, h, w}, std::move(v)); }

PRCurve curve_with_f(const std::vector<double>& fs) {
  PRCurve c;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    PRPoint p;
    p.threshold = 0.1 * static_cast<double>(i + 1);
    p.f = fs[i];
    c.points.push_back(p);
  }
  return c;
}

}  // namespace

TEST(Binarize, StrictInequality) {
  EXPECT_EQ(binarize(prob_from(1, 2, {0.4f, 0.6f}), 0.5).values(), (std::vector<std::uint8_t>{0, 1}));
  EXPECT_EQ(binarize(prob_from(1, 3, {0.2f, 0.3f, 0.9f}), 0.19).count_foreground(), 3u);
  EXPECT_EQ(binarize(prob_from(1, 1, {0.5f}), 0.5).count_foreground(), 0u);
  EXPECT_EQ(binarize(Tensor({2, 2}, 0.7f), 0.5).count_foreground(), 4u);
  EXPECT_THROW(binarize(Tensor({2, 2, 2}), 0.5), ShapeError);
}

TEST(Thresholds, UniformGrid) {
  const auto t = default_thresholds();
  ASSERT_EQ(t.size(), 255u);
  EXPECT_DOUBLE_EQ(t.front(), 1.0 / 256);
  EXPECT_DOUBLE_EQ(t.back(), 255.0 / 256);
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_DOUBLE_EQ(t[k], double(k + 1) / 256);
}

TEST(PrecisionRecall, Conventions) {
  const auto none = precision_recall(0, 0, 0);
  EXPECT_EQ(none.precision, 1.0);
  EXPECT_EQ(none.recall, 1.0);
  EXPECT_EQ(none.f, 1.0);
  const auto zero = precision_recall(0, 3, 4);
  EXPECT_EQ(zero.f, 0.0);
  const auto r = precision_recall(1, 1, 0);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.f, 2.0 / 3.0);
}

TEST(PrCurve, FourPixelExample) {
  const std::vector<Tensor> probs{prob_from(2, 2, {0.9f, 0.6f, 0.2f, 0.1f})};
  const std::vector<Mask> golds{Mask(2, 2, std::vector<std::uint8_t>{1, 0, 0, 0})};
  const PRCurve c = pr_curve(probs, golds, {}, {0.5});
  ASSERT_EQ(c.points.size(), 1u);
  const PRPoint& p = c.points[0];
  EXPECT_EQ(p.tp, 1u);
  EXPECT_EQ(p.fp, 1u);
  EXPECT_EQ(p.fn, 0u);
  EXPECT_DOUBLE_EQ(p.precision, 0.5);
  EXPECT_DOUBLE_EQ(p.recall, 1.0);
  EXPECT_DOUBLE_EQ(p.f, 2.0 / 3.0);
}

TEST(PrCurve, PerfectPredictionAtEveryThreshold) {
  std::mt19937_64 rng(1);
  const Mask gold = random_mask(8, 8, 0.3, rng);
  const std::vector<Tensor> probs{gold.to_tensor()};
  const std::vector<Mask> golds{gold};
  for (const PRPoint& p : pr_curve(probs, golds, {}, default_thresholds()).points) {
    EXPECT_EQ(p.precision, 1.0);
    EXPECT_EQ(p.recall, 1.0);
    EXPECT_EQ(p.f, 1.0);
  }
}

TEST(PrCurve, MatchesBruteForceOracleExactly) {
  std::mt19937_64 rng(2);
  const auto thresholds = default_thresholds();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tensor> probs;
    std::vector<Mask> golds;
    std::vector<std::optional<Mask>> fovs;
    const int n = 1 + trial % 3;
    for (int i = 0; i < n; ++i) {
      Tensor p = random_tensor<float>({1, 8, 8}, rng, 0.0, 1.0);
      // Land some values exactly on grid points to exercise the strict tie rule.
      for (std::size_t j = 0; j < p.size(); j += 7) p[j] = static_cast<float>((j % 255 + 1) / 256.0);
      probs.push_back(p);
      golds.push_back(random_mask(8, 8, 0.25, rng));
      if (trial % 2 == 0) fovs.emplace_back(random_mask(8, 8, 0.8, rng));
      else fovs.emplace_back(std::nullopt);
    }
    for (bool use_fov : {true, false}) {
      EvalOptions options;
      options.use_fov = use_fov;
      options.threads = trial % 4;
      const PRCurve c = pr_curve(probs, golds, fovs, thresholds, options);
      ASSERT_EQ(c.points.size(), thresholds.size());
      const std::span<const std::optional<Mask>> used = use_fov ? std::span<const std::optional<Mask>>(fovs)
                                                                : std::span<const std::optional<Mask>>();
      for (std::size_t k = 0; k < thresholds.size(); ++k) {
        const Counts want = brute_counts(probs, golds, used, thresholds[k]);
        const PRPoint& got = c.points[k];
        ASSERT_EQ(got.tp, want.tp) << "trial " << trial << " k " << k;
        ASSERT_EQ(got.fp, want.fp) << "trial " << trial << " k " << k;
        ASSERT_EQ(got.fn, want.fn) << "trial " << trial << " k " << k;
      }
    }
  }
}

TEST(PrCurve, RecallNonIncreasingAndGoldTotalConstant) {
  std::mt19937_64 rng(3);
  std::vector<Tensor> probs;
  std::vector<Mask> golds;
  for (int i = 0; i < 4; ++i) {
    probs.push_back(random_tensor<float>({1, 12, 10}, rng, 0.0, 1.0));
    golds.push_back(random_mask(12, 10, 0.2, rng));
  }
  const PRCurve c = pr_curve(probs, golds, {}, default_thresholds());
  std::uint64_t total = 0;
  for (const Mask& g : golds) total += g.count_foreground();
  for (std::size_t k = 0; k < c.points.size(); ++k) {
    EXPECT_EQ(c.points[k].tp + c.points[k].fn, total);
    if (k > 0) {
      EXPECT_LE(c.points[k].recall, c.points[k - 1].recall);
    }
  }
}

TEST(PrCurve, ThresholdOrderDoesNotMatter) {
  std::mt19937_64 rng(4);
  const std::vector<Tensor> probs{random_tensor<float>({1, 9, 9}, rng, 0.0, 1.0)};
  const std::vector<Mask> golds{random_mask(9, 9, 0.3, rng)};
  auto shuffled = default_thresholds();
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const PRCurve a = pr_curve(probs, golds, {}, default_thresholds());
  const PRCurve b = pr_curve(probs, golds, {}, shuffled);
  EXPECT_EQ(ods(a).threshold, ods(b).threshold);
  for (std::size_t k = 0; k < a.points.size(); ++k) EXPECT_EQ(a.points[k].threshold, b.points[k].threshold);
}

TEST(PrCurve, InvalidInputs) {
  const std::vector<Tensor> probs{Tensor({1, 2, 3}, 0.5f)};
  const std::vector<Mask> golds{Mask(3, 2)};
  EXPECT_THROW(pr_curve(probs, golds, {}, {0.5}), ShapeError);
  const std::vector<Mask> ok{Mask(2, 3)};
  EXPECT_THROW(pr_curve(probs, ok, {}, {}), InvalidArgument);
  EXPECT_THROW(pr_curve(probs, ok, {}, {1.0}), InvalidArgument);
  const std::vector<std::optional<Mask>> bad_fov{Mask(3, 3)};
  EXPECT_THROW(pr_curve(probs, ok, bad_fov, {0.5}), ShapeError);
}

TEST(Dice, Examples) {
  const Mask a(2, 3, std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0});
  const Mask b(2, 3, std::vector<std::uint8_t>{0, 1, 1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(dice(a, a), 1.0);
  EXPECT_DOUBLE_EQ(dice(a, a.complement()), 0.0);
  EXPECT_DOUBLE_EQ(dice(a, b), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(dice(Mask(3, 3), Mask(3, 3)), 1.0);
  EXPECT_THROW(dice(a, Mask(3, 2)), ShapeError);
}

TEST(Dice, EqualsFMeasureOnRandomPairs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Mask a = random_mask(7, 9, 0.3, rng), b = random_mask(7, 9, 0.3, rng);
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      tp += a[i] && b[i];
      fp += a[i] && !b[i];
      fn += !a[i] && b[i];
    }
    EXPECT_NEAR(dice(a, b), precision_recall(tp, fp, fn).f, 1e-12) << "trial " << trial;
  }
}

TEST(Ods, TieGoesToLowerThreshold) {
  EXPECT_EQ(ods(curve_with_f({0.2, 0.9, 0.9, 0.1})).index, 1u);
  EXPECT_DOUBLE_EQ(ods(curve_with_f({0.2, 0.9, 0.9, 0.1})).threshold, 0.2);
  EXPECT_EQ(ods(curve_with_f({0.4})).index, 0u);
  EXPECT_THROW(ods(PRCurve{}), EmptyInputError);
}

TEST(Ods, MatchesExhaustiveScan) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<Tensor> probs{random_tensor<float>({1, 16, 16}, rng, 0.0, 1.0)};
    const std::vector<Mask> golds{random_mask(16, 16, 0.2, rng)};
    const PRCurve c = pr_curve(probs, golds, {}, default_thresholds());
    double best = -1.0, best_t = 0.0;
    for (double t : default_thresholds()) {
      const Counts k = brute_counts(probs, golds, {}, t);
      const double f = precision_recall(k.tp, k.fp, k.fn).f;
      if (f > best) {
        best = f;
        best_t = t;
      }
    }
    EXPECT_EQ(ods(c).threshold, best_t);
    EXPECT_DOUBLE_EQ(ods(c).f, best);
  }
}

TEST(HumanPoints, SelfAgreementAndComplement) {
  std::mt19937_64 rng(7);
  const Mask gold = random_mask(8, 8, 0.3, rng);
  const Mask fov = random_mask(8, 8, 0.7, rng);
  Mask within(8, 8);
  for (std::size_t i = 0; i < gold.size(); ++i) within.set(i, fov[i] && !gold[i]);
  const std::vector<std::string> ids{"same", "complement", "none"};
  const std::vector<std::optional<Mask>> seconds{gold, within, std::nullopt};
  const std::vector<Mask> golds{gold, gold, gold};
  const std::vector<std::optional<Mask>> fovs{fov, fov, fov};
  const HumanPoints h = human_points(ids, seconds, golds, fovs);
  ASSERT_EQ(h.per_image.size(), 2u);
  EXPECT_EQ(h.per_image[0].pr.precision, 1.0);
  EXPECT_EQ(h.per_image[0].pr.recall, 1.0);
  EXPECT_EQ(h.per_image[0].pr.f, 1.0);
  EXPECT_EQ(h.per_image[1].pr.precision, 0.0);
  EXPECT_EQ(h.per_image[1].pr.recall, 0.0);
  EXPECT_EQ(h.per_image[1].pr.f, 0.0);
  EXPECT_EQ(h.skipped, (std::vector<std::string>{"none"}));
  ASSERT_TRUE(h.pooled.has_value());
}

TEST(HumanPoints, MatchesBruteForceCounts) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Mask gold = random_mask(8, 8, 0.3, rng), second = random_mask(8, 8, 0.3, rng);
    const Mask fov = random_mask(8, 8, 0.8, rng);
    const std::vector<std::string> ids{"a"};
    const std::vector<std::optional<Mask>> seconds{second};
    const std::vector<Mask> golds{gold};
    const std::vector<std::optional<Mask>> fovs{fov};
    const std::vector<Tensor> as_prob{second.to_tensor()};
    const Counts k = brute_counts(as_prob, golds, fovs, 0.5);
    const auto want = precision_recall(k.tp, k.fp, k.fn);
    const HumanPoints h = human_points(ids, seconds, golds, fovs);
    EXPECT_EQ(h.per_image.at(0).pr.precision, want.precision);
    EXPECT_EQ(h.per_image.at(0).pr.recall, want.recall);
    EXPECT_EQ(h.pooled->f, want.f);
  }
}

TEST(BoundaryExtract, Examples) {
  Mask square(5, 5);
  for (int y = 1; y <= 3; ++y) {
    for (int x = 1; x <= 3; ++x) square.set(y, x, true);
  }
  const auto b = boundary_extract(square);
  EXPECT_EQ(b.size(), 8u);
  EXPECT_EQ(std::count(b.begin(), b.end(), Pixel{2, 2}), 0);

  Mask dot(4, 4);
  dot.set(2, 1, true);
  EXPECT_EQ(boundary_extract(dot), (std::vector<Pixel>{{2, 1}}));

  const auto ring = boundary_extract(Mask(4, 5, 1));
  EXPECT_EQ(ring.size(), 2u * 5 + 2u * 2);
  for (const Pixel& p : ring) EXPECT_TRUE(p.y == 0 || p.y == 3 || p.x == 0 || p.x == 4);
  EXPECT_TRUE(boundary_extract(Mask(3, 3)).empty());
}

TEST(DistanceTransform, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Mask set = random_mask(11, 13, 0.05, rng);
    set.set(static_cast<std::size_t>(trial), true);
    const auto d = distance_transform(set);
    for (int y = 0; y < 11; ++y) {
      for (int x = 0; x < 13; ++x) {
        double best = 1e300;
        for (int qy = 0; qy < 11; ++qy) {
          for (int qx = 0; qx < 13; ++qx) {
            if (set.at(qy, qx)) best = std::min(best, std::hypot(double(y - qy), double(x - qx)));
          }
        }
        EXPECT_NEAR(d[static_cast<std::size_t>(y * 13 + x)], best, 1e-9);
      }
    }
  }
  EXPECT_THROW(distance_transform(Mask(3, 3)), UndefinedBoundaryError);
}

TEST(BoundaryError, Examples) {
  std::mt19937_64 rng(10);
  const Mask m = random_mask(10, 10, 0.4, rng);
  EXPECT_EQ(boundary_error(m, m), 0.0);
  Mask a(6, 6), b(6, 6);
  a.set(0, 0, true);
  b.set(3, 4, true);
  EXPECT_DOUBLE_EQ(boundary_error(a, b), 5.0);
  EXPECT_THROW(boundary_error(a, Mask(6, 6)), UndefinedBoundaryError);
  EXPECT_THROW(boundary_error(Mask(6, 6), b), UndefinedBoundaryError);
  EXPECT_THROW(boundary_error(a, Mask(5, 6, 1)), ShapeError);
}

TEST(BoundaryError, MatchesAllPairsOracleAndIsSymmetric) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Mask a = random_mask(16, 16, 0.3, rng), b = random_mask(16, 16, 0.15, rng);
    a.set(0, true);
    b.set(255, true);
    const double e = boundary_error(a, b);
    EXPECT_NEAR(e, brute_boundary_error(a, b), 1e-9) << "trial " << trial;
    EXPECT_EQ(e, boundary_error(b, a));
    EXPECT_GE(e, 0.0);
  }
}

TEST(Quartiles, LinearInterpolation) {
  const std::vector<double> odd{5, 1, 4, 2, 3};
  const BoxStats s = quartiles(odd);
  EXPECT_EQ(s.min, 1.0);
  EXPECT_EQ(s.median, 3.0);
  EXPECT_EQ(s.max, 5.0);
  const std::vector<double> even{1, 2, 3, 4};
  const BoxStats e = quartiles(even);
  EXPECT_DOUBLE_EQ(e.q1, 1.75);
  EXPECT_DOUBLE_EQ(e.median, 2.5);
  EXPECT_DOUBLE_EQ(e.q3, 3.25);
  const std::vector<double> flat{2, 2, 2};
  const BoxStats c = quartiles(flat);
  for (double v : {c.min, c.q1, c.median, c.q3, c.max}) EXPECT_EQ(v, 2.0);
  EXPECT_THROW(quartiles(std::vector<double>{}), EmptyInputError);
}

TEST(BoundaryStats, UndefinedImagesAreCountedAndExcluded) {
  Mask gold(6, 6);
  gold.set(2, 2, true);
  const std::vector<std::string> ids{"hit", "blank"};
  const std::vector<Tensor> probs{gold.to_tensor(), Tensor({1, 6, 6}, 0.1f)};
  const std::vector<Mask> golds{gold, gold};
  const BoundaryStats s = boundary_stats(ids, probs, golds, 0.5);
  ASSERT_EQ(s.per_image.size(), 1u);
  EXPECT_EQ(s.per_image[0].first, "hit");
  EXPECT_EQ(s.per_image[0].second, 0.0);
  EXPECT_EQ(s.undefined, (std::vector<std::string>{"blank"}));
  ASSERT_TRUE(s.summary.has_value());
  EXPECT_EQ(s.summary->max, 0.0);
}

TEST(Reports, CsvHeadersAndSummaryKeys) {
  const std::vector<Tensor> probs{prob_from(2, 2, {0.9f, 0.6f, 0.2f, 0.1f})};
  const std::vector<Mask> golds{Mask(2, 2, std::vector<std::uint8_t>{1, 0, 0, 0})};
  const PRCurve c = pr_curve(probs, golds, {}, default_thresholds());
  std::ostringstream pr;
  write_pr_csv(pr, c);
  std::istringstream lines(pr.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "threshold,tp,fp,fn,precision,recall,f");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 255);

  const std::vector<std::string> ids{"x"};
  const BoundaryStats b = boundary_stats(ids, probs, golds, ods(c).threshold);
  std::ostringstream bc;
  write_boundary_csv(bc, b);
  EXPECT_EQ(bc.str().substr(0, bc.str().find('\n')), "image_id,mean_boundary_error_px");
  std::ostringstream hc;
  write_human_csv(hc, HumanPoints{});
  EXPECT_EQ(hc.str(), "image_id,precision,recall,f\n");

  const std::string summary = format_summary(c, nullptr, b);
  for (const char* key : {"ods_threshold = ", "ods_f = 1", "boundary_median = 0"}) {
    EXPECT_NE(summary.find(key), std::string::npos) << key;
  }
}

TEST(Threads, EnvironmentOverride) {
  ::setenv("DRIU_THREADS", "3", 1);
  EXPECT_EQ(eval_threads_from_env(), 3);
  ::setenv("DRIU_THREADS", "x", 1);
  EXPECT_THROW(eval_threads_from_env(), ConfigError);
  ::unsetenv("DRIU_THREADS");
  EXPECT_GE(eval_threads_from_env(), 0);
}

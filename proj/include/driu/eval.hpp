#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "driu/mask.hpp"
#include "driu/tensor.hpp"

namespace driu {

/// Foreground iff p > threshold. Accepts (1,H,W) or (H,W) maps.
Mask binarize(const Tensor& probability, double threshold);

/// k/256 for k = 1..255.
std::vector<double> default_thresholds();

struct PrecisionRecall {
  double precision = 1.0;
  double recall = 1.0;
  double f = 0.0;
};

/// P = TP/(TP+FP) (1 when nothing is predicted), R = TP/(TP+FN) (1 when the
/// gold is empty), F = 2PR/(P+R) (0 when P+R = 0).
PrecisionRecall precision_recall(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

struct PRPoint {
  double threshold = 0.0;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // ascending threshold
};

struct EvalOptions {
  bool use_fov = true;  // ignored for images without a FOV mask
  int threads = 0;      // 0: serial
};

/// Dataset-pooled pixel counts at every threshold. `fovs` may be empty or hold
/// one optional mask per image.
PRCurve pr_curve(std::span<const Tensor> probabilities, std::span<const Mask> golds,
                 std::span<const std::optional<Mask>> fovs, std::vector<double> thresholds,
                 const EvalOptions& options = {});

/// 2|A n B| / (|A| + |B|), 1 when both are empty.
double dice(const Mask& a, const Mask& b);

struct OdsResult {
  double threshold = 0.0;
  double f = 0.0;
  std::size_t index = 0;
};

/// Threshold with the highest pooled F; ties go to the lower threshold.
OdsResult ods(const PRCurve& curve);

struct ImagePoint {
  std::string id;
  PrecisionRecall pr;
};

struct HumanPoints {
  std::vector<ImagePoint> per_image;
  std::optional<PrecisionRecall> pooled;
  std::vector<std::string> skipped;  // ids without a second annotation
};

/// Scores each second annotation against its gold standard per image, plus the
/// pooled aggregate.
HumanPoints human_points(std::span<const std::string> ids, std::span<const std::optional<Mask>> seconds,
                         std::span<const Mask> golds, std::span<const std::optional<Mask>> fovs, bool use_fov = true);

struct Pixel {
  int y = 0;
  int x = 0;
  bool operator==(const Pixel&) const = default;
};

/// Foreground pixels with a background (or out-of-image) 4-neighbour, in
/// row-major order.
std::vector<Pixel> boundary_extract(const Mask& mask);

/// Exact Euclidean distance from every pixel to the nearest pixel of `set`,
/// via the separable two-pass lower-envelope transform.
std::vector<double> distance_transform(const Mask& set);

/// Symmetric mean boundary distance in pixels. Throws UndefinedBoundaryError
/// when either mask has no foreground.
double boundary_error(const Mask& predicted, const Mask& gold);

struct BoxStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Five-number summary, linearly interpolating between order statistics.
BoxStats quartiles(std::span<const double> values);

struct BoundaryStats {
  std::vector<std::pair<std::string, double>> per_image;
  std::vector<std::string> undefined;  // ids excluded because a boundary was empty
  std::optional<BoxStats> summary;
};

BoundaryStats boundary_stats(std::span<const std::string> ids, std::span<const Tensor> probabilities,
                             std::span<const Mask> golds, double threshold);

void write_pr_csv(std::ostream& os, const PRCurve& curve);
void write_human_csv(std::ostream& os, const HumanPoints& points);
void write_boundary_csv(std::ostream& os, const BoundaryStats& stats);
std::string format_summary(const PRCurve& curve, const HumanPoints* human, const BoundaryStats& boundary);

/// Worker count from DRIU_THREADS (unset: hardware concurrency, 0: serial).
int eval_threads_from_env();

}  // namespace driu

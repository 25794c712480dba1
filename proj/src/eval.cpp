#include "driu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace driu {

namespace {

void check_map_size(const Tensor& probability, const Mask& mask, std::size_t index) {
  const bool shaped = (probability.rank() == 3 && probability.dim(0) == 1 && probability.dim(1) == mask.height() &&
                       probability.dim(2) == mask.width()) ||
                      (probability.rank() == 2 && probability.dim(0) == mask.height() &&
                       probability.dim(1) == mask.width());
  if (!shaped) {
    throw ShapeError("image " + std::to_string(index) + ": probability map " + shape_to_string(probability.shape()) +
                     " does not match mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  }
}

const Mask* fov_for(std::span<const std::optional<Mask>> fovs, std::size_t i, bool use_fov) {
  if (!use_fov || fovs.empty() || !fovs[i]) return nullptr;
  return &*fovs[i];
}

struct Histogram {
  std::vector<std::uint64_t> foreground;
  std::vector<std::uint64_t> background;
};

}  // namespace

Mask binarize(const Tensor& probability, double threshold) {
  int height = 0, width = 0;
  if (probability.rank() == 3 && probability.dim(0) == 1) {
    height = probability.dim(1);
    width = probability.dim(2);
  } else if (probability.rank() == 2) {
    height = probability.dim(0);
    width = probability.dim(1);
  } else {
    throw ShapeError("probability map must be (1,H,W) or (H,W), got " + shape_to_string(probability.shape()));
  }
  Mask out(height, width);
  for (std::size_t i = 0; i < probability.size(); ++i) out.set(i, static_cast<double>(probability[i]) > threshold);
  return out;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  t.reserve(255);
  for (int k = 1; k <= 255; ++k) t.push_back(k / 256.0);
  return t;
}

PrecisionRecall precision_recall(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  PrecisionRecall pr;
  pr.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  pr.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double sum = pr.precision + pr.recall;
  pr.f = sum == 0.0 ? 0.0 : 2.0 * pr.precision * pr.recall / sum;
  return pr;
}

PRCurve pr_curve(std::span<const Tensor> probabilities, std::span<const Mask> golds,
                 std::span<const std::optional<Mask>> fovs, std::vector<double> thresholds,
                 const EvalOptions& options) {
  if (probabilities.size() != golds.size()) throw ShapeError("pr_curve: different numbers of maps and gold masks");
  if (!fovs.empty() && fovs.size() != golds.size()) throw ShapeError("pr_curve: FOV list length mismatch");
  if (thresholds.empty()) throw InvalidArgument("pr_curve: no thresholds");
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw InvalidArgument("pr_curve: thresholds must lie in (0,1)");
  }
  std::sort(thresholds.begin(), thresholds.end());
  for (std::size_t i = 0; i < golds.size(); ++i) {
    check_map_size(probabilities[i], golds[i], i);
    if (const Mask* fov = fov_for(fovs, i, options.use_fov); fov && !fov->same_size(golds[i])) {
      throw ShapeError("pr_curve: FOV mask of image " + std::to_string(i) + " has the wrong size");
    }
  }

  const std::size_t bins = thresholds.size() + 1;
  auto count_range = [&](std::size_t begin, std::size_t end, Histogram& h) {
    h.foreground.assign(bins, 0);
    h.background.assign(bins, 0);
    for (std::size_t i = begin; i < end; ++i) {
      const Tensor& prob = probabilities[i];
      const Mask& gold = golds[i];
      const Mask* fov = fov_for(fovs, i, options.use_fov);
      for (std::size_t j = 0; j < gold.size(); ++j) {
        if (fov && !(*fov)[j]) continue;
        // number of thresholds t with t < p, i.e. where the pixel is positive
        const auto bin = static_cast<std::size_t>(
            std::lower_bound(thresholds.begin(), thresholds.end(), static_cast<double>(prob[j])) -
            thresholds.begin());
        (gold[j] ? h.foreground : h.background)[bin] += 1;
      }
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(options.threads, 1)), std::max<std::size_t>(golds.size(), 1));
  std::vector<Histogram> partial(workers);
  if (workers <= 1) {
    count_range(0, golds.size(), partial[0]);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (golds.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(golds.size(), w * chunk), end = std::min(golds.size(), begin + chunk);
      pool.emplace_back(count_range, begin, end, std::ref(partial[w]));
    }
    for (auto& t : pool) t.join();
  }
  Histogram total{std::vector<std::uint64_t>(bins, 0), std::vector<std::uint64_t>(bins, 0)};
  for (const auto& h : partial) {
    for (std::size_t b = 0; b < bins; ++b) {
      total.foreground[b] += h.foreground[b];
      total.background[b] += h.background[b];
    }
  }

  std::uint64_t gold_total = 0;
  for (auto c : total.foreground) gold_total += c;
  PRCurve curve;
  curve.points.resize(thresholds.size());
  std::uint64_t tp = 0, fp = 0;
  // Walk from the highest threshold down, accumulating the pixels above it.
  for (std::size_t k = thresholds.size(); k-- > 0;) {
    tp += total.foreground[k + 1];
    fp += total.background[k + 1];
    PRPoint& pt = curve.points[k];
    pt.threshold = thresholds[k];
    pt.tp = tp;
    pt.fp = fp;
    pt.fn = gold_total - tp;
    const PrecisionRecall pr = precision_recall(pt.tp, pt.fp, pt.fn);
    pt.precision = pr.precision;
    pt.recall = pr.recall;
    pt.f = pr.f;
  }
  return curve;
}

double dice(const Mask& a, const Mask& b) {
  if (!a.same_size(b)) throw ShapeError("dice: mask sizes differ");
  std::size_t both = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
    both += a[i] & b[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

OdsResult ods(const PRCurve& curve) {
  if (curve.points.empty()) throw EmptyInputError("ods: empty curve");
  std::vector<std::size_t> order(curve.points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return curve.points[a].threshold < curve.points[b].threshold;
  });
  std::size_t best = order.front();
  for (std::size_t i : order) {
    if (curve.points[i].f > curve.points[best].f) best = i;
  }
  return {curve.points[best].threshold, curve.points[best].f, best};
}

HumanPoints human_points(std::span<const std::string> ids, std::span<const std::optional<Mask>> seconds,
                         std::span<const Mask> golds, std::span<const std::optional<Mask>> fovs, bool use_fov) {
  if (ids.size() != golds.size() || seconds.size() != golds.size()) {
    throw ShapeError("human_points: ids, second annotations and gold masks differ in length");
  }
  if (!fovs.empty() && fovs.size() != golds.size()) throw ShapeError("human_points: FOV list length mismatch");
  HumanPoints out;
  std::uint64_t tp_all = 0, fp_all = 0, fn_all = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (!seconds[i]) {
      out.skipped.push_back(ids[i]);
      continue;
    }
    const Mask& second = *seconds[i];
    const Mask& gold = golds[i];
    if (!second.same_size(gold)) throw ShapeError("human_points: '" + ids[i] + "' second annotation size differs");
    const Mask* fov = fov_for(fovs, i, use_fov);
    if (fov && !fov->same_size(gold)) throw ShapeError("human_points: '" + ids[i] + "' FOV size differs");
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t j = 0; j < gold.size(); ++j) {
      if (fov && !(*fov)[j]) continue;
      if (second[j] && gold[j]) ++tp;
      else if (second[j]) ++fp;
      else if (gold[j]) ++fn;
    }
    out.per_image.push_back({ids[i], precision_recall(tp, fp, fn)});
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  if (!out.per_image.empty()) out.pooled = precision_recall(tp_all, fp_all, fn_all);
  return out;
}

std::vector<Pixel> boundary_extract(const Mask& mask) {
  std::vector<Pixel> out;
  const int h = mask.height(), w = mask.width();
  auto background = [&](int y, int x) { return y < 0 || y >= h || x < 0 || x >= w || !mask.at(y, x); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      if (background(y - 1, x) || background(y + 1, x) || background(y, x - 1) || background(y, x + 1)) {
        out.push_back({y, x});
      }
    }
  }
  return out;
}

namespace {

constexpr double kFar = 1e20;

// Squared distance transform of a sampled function along one line.
void distance_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -kFar;
  z[1] = kFar;
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + static_cast<double>(q) * q) -
           (f[static_cast<std::size_t>(p)] + static_cast<double>(p) * p)) /
          (2.0 * q - 2.0 * p);
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    if (s <= z[static_cast<std::size_t>(k)]) {
      // k == 0 and the new parabola dominates everywhere
      v[0] = q;
      z[0] = -kFar;
      z[1] = kFar;
      continue;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kFar;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = static_cast<double>(q - p) * (q - p) + f[static_cast<std::size_t>(p)];
  }
}

}  // namespace

std::vector<double> distance_transform(const Mask& set) {
  if (set.count_foreground() == 0) throw UndefinedBoundaryError("distance transform of an empty set");
  const int h = set.height(), w = set.width();
  const int n = std::max(h, w);
  std::vector<double> grid(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) grid[i] = set[i] ? 0.0 : kFar;
  std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);

  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
    distance_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, w, f.begin());
    distance_1d(f, d, v, z);
    std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  for (double& g : grid) g = std::sqrt(g);
  return grid;
}

namespace {

Mask pixels_to_mask(const std::vector<Pixel>& pixels, int h, int w) {
  Mask m(h, w);
  for (const Pixel& p : pixels) m.set(p.y, p.x, true);
  return m;
}

double mean_distance(const std::vector<Pixel>& from, const std::vector<double>& field, int width) {
  double sum = 0.0;
  for (const Pixel& p : from) sum += field[static_cast<std::size_t>(p.y) * width + p.x];
  return sum / static_cast<double>(from.size());
}

}  // namespace

double boundary_error(const Mask& predicted, const Mask& gold) {
  if (!predicted.same_size(gold)) throw ShapeError("boundary_error: mask sizes differ");
  const auto pred_boundary = boundary_extract(predicted);
  const auto gold_boundary = boundary_extract(gold);
  if (pred_boundary.empty() || gold_boundary.empty()) {
    throw UndefinedBoundaryError(pred_boundary.empty() ? "predicted mask has no boundary" : "gold mask has no boundary");
  }
  const int h = gold.height(), w = gold.width();
  const auto to_gold = distance_transform(pixels_to_mask(gold_boundary, h, w));
  const auto to_pred = distance_transform(pixels_to_mask(pred_boundary, h, w));
  const double forward = mean_distance(pred_boundary, to_gold, w);
  const double reverse = mean_distance(gold_boundary, to_pred, w);
  return (forward + reverse) / 2.0;
}

BoxStats quartiles(std::span<const double> values) {
  if (values.empty()) throw EmptyInputError("quartiles of an empty list");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  return {s.front(), at(0.25), at(0.5), at(0.75), s.back()};
}

BoundaryStats boundary_stats(std::span<const std::string> ids, std::span<const Tensor> probabilities,
                             std::span<const Mask> golds, double threshold) {
  if (ids.size() != golds.size() || probabilities.size() != golds.size()) {
    throw ShapeError("boundary_stats: list lengths differ");
  }
  BoundaryStats stats;
  std::vector<double> values;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    check_map_size(probabilities[i], golds[i], i);
    try {
      const double e = boundary_error(binarize(probabilities[i], threshold), golds[i]);
      stats.per_image.emplace_back(ids[i], e);
      values.push_back(e);
    } catch (const UndefinedBoundaryError&) {
      stats.undefined.push_back(ids[i]);
    }
  }
  if (!values.empty()) stats.summary = quartiles(values);
  return stats;
}

void write_pr_csv(std::ostream& os, const PRCurve& curve) {
  os.precision(10);
  os << "threshold,tp,fp,fn,precision,recall,f\n";
  for (const auto& p : curve.points) {
    os << p.threshold << ',' << p.tp << ',' << p.fp << ',' << p.fn << ',' << p.precision << ',' << p.recall << ','
       << p.f << '\n';
  }
}

void write_human_csv(std::ostream& os, const HumanPoints& points) {
  os.precision(10);
  os << "image_id,precision,recall,f\n";
  for (const auto& p : points.per_image) {
    os << p.id << ',' << p.pr.precision << ',' << p.pr.recall << ',' << p.pr.f << '\n';
  }
}

void write_boundary_csv(std::ostream& os, const BoundaryStats& stats) {
  os.precision(10);
  os << "image_id,mean_boundary_error_px\n";
  for (const auto& [id, e] : stats.per_image) os << id << ',' << e << '\n';
}

std::string format_summary(const PRCurve& curve, const HumanPoints* human, const BoundaryStats& boundary) {
  std::ostringstream os;
  os.precision(6);
  const OdsResult best = ods(curve);
  const PRPoint& p = curve.points[best.index];
  os << "ods_threshold = " << best.threshold << '\n';
  os << "ods_f = " << best.f << '\n';
  os << "ods_precision = " << p.precision << '\n';
  os << "ods_recall = " << p.recall << '\n';
  if (human && human->pooled) {
    os << "human_images = " << human->per_image.size() << '\n';
    os << "human_precision = " << human->pooled->precision << '\n';
    os << "human_recall = " << human->pooled->recall << '\n';
    os << "human_f = " << human->pooled->f << '\n';
  }
  if (human && !human->skipped.empty()) os << "human_skipped = " << human->skipped.size() << '\n';
  os << "boundary_images = " << boundary.per_image.size() << '\n';
  os << "boundary_undefined = " << boundary.undefined.size() << '\n';
  if (boundary.summary) {
    const BoxStats& b = *boundary.summary;
    os << "boundary_min = " << b.min << '\n';
    os << "boundary_q1 = " << b.q1 << '\n';
    os << "boundary_median = " << b.median << '\n';
    os << "boundary_q3 = " << b.q3 << '\n';
    os << "boundary_max = " << b.max << '\n';
  }
  return os.str();
}

int eval_threads_from_env() {
  const char* env = std::getenv("DRIU_THREADS");
  if (env == nullptr || *env == '\0') return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || n < 0) throw ConfigError("DRIU_THREADS must be a non-negative integer");
  return static_cast<int>(n);
}

}  // namespace driu

#include "driu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "driu/fileio.hpp"
#include "driu/image_io.hpp"

namespace driu {

namespace {

struct Segment {
  double x0, y0, x1, y1;
  int width;  // pixels, 1..3
  int depth;
};

struct Geometry {
  int size = 0;
  double center = 0.0;
  double fov_radius = 0.0;
  double disc_x = 0.0, disc_y = 0.0, disc_radius = 0.0;
  std::vector<Segment> segments;
};

class TreeGrower {
 public:
  TreeGrower(Geometry& geo, std::mt19937_64& rng)
      : geo_(geo), rng_(rng), max_depth_(geo.size >= 48 ? 5 : 3) {}

  void grow(double x, double y, double angle, int width, int depth) {
    const double length = uniform(0.09, 0.14) * geo_.size;
    angle += uniform(-0.3, 0.3);
    const double x1 = x + length * std::cos(angle), y1 = y + length * std::sin(angle);
    geo_.segments.push_back({x, y, x1, y1, width, depth});
    if (std::hypot(x1 - geo_.center, y1 - geo_.center) > geo_.fov_radius || depth >= max_depth_) return;
    const int next_width = depth >= 1 && width > 1 && uniform(0.0, 1.0) < 0.5 ? width - 1 : width;
    grow(x1, y1, angle, next_width, depth + 1);
    if (uniform(0.0, 1.0) < 0.45) {
      const double side = uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      grow(x1, y1, angle + side * uniform(0.5, 1.0), std::max(1, width - 1), depth + 1);
    }
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  Geometry& geo_;
  std::mt19937_64& rng_;
  int max_depth_;  // small images hold fewer generations
};

Geometry make_geometry(std::uint64_t seed, int size) {
  std::mt19937_64 rng(derive_seed(seed, "synth_fundus"));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  Geometry geo;
  geo.size = size;
  geo.center = (size - 1) / 2.0;
  geo.fov_radius = 0.46 * size;

  const double phi = uniform(0.0, 2.0 * std::numbers::pi);
  const double offset = uniform(0.15, 0.45) * geo.fov_radius;
  geo.disc_x = geo.center + offset * std::cos(phi);
  geo.disc_y = geo.center + offset * std::sin(phi);
  geo.disc_radius = uniform(0.12, 0.16) * size;

  TreeGrower grower(geo, rng);
  const int roots = 3 + static_cast<int>(rng() % 2);
  const double start = uniform(0.0, 2.0 * std::numbers::pi);
  const int root_width = size >= 96 ? 3 : (size >= 48 ? 2 : 1);
  for (int r = 0; r < roots; ++r) {
    const double angle = start + 2.0 * std::numbers::pi * r / roots + uniform(-0.3, 0.3);
    grower.grow(geo.disc_x, geo.disc_y, angle, root_width, 0);
  }
  return geo;
}

// Annotator disagreement: vessel widths jitter by one pixel, some fine leaf
// vessels are missed, the disc outline shifts slightly.
Geometry perturb(const Geometry& geo, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "synth_second_annotator"));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  Geometry out = geo;
  out.segments.clear();
  for (Segment s : geo.segments) {
    const double u = uniform(0.0, 1.0);
    if (s.depth >= 4 && u < 0.15) continue;
    if (u > 0.75) s.width = std::min(3, s.width + 1);
    else if (u > 0.5) s.width = std::max(1, s.width - 1);
    out.segments.push_back(s);
  }
  out.disc_radius *= uniform(0.94, 1.06);
  out.disc_x += uniform(-1.0, 1.0);
  out.disc_y += uniform(-1.0, 1.0);
  return out;
}

double point_segment_distance(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (s.x0 + t * dx), py - (s.y0 + t * dy));
}

Mask rasterize_fov(const Geometry& geo) {
  Mask fov(geo.size, geo.size);
  for (int y = 0; y < geo.size; ++y) {
    for (int x = 0; x < geo.size; ++x) {
      fov.set(y, x, std::hypot(x - geo.center, y - geo.center) <= geo.fov_radius);
    }
  }
  return fov;
}

Mask rasterize_disc(const Geometry& geo) {
  Mask disc(geo.size, geo.size);
  for (int y = 0; y < geo.size; ++y) {
    for (int x = 0; x < geo.size; ++x) {
      disc.set(y, x, std::hypot(x - geo.disc_x, y - geo.disc_y) <= geo.disc_radius);
    }
  }
  return disc;
}

Mask rasterize_vessels(const Geometry& geo, const Mask& fov) {
  Mask vessels(geo.size, geo.size);
  for (const Segment& s : geo.segments) {
    const double r = s.width / 2.0;
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - r)));
    const int x_hi = std::min(geo.size - 1, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + r)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - r)));
    const int y_hi = std::min(geo.size - 1, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + r)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        if (fov.at(y, x) && point_segment_distance(x, y, s) <= r) vessels.set(y, x, true);
      }
    }
  }
  return vessels;
}

}  // namespace

Sample SyntheticFundus::sample(Task task) const {
  Sample s;
  s.id = id;
  s.image = image;
  s.gold = task == Task::vessel ? vessel : disc;
  s.second = task == Task::vessel ? vessel_second : disc_second;
  s.fov = fov;
  return s;
}

SyntheticFundus synth_fundus(std::uint64_t seed, int size) {
  if (size < kMinSynthSize) {
    throw InvalidArgument("synthetic fundus size must be >= " + std::to_string(kMinSynthSize));
  }
  const Geometry geo = make_geometry(seed, size);
  const Geometry second = perturb(geo, seed);

  SyntheticFundus out;
  out.id = "synth_" + std::to_string(seed);
  out.fov = rasterize_fov(geo);
  out.disc = rasterize_disc(geo);
  out.vessel = rasterize_vessels(geo, out.fov);
  out.disc_second = rasterize_disc(second);
  out.vessel_second = rasterize_vessels(second, out.fov);

  std::mt19937_64 noise_rng(derive_seed(seed, "synth_noise"));
  std::normal_distribution<double> noise(0.0, 0.012);
  constexpr double kBackground[3] = {0.78, 0.38, 0.18};
  constexpr double kDisc[3] = {0.97, 0.88, 0.62};
  constexpr double kVesselFactor[3] = {0.62, 0.40, 0.45};
  constexpr double kOutside[3] = {0.03, 0.02, 0.02};

  Tensor image(Shape{3, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool in_fov = out.fov.at(y, x);
      const double rr = std::hypot(x - geo.center, y - geo.center) / geo.fov_radius;
      const double dd = std::hypot(x - geo.disc_x, y - geo.disc_y) / geo.disc_radius;
      for (int c = 0; c < 3; ++c) {
        double v = kOutside[c];
        if (in_fov) {
          v = kBackground[c] * (1.0 - 0.3 * rr * rr);
          if (out.disc.at(y, x)) v = kDisc[c] * (1.0 - 0.08 * dd);
          if (out.vessel.at(y, x)) v *= kVesselFactor[c];
        }
        image.at(c, y, x) = static_cast<float>(std::clamp(v + noise(noise_rng), 0.0, 1.0));
      }
    }
  }
  out.image = quantize_rgb(image);
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& root, std::uint64_t seed, int count, int size,
                             int test_count) {
  if (count < 1) throw InvalidArgument("synthetic dataset needs count >= 1");
  if (test_count < 0 || test_count > count) throw InvalidArgument("test count must be within [0, count]");
  if (size < kMinSynthSize) {
    throw InvalidArgument("synthetic fundus size must be >= " + std::to_string(kMinSynthSize));
  }
  namespace fs = std::filesystem;
  for (const char* dir : {"images", "gt_vessel", "gt_disc", "gt2_vessel", "gt2_disc", "fov"}) {
    fs::create_directories(root / dir);
  }
  std::vector<std::string> train, test;
  for (int i = 0; i < count; ++i) {
    const SyntheticFundus f = synth_fundus(seed + static_cast<std::uint64_t>(i), size);
    write_rgb_image(root / "images" / (f.id + ".ppm"), f.image);
    write_mask(root / "gt_vessel" / (f.id + ".pgm"), f.vessel);
    write_mask(root / "gt_disc" / (f.id + ".pgm"), f.disc);
    write_mask(root / "gt2_vessel" / (f.id + ".pgm"), f.vessel_second);
    write_mask(root / "gt2_disc" / (f.id + ".pgm"), f.disc_second);
    write_mask(root / "fov" / (f.id + ".pgm"), f.fov);
    (i < count - test_count ? train : test).push_back(f.id);
  }
  write_file_atomic(root / "split.txt", format_manifest(train, test));
}

}  // namespace driu

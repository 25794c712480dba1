#include "driu/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "driu/loss.hpp"

namespace driu {

ChannelMeans compute_channel_means(std::span<const Sample> training) {
  if (training.empty()) throw EmptyInputError("cannot compute channel means of an empty training set");
  std::array<double, 3> sums{};
  std::size_t pixels = 0;
  for (const Sample& s : training) {
    if (s.image.rank() != 3 || s.image.channels() != 3) {
      throw ShapeError("training image '" + s.id + "' is not (3,H,W)");
    }
    const std::size_t plane = static_cast<std::size_t>(s.image.height()) * s.image.width();
    for (int c = 0; c < 3; ++c) {
      const auto values = s.image.data().subspan(static_cast<std::size_t>(c) * plane, plane);
      sums[static_cast<std::size_t>(c)] += std::accumulate(values.begin(), values.end(), 0.0);
    }
    pixels += plane;
  }
  ChannelMeans means;
  for (std::size_t c = 0; c < 3; ++c) means.values[c] = static_cast<float>(sums[c] / static_cast<double>(pixels));
  return means;
}

namespace {

Tensor shift_channels(const Tensor& image, const ChannelMeans& means, float sign) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw ShapeError("expected an RGB (3,H,W) image, got " + shape_to_string(image.shape()));
  }
  Tensor out = image;
  const std::size_t plane = static_cast<std::size_t>(image.height()) * image.width();
  auto data = out.data();
  for (std::size_t c = 0; c < 3; ++c) {
    const float shift = sign * means.values[c];
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) data[i] += shift;
  }
  return out;
}

}  // namespace

Tensor preprocess(const Tensor& image, const ChannelMeans& means) { return shift_channels(image, means, -1.0f); }

Tensor restore(const Tensor& preprocessed, const ChannelMeans& means) {
  return shift_channels(preprocessed, means, 1.0f);
}

void AugmentConfig::validate() const {
  if (right_angles.empty()) throw ConfigError("augmentation needs at least one rotation angle");
  for (int a : right_angles) {
    if (a % 90 != 0) throw ConfigError("rotation " + std::to_string(a) + " is not a multiple of 90 degrees");
  }
  if (max_jitter_deg < 0.0 || max_jitter_deg > 180.0) throw ConfigError("rotation jitter must be within [0, 180]");
  if (scales.empty()) throw ConfigError("augmentation needs at least one scale factor");
  for (double s : scales) {
    if (!(s > 0.0)) throw ConfigError("scale factors must be > 0");
  }
}

AugmentDraw draw_augmentation(const AugmentConfig& config, int height, int width, std::mt19937_64& rng) {
  AugmentDraw draw;
  const auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  const int angle = config.right_angles[pick(config.right_angles.size())];
  draw.quarter_turns = ((angle / 90) % 4 + 4) % 4;
  if (config.max_jitter_deg > 0.0) {
    draw.jitter_deg = std::uniform_real_distribution<double>(-config.max_jitter_deg, config.max_jitter_deg)(rng);
  }
  draw.scale = config.scales[pick(config.scales.size())];
  const bool swap = draw.quarter_turns % 2 == 1;
  const int canvas_h = swap ? width : height, canvas_w = swap ? height : width;
  const int scaled_h = std::max(1, static_cast<int>(std::lround(draw.scale * canvas_h)));
  const int scaled_w = std::max(1, static_cast<int>(std::lround(draw.scale * canvas_w)));
  auto offset = [&rng](int scaled, int canvas) {
    const int lo = std::min(0, scaled - canvas), hi = std::max(0, scaled - canvas);
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  draw.offset_y = offset(scaled_h, canvas_h);
  draw.offset_x = offset(scaled_w, canvas_w);
  return draw;
}

namespace {

// Maps an output canvas pixel to continuous source coordinates.
class InverseTransform {
 public:
  InverseTransform(const AugmentDraw& draw, int height, int width)
      : draw_(draw), in_h_(height), in_w_(width) {
    const bool swap = draw.quarter_turns % 2 == 1;
    out_h_ = swap ? width : height;
    out_w_ = swap ? height : width;
    const int scaled_h = std::max(1, static_cast<int>(std::lround(draw.scale * out_h_)));
    const int scaled_w = std::max(1, static_cast<int>(std::lround(draw.scale * out_w_)));
    scale_y_ = static_cast<double>(scaled_h) / out_h_;
    scale_x_ = static_cast<double>(scaled_w) / out_w_;
    const double radians = draw.jitter_deg * 3.14159265358979323846 / 180.0;
    cos_ = draw.jitter_deg == 0.0 ? 1.0 : std::cos(radians);
    sin_ = draw.jitter_deg == 0.0 ? 0.0 : std::sin(radians);
  }

  int out_height() const noexcept { return out_h_; }
  int out_width() const noexcept { return out_w_; }

  std::pair<double, double> source(int y, int x) const {
    const double yc = (y + draw_.offset_y + 0.5) / scale_y_ - 0.5;
    const double xc = (x + draw_.offset_x + 0.5) / scale_x_ - 0.5;
    const double u = xc - (out_w_ - 1) / 2.0, v = yc - (out_h_ - 1) / 2.0;
    const double u1 = cos_ * u - sin_ * v, v1 = sin_ * u + cos_ * v;
    double us = u1, vs = v1;
    switch (draw_.quarter_turns) {
      case 1: us = v1; vs = -u1; break;
      case 2: us = -u1; vs = -v1; break;
      case 3: us = -v1; vs = u1; break;
      default: break;
    }
    return {vs + (in_h_ - 1) / 2.0, us + (in_w_ - 1) / 2.0};
  }

 private:
  AugmentDraw draw_;
  int in_h_, in_w_;
  int out_h_ = 0, out_w_ = 0;
  double scale_y_ = 1.0, scale_x_ = 1.0;
  double cos_ = 1.0, sin_ = 0.0;
};

Mask warp_mask(const Mask& mask, const InverseTransform& tf) {
  Mask out(tf.out_height(), tf.out_width());
  for (int y = 0; y < tf.out_height(); ++y) {
    for (int x = 0; x < tf.out_width(); ++x) {
      const auto [sy, sx] = tf.source(y, x);
      const long iy = std::lround(sy), ix = std::lround(sx);
      if (iy >= 0 && iy < mask.height() && ix >= 0 && ix < mask.width()) {
        out.set(y, x, mask.at(static_cast<int>(iy), static_cast<int>(ix)) != 0);
      }
    }
  }
  return out;
}

Tensor warp_image(const Tensor& image, const InverseTransform& tf) {
  const int channels = image.channels(), height = image.height(), width = image.width();
  Tensor out(Shape{channels, tf.out_height(), tf.out_width()});
  auto tap = [&](int c, int y, int x) -> float {
    return (y >= 0 && y < height && x >= 0 && x < width) ? image.at(c, y, x) : 0.0f;
  };
  for (int y = 0; y < tf.out_height(); ++y) {
    for (int x = 0; x < tf.out_width(); ++x) {
      const auto [sy, sx] = tf.source(y, x);
      const double fy0 = std::floor(sy), fx0 = std::floor(sx);
      const int y0 = static_cast<int>(fy0), x0 = static_cast<int>(fx0);
      const float wy = static_cast<float>(sy - fy0), wx = static_cast<float>(sx - fx0);
      for (int c = 0; c < channels; ++c) {
        float v = tap(c, y0, x0) * (1.0f - wx) * (1.0f - wy);
        if (wx != 0.0f) v += tap(c, y0, x0 + 1) * wx * (1.0f - wy);
        if (wy != 0.0f) v += tap(c, y0 + 1, x0) * (1.0f - wx) * wy;
        if (wx != 0.0f && wy != 0.0f) v += tap(c, y0 + 1, x0 + 1) * wx * wy;
        out.at(c, y, x) = v;
      }
    }
  }
  return out;
}

}  // namespace

Sample apply_augmentation(const Sample& sample, const AugmentDraw& draw) {
  const InverseTransform tf(draw, sample.image.height(), sample.image.width());
  Sample out;
  out.id = sample.id;
  out.image = warp_image(sample.image, tf);
  out.gold = warp_mask(sample.gold, tf);
  if (sample.second) out.second = warp_mask(*sample.second, tf);
  if (sample.fov) out.fov = warp_mask(*sample.fov, tf);
  return out;
}

Sample augment(const Sample& sample, const AugmentConfig& config, std::mt19937_64& rng) {
  return apply_augmentation(sample, draw_augmentation(config, sample.image.height(), sample.image.width(), rng));
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr_decay_factor must be in (0, 1]");
  if (lr_decay_interval < 0) throw ConfigError("lr_decay_interval must be >= 0");
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("grad_clip_norm must be >= 0");
  for (double m : lr_milestones) {
    if (!(m > 0.0 && m <= 1.0)) throw ConfigError("lr milestones are fractions in (0, 1]");
  }
  augment.validate();
}

double lr_at(int iteration, const TrainConfig& config) {
  int steps = 0;
  if (config.lr_decay_interval > 0) {
    steps = iteration / config.lr_decay_interval;
  } else {
    for (double m : config.lr_milestones) {
      const auto boundary = static_cast<long long>(std::llround(m * config.iterations));
      if (iteration >= boundary) ++steps;
    }
  }
  return config.base_lr * std::pow(config.lr_decay_factor, steps);
}

double clip_grad_norm(NetworkParams& grads, double max_norm) {
  double sum = 0.0;
  for (const auto& [name, g] : grads) {
    for (float v : g.data()) sum += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(sum);
  if (norm > max_norm) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (auto& [name, g] : grads) {
      for (float& v : g.data()) v *= factor;
    }
  }
  return norm;
}

OptimState OptimState::for_params(const NetworkParams& params, double momentum) {
  return OptimState{params.zeros_like(), momentum, 0};
}

void sgd_momentum_step(NetworkParams& params, const NetworkParams& grads, OptimState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ConsistencyError("sgd step: params, grads and momentum buffers hold different tensor sets");
  }
  const float rate = static_cast<float>(lr);
  const float mu = static_cast<float>(state.momentum);
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& v = state.velocity.at(name);
    if (g.shape() != p.shape() || v.shape() != p.shape()) {
      throw ConsistencyError("sgd step: shape mismatch for '" + name + "'");
    }
    auto pd = p.data();
    auto gd = g.data();
    auto vd = v.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      vd[i] = mu * vd[i] + gd[i];
      pd[i] -= rate * vd[i];
    }
  }
  ++state.iteration;
}

namespace {

std::string divergence_report(int iteration, double lr, const std::string& sample_id, double loss,
                              const NetworkParams& params, std::span<const LossRecord> log) {
  std::ostringstream os;
  os.precision(6);
  os << "training diverged at iteration " << iteration << " (sample '" << sample_id << "', lr " << lr
     << ", loss " << loss << ")\n";
  os << "recent losses:";
  const std::size_t from = log.size() > 5 ? log.size() - 5 : 0;
  for (std::size_t i = from; i < log.size(); ++i) os << ' ' << log[i].loss;
  os << "\nparameter max |w|:\n";
  for (const auto& [name, t] : params) {
    float peak = 0.0f;
    bool finite = true;
    for (float v : t.data()) {
      finite = finite && std::isfinite(v);
      peak = std::max(peak, std::abs(v));
    }
    os << "  " << name << ' ' << (finite ? std::to_string(peak) : std::string("non-finite")) << '\n';
  }
  return os.str();
}

}  // namespace

TrainResult train(NetworkParams params, std::span<const Sample> training, const TrainConfig& config, Task task,
                  const TrainProgress& progress) {
  config.validate();
  if (training.empty()) throw EmptyInputError("training split is empty");

  TrainResult result;
  result.means = compute_channel_means(training);
  OptimState state = OptimState::for_params(params, config.momentum);
  const std::array<Task, 1> heads{task};

  std::vector<std::size_t> order(training.size());
  for (int it = 0; it < config.iterations; ++it) {
    const std::size_t pos = static_cast<std::size_t>(it) % training.size();
    if (pos == 0) {
      const auto epoch = static_cast<std::size_t>(it) / training.size();
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 shuffle_rng(derive_seed(config.seed, "epoch/" + std::to_string(epoch)));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    const Sample& source = training[order[pos]];
    Sample sample;
    if (config.augment.enabled) {
      std::mt19937_64 rng(derive_seed(config.seed, "augment/" + std::to_string(it)));
      sample = augment(source, config.augment, rng);
    }
    const Sample& current = config.augment.enabled ? sample : source;

    ForwardResult<float> fwd = forward(params, preprocess(current.image, result.means), heads);
    const Tensor& activation = fwd.outputs.at(task).activation;
    const double lr = lr_at(it, config);
    const LossTerms loss = balanced_bce_loss(activation, current.gold);
    if (!std::isfinite(loss.total)) {
      throw TrainingDiverged(divergence_report(it, lr, current.id, loss.total, params, result.log));
    }
    NetworkParams grads = backward(params, fwd.trace, {{task, balanced_bce_grad(activation, current.gold)}});
    if (config.grad_clip_norm > 0.0) clip_grad_norm(grads, config.grad_clip_norm);
    sgd_momentum_step(params, grads, state, lr);

    result.log.push_back({it, lr, loss.total});
    if (progress) progress(result.log.back());
  }
  result.params = std::move(params);
  return result;
}

std::string format_loss_log(std::span<const LossRecord> log) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,lr,loss\n";
  for (const auto& r : log) os << r.iteration << ',' << r.lr << ',' << r.loss << '\n';
  return os.str();
}

}  // namespace driu

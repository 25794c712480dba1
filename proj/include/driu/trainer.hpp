#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "driu/dataset.hpp"
#include "driu/network.hpp"

namespace driu {

struct ChannelMeans {
  std::array<float, 3> values{};
};

/// Per-channel mean over every pixel of every training image.
ChannelMeans compute_channel_means(std::span<const Sample> training);

// Subtracts the channel means; no scaling.
Tensor preprocess(const Tensor& image, const ChannelMeans& means);
Tensor restore(const Tensor& preprocessed, const ChannelMeans& means);

struct AugmentConfig {
  bool enabled = true;
  std::vector<int> right_angles{0, 90, 180, 270};  // degrees, multiples of 90
  double max_jitter_deg = 30.0;                    // extra uniform angle in [-j, j]
  std::vector<double> scales{0.75, 1.0, 1.25};

  void validate() const;
};

/// One geometric transform. The canvas swaps H and W for odd quarter turns;
/// scaled content is cropped or zero-padded back to the canvas at an offset.
struct AugmentDraw {
  int quarter_turns = 0;
  double jitter_deg = 0.0;
  double scale = 1.0;
  int offset_y = 0;
  int offset_x = 0;
};

AugmentDraw draw_augmentation(const AugmentConfig& config, int height, int width, std::mt19937_64& rng);

/// Applies the same transform to the image (bilinear, zero fill) and every
/// mask (nearest neighbour, background fill).
Sample apply_augmentation(const Sample& sample, const AugmentDraw& draw);

Sample augment(const Sample& sample, const AugmentConfig& config, std::mt19937_64& rng);

struct TrainConfig {
  double base_lr = 1e-4;  // the loss is a per-image sum, not a mean
  double momentum = 0.9;
  int iterations = 20000;
  double lr_decay_factor = 0.1;
  int lr_decay_interval = 0;                     // > 0: periodic step decay
  std::vector<double> lr_milestones{0.6, 0.85};  // used when interval == 0; fractions of `iterations`
  double grad_clip_norm = 300.0;                 // > 0: rescale gradients whose global L2 norm exceeds it
  AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

/// base_lr * factor^(number of decay steps reached by `iteration`).
double lr_at(int iteration, const TrainConfig& config);

struct OptimState {
  NetworkParams velocity;
  double momentum = 0.9;
  int iteration = 0;

  static OptimState for_params(const NetworkParams& params, double momentum);
};

/// Rescales every gradient so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(NetworkParams& grads, double max_norm);

/// v <- momentum * v + g;  w <- w - lr * v
void sgd_momentum_step(NetworkParams& params, const NetworkParams& grads, OptimState& state, double lr);

struct LossRecord {
  int iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  NetworkParams params;
  ChannelMeans means;
  std::vector<LossRecord> log;
};

using TrainProgress = std::function<void(const LossRecord&)>;

/// One image per iteration, cycling through a seeded per-epoch shuffle:
/// augment, preprocess, forward the chosen head, class-balanced loss,
/// backward, momentum step. Throws TrainingDiverged on a non-finite loss.
TrainResult train(NetworkParams params, std::span<const Sample> training, const TrainConfig& config, Task task,
                  const TrainProgress& progress = {});

std::string format_loss_log(std::span<const LossRecord> log);

}  // namespace driu

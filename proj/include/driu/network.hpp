#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "driu/nn_ops.hpp"
#include "driu/tensor.hpp"

namespace driu {

inline constexpr int kNumStages = 5;
inline constexpr int kHeadStages = 4;
inline constexpr int kMinInputExtent = 16;

enum class Task { vessel, disc };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

/// A task head reads the side features of four consecutive base stages:
/// the finest four for vessels, the coarsest four for the optic disc.
struct TaskHead {
  Task task;
  std::array<int, kHeadStages> stages;  // 1-based stage indices
};

const TaskHead& head_for(Task task);

struct NetConfig {
  std::array<int, kNumStages> stage_channels{64, 128, 256, 512, 512};
  std::array<int, kNumStages> convs_per_stage{2, 2, 3, 3, 3};
  int side_channels = 16;  // K
  int width_scale = 1;     // divides every stage width
  int input_channels = 3;

  std::array<int, kNumStages> scaled_channels() const;
  void validate() const;

  bool operator==(const NetConfig&) const = default;
};

std::string conv_weight_name(int stage, int conv);
std::string conv_bias_name(int stage, int conv);
std::string side_weight_name(Task task, int stage);
std::string side_bias_name(Task task, int stage);
std::string fuse_weight_name(Task task);
std::string fuse_bias_name(Task task);

/// Every parameter name with its shape, in a fixed traversal order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const NetConfig& config);

/// The parameter set W of the network: base stage convolutions, per-head side
/// layers and per-head fusion layers. Names are closed over `config`.
template <typename T>
class BasicParams {
 public:
  using Map = std::map<std::string, BasicTensor<T>>;

  BasicParams() = default;
  BasicParams(NetConfig config, Map tensors);

  const NetConfig& config() const noexcept { return config_; }
  const Map& tensors() const noexcept { return tensors_; }

  const BasicTensor<T>& at(const std::string& name) const;
  BasicTensor<T>& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const noexcept { return tensors_.size(); }

  auto begin() noexcept { return tensors_.begin(); }
  auto end() noexcept { return tensors_.end(); }
  auto begin() const noexcept { return tensors_.begin(); }
  auto end() const noexcept { return tensors_.end(); }

  BasicParams zeros_like() const;

  template <typename U>
  BasicParams<U> cast() const {
    typename BasicParams<U>::Map out;
    for (const auto& [name, t] : tensors_) out.emplace(name, t.template cast<U>());
    return BasicParams<U>(config_, std::move(out));
  }

  bool operator==(const BasicParams&) const = default;

 private:
  NetConfig config_;
  Map tensors_;
};

using NetworkParams = BasicParams<float>;
using NetworkParams64 = BasicParams<double>;

/// Allocates every tensor of `config`: He-normal conv weights keyed by
/// (seed, name), zero biases.
template <typename T = float>
BasicParams<T> build_network(const NetConfig& config, std::uint64_t seed);

/// Validates a loose name->tensor map against `config`. Throws
/// ConsistencyError naming the first missing or mismatched tensor.
template <typename T>
BasicParams<T> params_from_tensors(const NetConfig& config, std::map<std::string, BasicTensor<T>> tensors);

template <typename T>
struct StageTrace {
  std::vector<ConvCache<T>> convs;
  std::vector<ReluCache<T>> relus;
  Shape output_shape;
};

template <typename T>
struct HeadTrace {
  Task task = Task::vessel;
  std::array<ConvCache<T>, kHeadStages> side;
  std::array<ResizeCache, kHeadStages> resize;
  ConcatCache concat;
  ConvCache<T> fuse;
};

template <typename T>
struct ForwardTrace {
  std::vector<std::pair<std::string, Shape>> signature;
  Shape input_shape;
  std::vector<StageTrace<T>> stages;  // index s-1 for stage s
  std::vector<PoolCache> pools;       // pools[i] follows stage i+1
  std::vector<HeadTrace<T>> heads;
  int base_evaluations = 0;
  std::map<std::string, int> conv_calls;  // per layer (weight name)

  int base_conv_calls() const;
};

template <typename T>
struct HeadOutput {
  BasicTensor<T> activation;   // (1,H,W) fused, pre-sigmoid
  BasicTensor<T> probability;  // sigmoid(activation)
};

template <typename T>
struct ForwardResult {
  std::map<Task, HeadOutput<T>> outputs;
  ForwardTrace<T> trace;
};

/// Runs the base network once and every requested head on its side features.
/// `image` is a preprocessed (C,H,W) tensor with H,W >= 16.
template <typename T>
ForwardResult<T> forward(const BasicParams<T>& params, const BasicTensor<T>& image, std::span<const Task> heads);

/// Gradients of every parameter given dL/d(activation) per traced head.
/// Parameters off the traced heads' paths get exact zeros.
template <typename T>
BasicParams<T> backward(const BasicParams<T>& params, const ForwardTrace<T>& trace,
                        const std::map<Task, BasicTensor<T>>& activation_grads);

}  // namespace driu

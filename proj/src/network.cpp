#include "driu/network.hpp"

#include <algorithm>
#include <optional>

namespace driu {

std::string_view task_name(Task task) { return task == Task::vessel ? "vessel" : "disc"; }

Task parse_task(std::string_view name) {
  if (name == "vessel") return Task::vessel;
  if (name == "disc") return Task::disc;
  throw InvalidArgument("unknown task '" + std::string(name) + "' (expected vessel or disc)");
}

const TaskHead& head_for(Task task) {
  static const TaskHead vessel{Task::vessel, {1, 2, 3, 4}};
  static const TaskHead disc{Task::disc, {2, 3, 4, 5}};
  return task == Task::vessel ? vessel : disc;
}

std::array<int, kNumStages> NetConfig::scaled_channels() const {
  std::array<int, kNumStages> out{};
  for (int s = 0; s < kNumStages; ++s) out[s] = stage_channels[s] / std::max(width_scale, 1);
  return out;
}

void NetConfig::validate() const {
  if (width_scale < 1) throw ConfigError("width_scale must be >= 1");
  if (side_channels < 1) throw ConfigError("side_channels (K) must be >= 1");
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  const auto scaled = scaled_channels();
  for (int s = 0; s < kNumStages; ++s) {
    if (convs_per_stage[s] < 1) throw ConfigError("stage " + std::to_string(s + 1) + " needs at least one conv");
    if (scaled[s] < 1) {
      throw ConfigError("stage " + std::to_string(s + 1) + " width " + std::to_string(stage_channels[s]) +
                        " / width_scale " + std::to_string(width_scale) + " is below 1");
    }
  }
}

std::string conv_weight_name(int stage, int conv) {
  return "stage" + std::to_string(stage) + ".conv" + std::to_string(conv) + ".weight";
}
std::string conv_bias_name(int stage, int conv) {
  return "stage" + std::to_string(stage) + ".conv" + std::to_string(conv) + ".bias";
}
std::string side_weight_name(Task task, int stage) {
  return std::string(task_name(task)) + ".side" + std::to_string(stage) + ".weight";
}
std::string side_bias_name(Task task, int stage) {
  return std::string(task_name(task)) + ".side" + std::to_string(stage) + ".bias";
}
std::string fuse_weight_name(Task task) { return std::string(task_name(task)) + ".fuse.weight"; }
std::string fuse_bias_name(Task task) { return std::string(task_name(task)) + ".fuse.bias"; }

std::vector<std::pair<std::string, Shape>> parameter_layout(const NetConfig& config) {
  config.validate();
  const auto widths = config.scaled_channels();
  const int k = config.side_channels;
  std::vector<std::pair<std::string, Shape>> layout;
  int in = config.input_channels;
  for (int s = 1; s <= kNumStages; ++s) {
    const int out = widths[s - 1];
    for (int c = 1; c <= config.convs_per_stage[s - 1]; ++c) {
      layout.emplace_back(conv_weight_name(s, c), Shape{out, c == 1 ? in : out, 3, 3});
      layout.emplace_back(conv_bias_name(s, c), Shape{out});
    }
    in = out;
  }
  for (Task task : {Task::vessel, Task::disc}) {
    for (int s : head_for(task).stages) {
      layout.emplace_back(side_weight_name(task, s), Shape{k, widths[s - 1], 3, 3});
      layout.emplace_back(side_bias_name(task, s), Shape{k});
    }
    layout.emplace_back(fuse_weight_name(task), Shape{1, kHeadStages * k, 1, 1});
    layout.emplace_back(fuse_bias_name(task), Shape{1});
  }
  return layout;
}

template <typename T>
BasicParams<T>::BasicParams(NetConfig config, Map tensors) : config_(config), tensors_(std::move(tensors)) {}

template <typename T>
const BasicTensor<T>& BasicParams<T>::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConsistencyError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
BasicTensor<T>& BasicParams<T>::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConsistencyError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
BasicParams<T> BasicParams<T>::zeros_like() const {
  Map out;
  for (const auto& [name, t] : tensors_) out.emplace(name, BasicTensor<T>(t.shape()));
  return BasicParams(config_, std::move(out));
}

template <typename T>
BasicParams<T> build_network(const NetConfig& config, std::uint64_t seed) {
  typename BasicParams<T>::Map tensors;
  for (const auto& [name, shape] : parameter_layout(config)) {
    if (shape.size() == 4) {
      const int fan_in = shape[1] * shape[2] * shape[3];
      tensors.emplace(name, he_normal_init<T>(shape, fan_in, seed, name));
    } else {
      tensors.emplace(name, BasicTensor<T>(shape));
    }
  }
  return BasicParams<T>(config, std::move(tensors));
}

template <typename T>
BasicParams<T> params_from_tensors(const NetConfig& config, std::map<std::string, BasicTensor<T>> tensors) {
  typename BasicParams<T>::Map out;
  for (const auto& [name, shape] : parameter_layout(config)) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConsistencyError("weights are missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw ConsistencyError("tensor '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                             " but the configured architecture expects " + shape_to_string(shape));
    }
    out.emplace(name, std::move(it->second));
    tensors.erase(it);
  }
  if (!tensors.empty()) {
    throw ConsistencyError("weights contain tensor '" + tensors.begin()->first +
                           "' that the configured architecture does not use");
  }
  return BasicParams<T>(config, std::move(out));
}

template <typename T>
int ForwardTrace<T>::base_conv_calls() const {
  int total = 0;
  for (const auto& [name, count] : conv_calls) {
    if (name.rfind("stage", 0) == 0) total += count;
  }
  return total;
}

namespace {

template <typename T>
std::vector<std::pair<std::string, Shape>> signature_of(const BasicParams<T>& params) {
  std::vector<std::pair<std::string, Shape>> sig;
  sig.reserve(params.size());
  for (const auto& [name, t] : params) sig.emplace_back(name, t.shape());
  return sig;
}

template <typename T>
BasicTensor<T> traced_conv(ForwardTrace<T>& trace, const BasicParams<T>& params, const std::string& weight,
                           const std::string& bias, const BasicTensor<T>& input, int kernel, ConvCache<T>& cache) {
  const BasicTensor<T>& w = params.at(weight);
  auto [out, c] = conv2d_forward(input, w, params.at(bias), ConvSpec{w.dim(0), kernel});
  cache = std::move(c);
  ++trace.conv_calls[weight];
  return std::move(out);
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const BasicParams<T>& params, const BasicTensor<T>& image, std::span<const Task> heads) {
  const NetConfig& config = params.config();
  if (image.rank() != 3 || image.channels() != config.input_channels) {
    throw ShapeError("image must be (" + std::to_string(config.input_channels) + ",H,W), got " +
                     shape_to_string(image.shape()));
  }
  if (image.height() < kMinInputExtent || image.width() < kMinInputExtent) {
    throw ShapeError("image " + shape_to_string(image.shape()) + " is smaller than the 16x16 minimum");
  }
  std::vector<Task> tasks(heads.begin(), heads.end());
  std::sort(tasks.begin(), tasks.end());
  tasks.erase(std::unique(tasks.begin(), tasks.end()), tasks.end());
  if (tasks.empty()) throw InvalidArgument("forward: no task head requested");

  ForwardResult<T> result;
  ForwardTrace<T>& trace = result.trace;
  trace.signature = signature_of(params);
  trace.input_shape = image.shape();

  // Base network: evaluated once whatever the number of heads.
  std::vector<BasicTensor<T>> stage_out;
  stage_out.reserve(kNumStages);
  BasicTensor<T> x = image;
  for (int s = 1; s <= kNumStages; ++s) {
    if (s > 1) {
      auto [pooled, pool_cache] = maxpool2x2(stage_out.back());
      trace.pools.push_back(std::move(pool_cache));
      x = std::move(pooled);
    }
    StageTrace<T> st;
    const int n = config.convs_per_stage[s - 1];
    st.convs.resize(static_cast<std::size_t>(n));
    for (int c = 1; c <= n; ++c) {
      BasicTensor<T> z = traced_conv(trace, params, conv_weight_name(s, c), conv_bias_name(s, c), x, 3,
                                     st.convs[static_cast<std::size_t>(c - 1)]);
      auto [a, relu_cache] = relu(z);
      st.relus.push_back(std::move(relu_cache));
      x = std::move(a);
    }
    st.output_shape = x.shape();
    trace.stages.push_back(std::move(st));
    stage_out.push_back(x);
  }
  ++trace.base_evaluations;

  const int height = image.height(), width = image.width();
  for (Task task : tasks) {
    HeadTrace<T> ht;
    ht.task = task;
    std::vector<BasicTensor<T>> volume;
    volume.reserve(kHeadStages);
    const auto& stages = head_for(task).stages;
    for (int i = 0; i < kHeadStages; ++i) {
      const int s = stages[static_cast<std::size_t>(i)];
      BasicTensor<T> side = traced_conv(trace, params, side_weight_name(task, s), side_bias_name(task, s),
                                        stage_out[static_cast<std::size_t>(s - 1)], 3,
                                        ht.side[static_cast<std::size_t>(i)]);
      auto [up, resize_cache] = bilinear_resize(side, height, width);
      ht.resize[static_cast<std::size_t>(i)] = std::move(resize_cache);
      volume.push_back(std::move(up));
    }
    auto [stacked, concat_cache] = concat_channels<T>(volume);
    ht.concat = std::move(concat_cache);
    BasicTensor<T> activation =
        traced_conv(trace, params, fuse_weight_name(task), fuse_bias_name(task), stacked, 1, ht.fuse);
    BasicTensor<T> probability = sigmoid(activation);
    result.outputs.emplace(task, HeadOutput<T>{std::move(activation), std::move(probability)});
    trace.heads.push_back(std::move(ht));
  }
  return result;
}

template <typename T>
BasicParams<T> backward(const BasicParams<T>& params, const ForwardTrace<T>& trace,
                        const std::map<Task, BasicTensor<T>>& activation_grads) {
  if (trace.signature != signature_of(params)) {
    throw ConsistencyError("backward: trace was produced with a different parameter set");
  }
  if (trace.stages.size() != static_cast<std::size_t>(kNumStages)) {
    throw ConsistencyError("backward: incomplete forward trace");
  }
  for (const auto& [task, g] : activation_grads) {
    const bool traced = std::any_of(trace.heads.begin(), trace.heads.end(),
                                    [task = task](const HeadTrace<T>& h) { return h.task == task; });
    if (!traced) {
      throw ConsistencyError("backward: gradient given for head '" + std::string(task_name(task)) +
                             "' that the forward pass did not evaluate");
    }
  }

  BasicParams<T> grads = params.zeros_like();
  std::vector<std::optional<BasicTensor<T>>> stage_grad(kNumStages);
  auto add_stage_grad = [&](int s, BasicTensor<T>&& g) {
    auto& slot = stage_grad[static_cast<std::size_t>(s - 1)];
    if (slot) {
      accumulate(*slot, g);
    } else {
      slot = std::move(g);
    }
  };

  for (const HeadTrace<T>& ht : trace.heads) {
    auto it = activation_grads.find(ht.task);
    if (it == activation_grads.end()) continue;
    const Task task = ht.task;
    ConvGrads<T> fuse = conv2d_backward(it->second, ht.fuse);
    grads.at(fuse_weight_name(task)) = std::move(fuse.weights);
    grads.at(fuse_bias_name(task)) = std::move(fuse.bias);
    std::vector<BasicTensor<T>> parts = concat_backward(fuse.input, ht.concat);
    const auto& stages = head_for(task).stages;
    for (int i = 0; i < kHeadStages; ++i) {
      const int s = stages[static_cast<std::size_t>(i)];
      BasicTensor<T> g_side = bilinear_resize_backward(parts[static_cast<std::size_t>(i)],
                                                       ht.resize[static_cast<std::size_t>(i)]);
      ConvGrads<T> side = conv2d_backward(g_side, ht.side[static_cast<std::size_t>(i)]);
      grads.at(side_weight_name(task, s)) = std::move(side.weights);
      grads.at(side_bias_name(task, s)) = std::move(side.bias);
      add_stage_grad(s, std::move(side.input));
    }
  }

  for (int s = kNumStages; s >= 1; --s) {
    auto& slot = stage_grad[static_cast<std::size_t>(s - 1)];
    if (!slot) continue;  // nothing downstream of this stage was traced
    BasicTensor<T> g = std::move(*slot);
    const StageTrace<T>& st = trace.stages[static_cast<std::size_t>(s - 1)];
    for (int c = static_cast<int>(st.convs.size()); c >= 1; --c) {
      const auto idx = static_cast<std::size_t>(c - 1);
      g = relu_backward(g, st.relus[idx]);
      ConvGrads<T> cg = conv2d_backward(g, st.convs[idx]);
      grads.at(conv_weight_name(s, c)) = std::move(cg.weights);
      grads.at(conv_bias_name(s, c)) = std::move(cg.bias);
      g = std::move(cg.input);
    }
    if (s > 1) add_stage_grad(s - 1, maxpool2x2_backward(g, trace.pools[static_cast<std::size_t>(s - 2)]));
  }
  return grads;
}

#define DRIU_INSTANTIATE_NET(T)                                                                              \
  template class BasicParams<T>;                                                                             \
  template struct ForwardTrace<T>;                                                                           \
  template BasicParams<T> build_network<T>(const NetConfig&, std::uint64_t);                                 \
  template BasicParams<T> params_from_tensors<T>(const NetConfig&, std::map<std::string, BasicTensor<T>>);   \
  template ForwardResult<T> forward<T>(const BasicParams<T>&, const BasicTensor<T>&, std::span<const Task>); \
  template BasicParams<T> backward<T>(const BasicParams<T>&, const ForwardTrace<T>&,                         \
                                      const std::map<Task, BasicTensor<T>>&);

DRIU_INSTANTIATE_NET(float)
DRIU_INSTANTIATE_NET(double)

#undef DRIU_INSTANTIATE_NET

}  // namespace driu

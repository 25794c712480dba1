#include "driu/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "driu/loss.hpp"
#include "driu/network.hpp"
#include "driu/nn_ops.hpp"

namespace driu {

namespace {

using Fn = std::function<double(const std::vector<Tensor64>&)>;

const std::string kNetworkEntry = "network";

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Tensor64 uniform_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Magnitudes in [0.05, 1] so a step of 1e-3 never crosses the ReLU kink.
Tensor64 away_from_zero(const Shape& shape, std::mt19937_64& rng) {
  Tensor64 t(shape);
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  for (double& v : t.data()) v = (rng() & 1U ? 1.0 : -1.0) * mag(rng);
  return t;
}

// Distinct values 0.02 apart so a step of 1e-3 never reorders a window.
Tensor64 distinct_values(const Shape& shape, std::mt19937_64& rng) {
  Tensor64 t(shape);
  std::vector<int> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.02 * (order[i] - static_cast<double>(t.size()) / 2.0);
  return t;
}

Mask random_mask(int h, int w, double p, std::mt19937_64& rng) {
  Mask m(h, w);
  std::bernoulli_distribution on(p);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, on(rng));
  return m;
}

double dot(const Tensor64& a, const Tensor64& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

class OpChecker {
 public:
  OpChecker(GradcheckEntry& entry, const GradcheckOptions& options)
      : entry_(entry), step_(options.step), faulty_(options.inject_fault == entry.op) {}

  // Compares analytic gradients of a scalar function with central differences
  // over every element of every input.
  void check(int case_index, const Fn& f, std::vector<Tensor64> inputs, const std::vector<std::string>& names,
             std::vector<Tensor64> analytic) {
    ++entry_.cases;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (std::size_t j = 0; j < inputs[i].size(); ++j) {
        const double saved = inputs[i][j];
        inputs[i][j] = saved + step_;
        const double plus = f(inputs);
        inputs[i][j] = saved - step_;
        const double minus = f(inputs);
        inputs[i][j] = saved;
        const double numeric = (plus - minus) / (2.0 * step_);
        const double a = faulty_ ? -analytic[i][j] : analytic[i][j];
        record(relative_error(a, numeric),
               "case " + std::to_string(case_index) + " " + names[i] + "[" + std::to_string(j) + "]");
      }
    }
  }

  void record(double error, const std::string& where) {
    ++entry_.checked;
    if (entry_.worst.empty() || error > entry_.max_error) {
      entry_.max_error = error;
      entry_.worst = where;
    }
  }

 private:
  GradcheckEntry& entry_;
  double step_;
  bool faulty_;
};

void check_conv(GradcheckEntry& entry, const GradcheckOptions& options, int kernel) {
  OpChecker checker(entry, options);
  for (int c = 0; c < options.cases_per_op; ++c) {
    std::mt19937_64 rng(derive_seed(options.seed, entry.op + "/" + std::to_string(c)));
    const int cin = uniform_int(rng, 1, 3), h = uniform_int(rng, 1, 5), w = uniform_int(rng, 1, 5);
    const ConvSpec spec{uniform_int(rng, 1, 3), kernel};
    const Tensor64 x = uniform_tensor({cin, h, w}, rng);
    const Tensor64 wt = uniform_tensor({spec.out_channels, cin, kernel, kernel}, rng);
    const Tensor64 b = uniform_tensor({spec.out_channels}, rng);
    const Tensor64 r = uniform_tensor({spec.out_channels, h, w}, rng);
    const Fn f = [&](const std::vector<Tensor64>& in) { return dot(conv2d_forward(in[0], in[1], in[2], spec).first, r); };
    const auto grads = conv2d_backward(r, conv2d_forward(x, wt, b, spec).second);
    checker.check(c, f, {x, wt, b}, {"input", "weights", "bias"}, {grads.input, grads.weights, grads.bias});
  }
}

void check_relu(GradcheckEntry& entry, const GradcheckOptions& options) {
  OpChecker checker(entry, options);
  for (int c = 0; c < options.cases_per_op; ++c) {
    std::mt19937_64 rng(derive_seed(options.seed, entry.op + "/" + std::to_string(c)));
    const Shape shape{uniform_int(rng, 1, 3), uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)};
    const Tensor64 x = away_from_zero(shape, rng);
    const Tensor64 r = uniform_tensor(shape, rng);
    const Fn f = [&](const std::vector<Tensor64>& in) { return dot(relu(in[0]).first, r); };
    checker.check(c, f, {x}, {"input"}, {relu_backward(r, relu(x).second)});
  }
}

void check_maxpool(GradcheckEntry& entry, const GradcheckOptions& options) {
  OpChecker checker(entry, options);
  for (int c = 0; c < options.cases_per_op; ++c) {
    std::mt19937_64 rng(derive_seed(options.seed, entry.op + "/" + std::to_string(c)));
    const Shape shape{uniform_int(rng, 1, 3), uniform_int(rng, 1, 7), uniform_int(rng, 1, 7)};
    const Tensor64 x = distinct_values(shape, rng);
    const auto [out, cache] = maxpool2x2(x);
    const Tensor64 r = uniform_tensor(out.shape(), rng);
    const Fn f = [&](const std::vector<Tensor64>& in) { return dot(maxpool2x2(in[0]).first, r); };
    checker.check(c, f, {x}, {"input"}, {maxpool2x2_backward(r, cache)});
  }
}

void check_resize(GradcheckEntry& entry, const GradcheckOptions& options) {
  OpChecker checker(entry, options);
  for (int c = 0; c < options.cases_per_op; ++c) {
    std::mt19937_64 rng(derive_seed(options.seed, entry.op + "/" + std::to_string(c)));
    const int h = uniform_int(rng, 1, 4), w = uniform_int(rng, 1, 4);
    const int oh = uniform_int(rng, h, 9), ow = uniform_int(rng, w, 9);
    const Tensor64 x = uniform_tensor({uniform_int(rng, 1, 3), h, w}, rng);
    const auto [out, cache] = bilinear_resize(x, oh, ow);
    const Tensor64 r = uniform_tensor(out.shape(), rng);
    const Fn f = [&](const std::vector<Tensor64>& in) { return dot(bilinear_resize(in[0], oh, ow).first, r); };
    checker.check(c, f, {x}, {"input"}, {bilinear_resize_backward(r, cache)});
  }
}

void check_concat(GradcheckEntry& entry, const GradcheckOptions& options) {
  OpChecker checker(entry, options);
  for (int c = 0; c < options.cases_per_op; ++c) {
    std::mt19937_64 rng(derive_seed(options.seed, entry.op + "/" + std::to_string(c)));
    const int parts = uniform_int(rng, 1, 4), h = uniform_int(rng, 1, 5), w = uniform_int(rng, 1, 5);
    std::vector<Tensor64> xs;
    std::vector<std::string> names;
    for (int p = 0; p < parts; ++p) {
      xs.push_back(uniform_tensor({uniform_int(rng, 1, 3), h, w}, rng));
      names.push_back("input" + std::to_string(p));
    }
    const auto [out, cache] = concat_channels<double>(xs);
    const Tensor64 r = uniform_tensor(out.shape(), rng);
    const Fn f = [&](const std::vector<Tensor64>& in) { return dot(concat_channels<double>(in).first, r); };
    checker.check(c, f, xs, names, concat_backward(r, cache));
  }
}

void check_loss(GradcheckEntry& entry, const GradcheckOptions& options) {
  OpChecker checker(entry, options);
  for (int c = 0; c < options.cases_per_op; ++c) {
    std::mt19937_64 rng(derive_seed(options.seed, entry.op + "/" + std::to_string(c)));
    const int h = uniform_int(rng, 1, 6), w = uniform_int(rng, 1, 6);
    const Tensor64 a = uniform_tensor({1, h, w}, rng, -4.0, 4.0);
    const Mask mask = random_mask(h, w, 0.3, rng);
    const Fn f = [&](const std::vector<Tensor64>& in) { return balanced_bce_loss(in[0], mask).total; };
    checker.check(c, f, {a}, {"activation"}, {balanced_bce_grad(a, mask)});
  }
}

void check_network(GradcheckEntry& entry, const GradcheckOptions& options) {
  NetConfig config;
  config.width_scale = options.width_scale;
  config.validate();
  NetworkParams64 params = build_network<double>(config, options.seed);
  // Nonzero biases so the bias gradients are exercised away from the init.
  std::mt19937_64 rng(derive_seed(options.seed, "gradcheck/network"));
  for (auto& [name, t] : params) {
    if (t.rank() == 1) t = uniform_tensor(t.shape(), rng, -0.1, 0.1);
  }
  const int n = options.input_size;
  const Tensor64 image = uniform_tensor({3, n, n}, rng);
  const std::map<Task, Mask> masks{{Task::vessel, random_mask(n, n, 0.15, rng)},
                                   {Task::disc, random_mask(n, n, 0.1, rng)}};
  const std::array<Task, 2> tasks{Task::vessel, Task::disc};

  // The loss together with every ReLU sign and max-pool winner of the pass.
  // A finite difference is only meaningful when both probes share the
  // pattern of the unperturbed network.
  struct Probe {
    double loss = 0.0;
    std::vector<std::uint32_t> pattern;
  };
  auto evaluate = [&](const NetworkParams64& p) {
    const auto result = forward(p, image, std::span<const Task>(tasks));
    Probe probe;
    for (Task t : tasks) probe.loss += balanced_bce_loss(result.outputs.at(t).activation, masks.at(t)).total;
    for (const auto& stage : result.trace.stages) {
      for (const auto& r : stage.relus) {
        for (double v : r.input.data()) probe.pattern.push_back(v > 0.0 ? 1U : 0U);
      }
    }
    for (const auto& pool : result.trace.pools) {
      probe.pattern.insert(probe.pattern.end(), pool.argmax.begin(), pool.argmax.end());
    }
    return probe;
  };

  const auto result = forward(params, image, std::span<const Task>(tasks));
  std::map<Task, Tensor64> grads_in;
  for (Task t : tasks) grads_in.emplace(t, balanced_bce_grad(result.outputs.at(t).activation, masks.at(t)));
  const NetworkParams64 grads = backward(params, result.trace, grads_in);
  const Probe base = evaluate(params);

  std::vector<std::string> names;
  for (const auto& [name, t] : params) names.push_back(name);
  OpChecker checker(entry, options);
  entry.cases = 1;
  const int max_draws = 50 * options.sampled_params;
  int draws = 0;
  while (entry.checked < options.sampled_params) {
    if (++draws > max_draws) {
      throw ConsistencyError("gradcheck: too many finite-difference probes crossed a ReLU or pooling switch");
    }
    const std::string& name = names[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(names.size()) - 1))];
    const std::size_t index = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(params.at(name).size()) - 1));
    const double saved = params.at(name)[index];
    params.at(name)[index] = saved + options.step;
    const Probe plus = evaluate(params);
    params.at(name)[index] = saved - options.step;
    const Probe minus = evaluate(params);
    params.at(name)[index] = saved;
    if (plus.pattern != base.pattern || minus.pattern != base.pattern) {
      ++entry.skipped;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * options.step);
    checker.record(relative_error(grads.at(name)[index], numeric), name + "[" + std::to_string(index) + "]");
  }
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops{"conv3x3", "conv1x1", "relu", "maxpool2x2",
                                            "bilinear_resize", "concat_channels", "balanced_bce"};
  return ops;
}

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.passed(); });
}

std::string GradcheckReport::format() const {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific;
  for (const auto& e : entries) {
    os << (e.passed() ? "ok   " : "FAIL ") << e.op << " cases=" << e.cases << " checked=" << e.checked;
    if (e.skipped > 0) os << " skipped=" << e.skipped;
    os << " max_rel_error=" << e.max_error << " tol=" << e.tolerance << " worst=" << e.worst << '\n';
  }
  return os.str();
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.inject_fault) {
    const auto& ops = gradcheck_ops();
    if (std::find(ops.begin(), ops.end(), *options.inject_fault) == ops.end()) {
      throw InvalidArgument("unknown op for fault injection: '" + *options.inject_fault + "'");
    }
  }
  if (options.cases_per_op < 1 || options.sampled_params < 1) throw InvalidArgument("gradcheck needs >= 1 case");
  if (!(options.step > 0.0)) throw InvalidArgument("gradcheck step must be positive");

  GradcheckReport report;
  auto run = [&](const std::string& op, double tol, const std::function<void(GradcheckEntry&)>& body) {
    GradcheckEntry entry;
    entry.op = op;
    entry.tolerance = tol;
    body(entry);
    report.entries.push_back(std::move(entry));
  };
  const double tol = options.op_tolerance;
  run("conv3x3", tol, [&](GradcheckEntry& e) { check_conv(e, options, 3); });
  run("conv1x1", tol, [&](GradcheckEntry& e) { check_conv(e, options, 1); });
  run("relu", tol, [&](GradcheckEntry& e) { check_relu(e, options); });
  run("maxpool2x2", tol, [&](GradcheckEntry& e) { check_maxpool(e, options); });
  run("bilinear_resize", tol, [&](GradcheckEntry& e) { check_resize(e, options); });
  run("concat_channels", tol, [&](GradcheckEntry& e) { check_concat(e, options); });
  run("balanced_bce", tol, [&](GradcheckEntry& e) { check_loss(e, options); });
  run(kNetworkEntry, options.network_tolerance, [&](GradcheckEntry& e) { check_network(e, options); });
  return report;
}

}  // namespace driu

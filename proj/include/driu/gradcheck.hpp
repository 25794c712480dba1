#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace driu {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int width_scale = 8;
  int cases_per_op = 20;
  int sampled_params = 20;
  int input_size = 24;
  double step = 1e-3;
  double op_tolerance = 1e-4;
  double network_tolerance = 1e-3;
  // Test hook: negates the analytic gradient of the named primitive.
  std::optional<std::string> inject_fault;
};

struct GradcheckEntry {
  std::string op;
  int cases = 0;
  int checked = 0;  // scalar comparisons
  int skipped = 0;  // probes discarded because they crossed a kink
  double max_error = 0.0;
  std::string worst;  // location of max_error
  double tolerance = 0.0;
  bool passed() const { return max_error < tolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const;
  std::string format() const;
};

/// |a - n| / max(|a|, |n|, 1e-3). The floor keeps exact-zero gradients from
/// turning rounding noise into a large ratio.
double relative_error(double analytic, double numeric);

/// Names accepted by `inject_fault`.
const std::vector<std::string>& gradcheck_ops();

/// Central finite differences in double against every layer primitive on
/// random shapes, then against the full two-head network on sampled
/// parameters.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace driu

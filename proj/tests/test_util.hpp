#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "driu/mask.hpp"
#include "driu/tensor.hpp"

namespace driu::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("driu_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename T>
BasicTensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

inline Mask random_mask(int h, int w, double p, std::mt19937_64& rng) {
  Mask m(h, w);
  std::bernoulli_distribution on(p);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, on(rng));
  return m;
}

}  // namespace driu::testing

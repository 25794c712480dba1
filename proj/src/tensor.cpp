#include "driu/tensor.hpp"

#include <random>
#include <sstream>

namespace driu {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t checked_element_count(const Shape& shape) {
  if (shape.empty()) throw ShapeError("invalid shape: rank 0");
  std::size_t count = 1;
  for (int extent : shape) {
    if (extent < 1) throw ShapeError("invalid shape " + shape_to_string(shape) + ": extents must be >= 1");
    count *= static_cast<std::size_t>(extent);
  }
  return count;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  // FNV-1a over the key, then mixed with the seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : key) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

template <typename T>
BasicTensor<T> he_normal_init(const Shape& shape, int fan_in, std::uint64_t seed, std::string_view key) {
  if (fan_in < 1) throw InvalidArgument("he_normal_init: fan_in must be >= 1");
  BasicTensor<T> out(shape);
  std::mt19937_64 engine(derive_seed(seed, key));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : out.data()) v = static_cast<T>(dist(engine));
  return out;
}

template BasicTensor<float> he_normal_init<float>(const Shape&, int, std::uint64_t, std::string_view);
template BasicTensor<double> he_normal_init<double>(const Shape&, int, std::uint64_t, std::string_view);

}  // namespace driu

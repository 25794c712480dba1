#include "driu/weights.hpp"

#include <algorithm>
#include <bit>
#include <limits>

namespace driu {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const noexcept { return pos_ == bytes_.size(); }
  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated weight file while reading ") + what, pos_);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> save_weights(const NamedTensors& tensors) {
  std::vector<std::uint8_t> out(kWeightMagic.begin(), kWeightMagic.end());
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<std::uint8_t> save_weights(const NetworkParams& params) {
  return save_weights(NamedTensors(params.tensors().begin(), params.tensors().end()));
}

NamedTensors load_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWeightMagic.size() ||
      !std::equal(kWeightMagic.begin(), kWeightMagic.end(), bytes.begin())) {
    throw FormatError("bad weight file magic (expected DRIUW1)", 0);
  }
  Reader reader(bytes.subspan(kWeightMagic.size()));
  const std::size_t base = kWeightMagic.size();
  NamedTensors tensors;
  while (!reader.done()) {
    const std::size_t record_start = base + reader.offset();
    const std::uint32_t name_len = reader.u32("name length");
    if (name_len == 0 || name_len > reader.remaining()) {
      throw FormatError("invalid tensor name length " + std::to_string(name_len), record_start);
    }
    auto name_bytes = reader.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::uint32_t rank = reader.u32("rank");
    if (rank == 0 || rank > kMaxWeightRank) {
      throw FormatError("tensor '" + name + "' has unsupported rank " + std::to_string(rank), base + reader.offset());
    }
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = reader.u32("dimension");
      if (d == 0 || d > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw FormatError("tensor '" + name + "' has invalid extent " + std::to_string(d), base + reader.offset());
      }
      count *= d;
      if (count > reader.remaining() / 4 + 1) {
        throw FormatError("tensor '" + name + "' extents exceed the file size", base + reader.offset());
      }
      shape.push_back(static_cast<int>(d));
    }
    auto payload = reader.take(static_cast<std::size_t>(count) * 4, "payload");
    std::vector<float> values(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
      values[i] = std::bit_cast<float>(bits);
    }
    if (!tensors.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw FormatError("duplicate tensor '" + name + "'", record_start);
    }
  }
  return tensors;
}

}  // namespace driu

#include "driu/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "driu/fileio.hpp"

namespace driu {

namespace {

constexpr int kMaxExtent = 1 << 15;

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::size_t offset() const noexcept { return pos_; }

  void skip_separators() {
    while (pos_ < bytes_.size()) {
      const auto ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(ch)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_positive(const char* field, int limit) {
    skip_separators();
    const std::size_t start = pos_;
    long long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > limit) throw FormatError(std::string("netpbm ") + field + " exceeds " + std::to_string(limit), start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("netpbm header: expected ") + field, start);
    if (value < 1) throw FormatError(std::string("netpbm ") + field + " must be positive", start);
    return static_cast<int>(value);
  }

  void expect_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("netpbm header must end with one whitespace byte", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

}  // namespace

NetpbmImage decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary netpbm file (expected P5 or P6)", 0);
  }
  NetpbmImage image;
  image.channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader header(bytes, 2);
  image.width = header.read_positive("width", kMaxExtent);
  image.height = header.read_positive("height", kMaxExtent);
  image.maxval = header.read_positive("maxval", 65535);
  header.expect_single_whitespace();

  const std::size_t start = header.offset();
  const std::size_t bytes_per_sample = image.maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height * image.channels;
  if (bytes.size() - start < count * bytes_per_sample) {
    throw FormatError("truncated netpbm payload: need " + std::to_string(count * bytes_per_sample) + " bytes, have " +
                          std::to_string(bytes.size() - start),
                      bytes.size());
  }
  image.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = start + i * bytes_per_sample;
    const std::uint16_t v = bytes_per_sample == 2 ? static_cast<std::uint16_t>((bytes[at] << 8) | bytes[at + 1])
                                                  : static_cast<std::uint16_t>(bytes[at]);
    if (v > image.maxval) throw FormatError("sample exceeds maxval", at);
    image.samples[i] = v;
  }
  return image;
}

std::vector<std::uint8_t> encode_netpbm(const NetpbmImage& image) {
  if (image.channels != 1 && image.channels != 3) throw InvalidArgument("netpbm images have 1 or 3 channels");
  if (image.width < 1 || image.height < 1 || image.maxval < 1 || image.maxval > 65535) {
    throw InvalidArgument("invalid netpbm geometry or maxval");
  }
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height * image.channels;
  if (image.samples.size() != count) throw InvalidArgument("netpbm sample count does not match geometry");
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n" + std::to_string(image.maxval) + "\n";
  const bool wide = image.maxval > 255;
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + count * (wide ? 2 : 1));
  for (std::uint16_t v : image.samples) {
    if (v > image.maxval) throw InvalidArgument("netpbm sample exceeds maxval");
    if (wide) out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

NetpbmImage read_netpbm(const std::filesystem::path& path) {
  try {
    return decode_netpbm(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_netpbm(const std::filesystem::path& path, const NetpbmImage& image) {
  write_file_atomic(path, encode_netpbm(image));
}

std::uint16_t quantize_probability(double p) noexcept {
  // Saturated sigmoids still map strictly inside (0,1).
  if (!(p > 0.0)) return 1;
  const double level = std::floor(p * 65535.0 + 0.5);
  return static_cast<std::uint16_t>(std::clamp(level, 1.0, 65534.0));
}

Tensor rgb_from_netpbm(const NetpbmImage& image) {
  if (image.channels != 3) throw FormatError("expected an RGB (P6) image", 0);
  Tensor t(Shape{3, image.height, image.width});
  const float scale = 1.0f / static_cast<float>(image.maxval);
  std::size_t i = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = static_cast<float>(image.samples[i++]) * scale;
    }
  }
  return t;
}

NetpbmImage rgb_to_netpbm(const Tensor& image) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw ShapeError("RGB image must be (3,H,W), got " + shape_to_string(image.shape()));
  }
  NetpbmImage out{image.width(), image.height(), 3, 255, {}};
  out.samples.reserve(image.size());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
        out.samples.push_back(static_cast<std::uint16_t>(std::floor(v * 255.0 + 0.5)));
      }
    }
  }
  return out;
}

Tensor quantize_rgb(const Tensor& image) { return rgb_from_netpbm(rgb_to_netpbm(image)); }

Mask mask_from_netpbm(const NetpbmImage& image) {
  if (image.channels != 1) throw FormatError("expected a gray (P5) mask", 0);
  std::vector<std::uint8_t> values(image.samples.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = 2 * image.samples[i] > image.maxval ? 1 : 0;
  return Mask(image.height, image.width, std::move(values));
}

NetpbmImage mask_to_netpbm(const Mask& mask) {
  NetpbmImage out{mask.width(), mask.height(), 1, 255, std::vector<std::uint16_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) out.samples[i] = mask[i] ? 255 : 0;
  return out;
}

Tensor probability_from_netpbm(const NetpbmImage& image) {
  if (image.channels != 1) throw FormatError("expected a gray (P5) probability map", 0);
  Tensor t(Shape{1, image.height, image.width});
  const double scale = 1.0 / image.maxval;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(image.samples[i] * scale);
  return t;
}

NetpbmImage probability_to_netpbm(const Tensor& probability) {
  if (probability.rank() != 3 || probability.channels() != 1) {
    throw ShapeError("probability map must be (1,H,W), got " + shape_to_string(probability.shape()));
  }
  NetpbmImage out{probability.width(), probability.height(), 1, 65535,
                  std::vector<std::uint16_t>(probability.size())};
  for (std::size_t i = 0; i < probability.size(); ++i) out.samples[i] = quantize_probability(probability[i]);
  return out;
}

Tensor read_rgb_image(const std::filesystem::path& path) { return rgb_from_netpbm(read_netpbm(path)); }
void write_rgb_image(const std::filesystem::path& path, const Tensor& image) {
  write_netpbm(path, rgb_to_netpbm(image));
}
Mask read_mask(const std::filesystem::path& path) { return mask_from_netpbm(read_netpbm(path)); }
void write_mask(const std::filesystem::path& path, const Mask& mask) { write_netpbm(path, mask_to_netpbm(mask)); }
Tensor read_probability_map(const std::filesystem::path& path) {
  return probability_from_netpbm(read_netpbm(path));
}
void write_probability_map(const std::filesystem::path& path, const Tensor& probability) {
  write_netpbm(path, probability_to_netpbm(probability));
}

}  // namespace driu

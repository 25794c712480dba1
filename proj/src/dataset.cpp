#include "driu/dataset.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "driu/fileio.hpp"
#include "driu/image_io.hpp"

namespace driu {

namespace fs = std::filesystem;

void Sample::validate() const {
  if (image.rank() != 3 || image.channels() != 3) {
    throw DatasetError("sample '" + id + "': image must be (3,H,W), got " + shape_to_string(image.shape()));
  }
  auto check = [&](const Mask& m, const char* what) {
    if (m.height() != image.height() || m.width() != image.width()) {
      throw DatasetError("sample '" + id + "': " + what + " mask is " + std::to_string(m.height()) + "x" +
                         std::to_string(m.width()) + " but the image is " + std::to_string(image.height()) + "x" +
                         std::to_string(image.width()));
    }
  };
  check(gold, "gold");
  if (second) check(*second, "second-annotator");
  if (fov) check(*fov, "field-of-view");
}

DatasetLayout parse_layout(std::string_view name) {
  if (name == "drive") return DatasetLayout::drive;
  if (name == "stare") return DatasetLayout::stare;
  if (name == "drions") return DatasetLayout::drions;
  if (name == "rimone") return DatasetLayout::rimone;
  if (name == "generic") return DatasetLayout::generic;
  throw InvalidArgument("unknown dataset layout '" + std::string(name) +
                        "' (expected drive, stare, drions, rimone or generic)");
}

std::string_view layout_name(DatasetLayout layout) {
  switch (layout) {
    case DatasetLayout::drive: return "drive";
    case DatasetLayout::stare: return "stare";
    case DatasetLayout::drions: return "drions";
    case DatasetLayout::rimone: return "rimone";
    case DatasetLayout::generic: return "generic";
  }
  return "generic";
}

std::vector<std::string> SplitManifest::all_ids() const {
  std::vector<std::string> ids = unsectioned;
  ids.insert(ids.end(), train.begin(), train.end());
  ids.insert(ids.end(), test.begin(), test.end());
  return ids;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

SplitManifest parse_manifest(std::string_view text) {
  SplitManifest manifest;
  std::vector<std::string>* section = &manifest.unsectioned;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line == "[train]") {
        section = &manifest.train;
      } else if (line == "[test]") {
        section = &manifest.test;
      } else {
        throw DatasetError("split.txt line " + std::to_string(line_no) + ": unknown section " + line);
      }
      continue;
    }
    if (line.find_first_of(" \t/\\") != std::string::npos) {
      throw DatasetError("split.txt line " + std::to_string(line_no) + ": invalid id '" + line + "'");
    }
    section->push_back(line);
  }
  return manifest;
}

std::string format_manifest(const std::vector<std::string>& train, const std::vector<std::string>& test) {
  std::string out = "[train]\n";
  for (const auto& id : train) out += id + "\n";
  out += "[test]\n";
  for (const auto& id : test) out += id + "\n";
  return out;
}

SplitIds assign_split(DatasetLayout layout, const SplitManifest& manifest) {
  SplitIds split;
  if (layout == DatasetLayout::generic) {
    if (!manifest.unsectioned.empty()) {
      throw DatasetError("generic split.txt lists id '" + manifest.unsectioned.front() +
                         "' outside a [train]/[test] section");
    }
    split.train = manifest.train;
    split.test = manifest.test;
  } else {
    struct Convention {
      std::size_t train;
      std::size_t test;
      bool test_first;
    };
    const Convention conv = [&]() -> Convention {
      switch (layout) {
        case DatasetLayout::drive: return {20, 20, true};
        case DatasetLayout::stare: return {10, 10, false};
        case DatasetLayout::drions: return {60, 50, false};
        default: return {99, 60, false};
      }
    }();
    std::vector<std::string> ids = manifest.all_ids();
    std::sort(ids.begin(), ids.end());
    if (ids.size() != conv.train + conv.test) {
      throw DatasetError(std::string(layout_name(layout)) + " layout expects " + std::to_string(conv.train + conv.test) +
                         " ids, manifest lists " + std::to_string(ids.size()));
    }
    const auto first_n = static_cast<std::ptrdiff_t>(conv.test_first ? conv.test : conv.train);
    std::vector<std::string> head(ids.begin(), ids.begin() + first_n), tail(ids.begin() + first_n, ids.end());
    split.train = conv.test_first ? std::move(tail) : std::move(head);
    split.test = conv.test_first ? std::move(head) : std::move(tail);
  }

  std::set<std::string> seen;
  for (const auto* list : {&split.train, &split.test}) {
    for (const auto& id : *list) {
      if (!seen.insert(id).second) throw DatasetError("id '" + id + "' appears more than once in split.txt");
    }
  }
  return split;
}

Sample load_sample(const fs::path& root, const std::string& id, const std::string& gold_dir,
                   const std::string& second_dir) {
  Sample sample;
  sample.id = id;
  const fs::path image_path = root / "images" / (id + ".ppm");
  if (!fs::exists(image_path)) throw DatasetError("missing image for id '" + id + "': " + image_path.string());
  sample.image = read_rgb_image(image_path);
  const fs::path gold_path = root / gold_dir / (id + ".pgm");
  if (!fs::exists(gold_path)) throw DatasetError("missing gold mask for id '" + id + "': " + gold_path.string());
  sample.gold = read_mask(gold_path);
  const fs::path second_path = root / second_dir / (id + ".pgm");
  if (fs::exists(second_path)) sample.second = read_mask(second_path);
  const fs::path fov_path = root / "fov" / (id + ".pgm");
  if (fs::exists(fov_path)) sample.fov = read_mask(fov_path);
  sample.validate();
  return sample;
}

DatasetSplit load_dataset(const fs::path& root, DatasetLayout layout, std::optional<Task> task) {
  const fs::path manifest_path = root / "split.txt";
  if (!fs::exists(manifest_path)) throw DatasetError("dataset manifest not found: " + manifest_path.string());
  const auto bytes = read_file_bytes(manifest_path);
  const SplitIds ids = assign_split(layout, parse_manifest(std::string(bytes.begin(), bytes.end())));

  std::string gold_dir = "gt", second_dir = "gt2";
  if (task) {
    const std::string suffix = "_" + std::string(task_name(*task));
    if (fs::is_directory(root / ("gt" + suffix))) gold_dir += suffix;
    if (fs::is_directory(root / ("gt2" + suffix))) second_dir += suffix;
  }

  DatasetSplit split;
  split.name = root.filename().string();
  if (split.name.empty()) split.name = root.parent_path().filename().string();
  for (const auto& id : ids.train) split.train.push_back(load_sample(root, id, gold_dir, second_dir));
  for (const auto& id : ids.test) split.test.push_back(load_sample(root, id, gold_dir, second_dir));
  return split;
}

}  // namespace driu

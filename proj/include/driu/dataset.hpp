#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "driu/mask.hpp"
#include "driu/network.hpp"
#include "driu/tensor.hpp"

// On-disk dataset layout:
//
//   <root>/split.txt          manifest of ids
//   <root>/images/<id>.ppm    RGB fundus image (P6)
//   <root>/gt/<id>.pgm        gold standard (first annotator)
//   <root>/gt2/<id>.pgm       optional second annotator
//   <root>/fov/<id>.pgm       optional field-of-view mask
//
// When a task is given, `gt_<task>/` and `gt2_<task>/` take precedence over
// `gt/` and `gt2/`, so one image directory can serve both tasks.
//
// split.txt holds one id per line under `[train]` and `[test]` headers; `#`
// starts a comment. Named layouts pool every listed id, sort them and apply
// the dataset's conventional split; the generic layout uses the sections.

namespace driu {

struct Sample {
  std::string id;
  Tensor image;  // (3,H,W) in [0,1]
  Mask gold;
  std::optional<Mask> second;
  std::optional<Mask> fov;

  void validate() const;
};

struct DatasetSplit {
  std::string name;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

enum class DatasetLayout { drive, stare, drions, rimone, generic };

DatasetLayout parse_layout(std::string_view name);
std::string_view layout_name(DatasetLayout layout);

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<std::string> unsectioned;

  std::vector<std::string> all_ids() const;
};

SplitManifest parse_manifest(std::string_view text);
std::string format_manifest(const std::vector<std::string>& train, const std::vector<std::string>& test);

struct SplitIds {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Applies a layout's split convention to a manifest:
///   drive  40 ids: first 20 (sorted) test, last 20 train
///   stare  20 ids: first 10 train, last 10 test
///   drions 110 ids: first 60 train, last 50 test
///   rimone 159 ids: first 99 train, last 60 test
///   generic: the manifest's own sections
SplitIds assign_split(DatasetLayout layout, const SplitManifest& manifest);

DatasetSplit load_dataset(const std::filesystem::path& root, DatasetLayout layout,
                          std::optional<Task> task = std::nullopt);

// Loads one sample; gold/second directories already resolved.
Sample load_sample(const std::filesystem::path& root, const std::string& id, const std::string& gold_dir,
                   const std::string& second_dir);

}  // namespace driu

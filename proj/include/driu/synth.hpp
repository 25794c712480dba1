#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "driu/dataset.hpp"
#include "driu/mask.hpp"
#include "driu/network.hpp"
#include "driu/tensor.hpp"

namespace driu {

inline constexpr int kMinSynthSize = 32;

/// A synthetic fundus photograph with exact masks from its generating
/// geometry: circular field of view, a bright optic disc and a branching
/// vessel tree that is darker than its surroundings. The "second annotator"
/// masks come from a perturbed copy of the same geometry.
struct SyntheticFundus {
  std::string id;
  Tensor image;  // (3,S,S), already on the 8-bit grid
  Mask fov;
  Mask vessel;
  Mask disc;
  Mask vessel_second;
  Mask disc_second;

  Sample sample(Task task) const;
};

SyntheticFundus synth_fundus(std::uint64_t seed, int size);

/// Writes `count` fundus images (seeds seed..seed+count-1) as a generic-layout
/// dataset with gt_vessel/, gt_disc/, gt2_vessel/, gt2_disc/ and fov/. The last
/// `test_count` ids form the test section.
void write_synthetic_dataset(const std::filesystem::path& root, std::uint64_t seed, int count, int size,
                             int test_count);

}  // namespace driu

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fbcgan/core.hpp"

namespace fbc {

/// One training triple. fg_obj is exactly zero outside the binary mask m.
struct Sample {
  ImageTensor x;
  ImageTensor fg_obj;
  SpatialMap m;
  std::string stem;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Foreground and background sub-datasets; they may come from different sources.
struct DatasetPair {
  std::vector<Sample> foreground_set;
  std::vector<Sample> background_set;
};

/// Checks the sample invariants; throws ValidationError.
void validate_sample(const Sample& s);

/// Reads `<root>/{images,foregrounds,masks}/<stem>.png`. Stems come from
/// `manifest.json` when present, else from the images folder. Incomplete
/// triples are skipped with a warning (counted in `warnings`); a folder with
/// no usable sample raises IoError.
std::vector<Sample> load_samples(const std::filesystem::path& root, int resolution, int* warnings = nullptr);
DatasetPair load_dataset(const std::filesystem::path& fg_dir, const std::filesystem::path& bg_dir, int resolution,
                         int* warnings = nullptr);

/// Writes the triples plus a manifest (single "train" split).
void save_samples(const std::vector<Sample>& samples, const std::filesystem::path& root);

/// Uniform index in [0, size) other than idx. size < 2 raises InvalidArgument.
int sample_mismatched_index(int size, int idx, Rng& rng);
/// Mask of a random foreground sample other than idx.
SpatialMap sample_mismatched_mask(const DatasetPair& ds, int idx, Rng& rng);

/// Textured ellipse/polygon objects on procedural backgrounds, quantised to
/// 8-bit levels so a PNG round trip is exact. Mask coverage lies in [5%, 60%].
/// Both sub-datasets hold the same samples.
DatasetPair make_synthetic_dataset(int n, int resolution, std::uint64_t seed);

}  // namespace fbc

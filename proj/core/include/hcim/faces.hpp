#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "hcim/adaptation.hpp"
#include "hcim/checkpoint.hpp"
#include "hcim/rng.hpp"

namespace hcim {

/// Grayscale face images, one per column of `pixels` (row-major h*w, values
/// in [0, 1]), with identity labels.
///
/// Container "OLIV1": 5-byte magic, then u32 count, u32 height, u32 width
/// (little-endian), then count*height*width u8 pixels.
struct FacesDataset {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  Matrix pixels;
  std::vector<int> identities;

  std::size_t size() const { return identities.size(); }
  std::size_t identity_count() const;
  std::uint64_t checksum() const;
};

FacesDataset read_faces(std::istream& in);
void write_faces(std::ostream& out, const FacesDataset& faces);
FacesDataset load_faces(const std::filesystem::path& path);
void save_faces(const std::filesystem::path& path, const FacesDataset& faces);

struct SyntheticFaceConfig {
  std::uint32_t identities = 40;
  std::uint32_t images_per_identity = 10;
  std::uint32_t size = 64;
  double pixel_noise = 0.03;
  double max_shift = 1.0;  // pixels
};

/// Procedural stand-in with the Olivetti layout (identity-major order,
/// values quantized to u8 levels).
FacesDataset synthesize_faces(const SyntheticFaceConfig& cfg, std::uint64_t seed);

struct FaceSplit {
  Dataset train;
  Dataset test;
};

/// Selects `ids` and relabels them 0..n-1 in the given order; per identity,
/// `train_per_id` random images go to train and the rest to test. Sample
/// ids are dataset indices.
FaceSplit split_faces(const FacesDataset& faces, const std::vector<int>& ids,
                      std::size_t train_per_id, Rng& rng);

}  // namespace hcim

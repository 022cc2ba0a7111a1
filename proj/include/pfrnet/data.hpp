#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pfrnet/tensor.hpp"

namespace pfrnet {

// image: (1, 3, H, W) in [0, 1]; mask: (1, 1, H, W) with values in {0, 1}.
// Per-channel mean/std normalization happens at the network input.
struct Sample {
  FeatureMap image;
  FeatureMap mask;
  std::string id;

  // Throws unless shapes agree, the image is in [0, 1] and the mask is binary.
  void validate() const;
};

struct LoadOptions {
  // Receives one line per resized mask. Null silences warnings.
  std::ostream* warnings = nullptr;
};

// Reads <root>/Imgs/*.{jpg,png,...} and <root>/GT/*.png paired by filename stem,
// sorted by id. Masks are binarized at 128/255 and resized with nearest
// neighbour onto the image grid when sizes differ. Throws listing every
// unpaired stem.
std::vector<Sample> load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});

// Writes samples in the load_dataset layout (PNG images and masks).
void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root);

struct SynthOptions {
  double min_foreground = 0.05;
  double max_foreground = 0.4;
  // Largest relative shift of the object's texture statistics from the background.
  double max_contrast = 0.15;
};

// Deterministic camouflage-style scenes: smooth textured noise with a union of
// random ellipses whose colour and texture are shifted slightly from the
// background. The mask is the exact ellipse support.
std::vector<Sample> synth_generate(uint64_t seed, int n, int size, const SynthOptions& options = {});

Sample flip_horizontal(const Sample& sample);

// Flip with probability 0.5 (decided by `seed`, skipped when `flip` is false),
// then resize to resolution x resolution: bilinear for the image, nearest for
// the mask.
Sample augment(const Sample& sample, uint64_t seed, int resolution, bool flip = true);

// Whether augment(sample, seed, ...) flips.
bool augment_flips(uint64_t seed);

}  // namespace pfrnet

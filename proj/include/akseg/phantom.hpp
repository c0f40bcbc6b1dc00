#ifndef AKSEG_PHANTOM_HPP
#define AKSEG_PHANTOM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "akseg/metrics.hpp"
#include "akseg/tensor.hpp"

namespace akseg {

// Controls the synthetic low-contrast phantom distribution. The key
// property: the lesion-to-tissue intensity shift stays below the per-pixel
// noise floor (contrast_max <= 2·noise_sigma), so lesions are separable
// only through spatial context.
struct PhantomSpec {
  std::size_t size = 64;  // H = W
  double organ_center_jitter = 0.08;   // fraction of size
  double organ_axis_min = 0.28;        // fraction of size
  double organ_axis_max = 0.40;
  std::size_t lesion_count_min = 0;
  std::size_t lesion_count_max = 3;
  double lesion_radius_min = 3.0;      // pixels
  double lesion_radius_max = 6.0;
  double contrast_min = 0.03;          // lesion-tissue intensity delta
  double contrast_max = 0.10;
  double noise_sigma = 0.05;
  double texture_scale = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

PhantomSpec phantom_spec_from_file(const std::string& path);
std::string phantom_spec_to_text(const PhantomSpec& spec);

struct LesionInfo {
  double cx = 0, cy = 0, radius = 0, contrast = 0;
};

struct Sample {
  std::vector<double> image;  // H×W grayscale in [0,1]
  Mask mask;
  std::string id;
  std::size_t h = 0, w = 0;
  std::vector<LesionInfo> lesions;  // render metadata, for inspection
};

// Deterministic per (spec.seed, index); n samples.
std::vector<Sample> generate(const PhantomSpec& spec, std::size_t n);

// Best single intensity threshold (either polarity) over pooled pixels;
// returns the pixel F1 percentage it achieves. Oracle for the
// semantic-homogeneity property.
double best_threshold_f1(const std::vector<Sample>& samples);

}  // namespace akseg

#endif

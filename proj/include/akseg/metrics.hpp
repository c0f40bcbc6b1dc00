#ifndef AKSEG_METRICS_HPP
#define AKSEG_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "akseg/tensor.hpp"

namespace akseg {

struct Mask {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> v;  // 0/1, row-major

  Mask() = default;
  Mask(std::size_t hh, std::size_t ww) : h(hh), w(ww), v(hh * ww, 0) {}
  std::uint8_t& at(std::size_t y, std::size_t x) { return v[y * w + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
  std::size_t size() const { return v.size(); }
};

struct MetricsRecord {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double iou = 0, dice = 0, specificity = 0;
  double f1_pixel = 0, f1_lesion = 0, fpr = 0;  // all percentages
};

// Pixel metrics from confusion counts plus lesion-level detection F1 over
// 4-connected components (a truth lesion counts detected when some predicted
// component overlaps it with IoU >= 0.1). Empty-truth-and-empty-pred gives
// IoU = Dice = lesion F1 = 100.
MetricsRecord compute_metrics(const Mask& pred, const Mask& truth);

// Labels 4-connected components; returns label map (0 = background) and
// component count.
std::vector<int> connected_components(const Mask& m, int& count);

// CSV emission: header + one row per image + aggregate (macro-average) row.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& image_id,
                            const MetricsRecord& r);
MetricsRecord macro_average(const std::vector<MetricsRecord>& rs);

}  // namespace akseg

#endif

#ifndef AKSEG_PGM_HPP
#define AKSEG_PGM_HPP

#include <string>
#include <vector>

#include "akseg/metrics.hpp"
#include "akseg/phantom.hpp"

namespace akseg {

// Binary 8-bit PGM (magic P5, maxval 255). Intensities quantized by
// round(v·255); round-trip is lossless post-quantization.
void write_pgm(const std::vector<double>& image, std::size_t h, std::size_t w,
               const std::string& path);
std::vector<double> read_pgm(const std::string& path, std::size_t& h,
                             std::size_t& w);

// Masks use pixel values {0, 255}; anything else on read is an error.
void write_mask(const Mask& mask, const std::string& path);
Mask read_mask(const std::string& path);

}  // namespace akseg

#endif

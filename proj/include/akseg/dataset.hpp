#ifndef AKSEG_DATASET_HPP
#define AKSEG_DATASET_HPP

#include <string>
#include <vector>

#include "akseg/phantom.hpp"

namespace akseg {

struct SplitResult {
  std::vector<std::size_t> group_of;  // group id per sample
  std::vector<std::size_t> train;     // sample indices
  std::vector<std::size_t> test;
};

// Seeded shuffle, then a balanced partition into n_groups whose sizes must
// all land in [18, 26]; the first train_groups groups train, the rest test.
SplitResult make_split(std::size_t n_samples, std::size_t n_groups,
                       std::size_t train_groups, std::uint64_t seed);

// Dataset manifest: one "image_path mask_path group_id" line per sample.
void write_manifest(const std::string& path,
                    const std::vector<std::string>& images,
                    const std::vector<std::string>& masks,
                    const std::vector<std::size_t>& groups);

struct ManifestEntry {
  std::string image_path;
  std::string mask_path;
  std::size_t group = 0;
};
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Loads every manifest entry as a Sample (image from PGM, mask from PGM).
std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries);

}  // namespace akseg

#endif

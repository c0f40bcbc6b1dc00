#include "akseg/dataset.hpp"

#include <filesystem>
#include <numeric>
#include <sstream>

#include "akseg/config.hpp"
#include "akseg/pgm.hpp"
#include "akseg/rng.hpp"

namespace akseg {

SplitResult make_split(std::size_t n_samples, std::size_t n_groups,
                       std::size_t train_groups, std::uint64_t seed) {
  if (n_groups == 0 || train_groups >= n_groups)
    throw ValueError("make_split: need 0 < train_groups < n_groups");
  std::size_t base = n_samples / n_groups;
  std::size_t extra = n_samples % n_groups;  // first `extra` groups get +1
  if (base < 18 || base + (extra ? 1 : 0) > 26) {
    throw ValueError("make_split: " + std::to_string(n_samples) +
                     " samples over " + std::to_string(n_groups) +
                     " groups gives group sizes outside [18,26]");
  }
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hash_combine(seed, 0x5F117ULL));
  rng.shuffle(order);

  SplitResult res;
  res.group_of.resize(n_samples);
  std::size_t pos = 0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    std::size_t sz = base + (g < extra ? 1 : 0);
    for (std::size_t i = 0; i < sz; ++i) {
      std::size_t s = order[pos++];
      res.group_of[s] = g;
      (g < train_groups ? res.train : res.test).push_back(s);
    }
  }
  return res;
}

void write_manifest(const std::string& path,
                    const std::vector<std::string>& images,
                    const std::vector<std::string>& masks,
                    const std::vector<std::size_t>& groups) {
  if (images.size() != masks.size() || images.size() != groups.size())
    throw ValueError("write_manifest: list length mismatch");
  std::string out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out += images[i] + " " + masks[i] + " " + std::to_string(groups[i]) + "\n";
  }
  write_text_file(path, out);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.image_path >> e.mask_path >> e.group)) {
      throw IoError("manifest line " + std::to_string(lineno) +
                    ": expected 'image mask group'");
    }
    entries.push_back(e);
  }
  if (entries.empty()) throw IoError("manifest is empty: " + path);
  return entries;
}

std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries) {
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Sample s;
    s.image = read_pgm(e.image_path, s.h, s.w);
    s.mask = read_mask(e.mask_path);
    if (s.mask.h != s.h || s.mask.w != s.w) {
      throw IoError("image/mask size mismatch for " + e.image_path);
    }
    s.id = std::filesystem::path(e.image_path).stem().string();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace akseg

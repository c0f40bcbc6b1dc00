#include "akseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "akseg/config.hpp"
#include "akseg/rng.hpp"

namespace akseg {

void PhantomSpec::validate() const {
  if (size < 8) throw ValueError("PhantomSpec: size too small");
  if (lesion_count_min > lesion_count_max)
    throw ValueError("PhantomSpec: lesion count range inverted");
  if (lesion_radius_min > lesion_radius_max || lesion_radius_min <= 0)
    throw ValueError("PhantomSpec: bad lesion radius range");
  if (contrast_min > contrast_max || contrast_min < 0)
    throw ValueError("PhantomSpec: bad contrast range");
  if (contrast_max > 2.0 * noise_sigma) {
    throw ValueError(
        "PhantomSpec: contrast_max must be <= 2*noise_sigma so lesions are "
        "not separable per pixel");
  }
  double min_axis = organ_axis_min * static_cast<double>(size);
  if (lesion_radius_max + 2.0 >= min_axis) {
    throw ValueError("PhantomSpec: lesion radius exceeds organ axis");
  }
}

PhantomSpec phantom_spec_from_file(const std::string& path) {
  KeyValues kv = read_key_values_file(path);
  PhantomSpec s;
  s.size = static_cast<std::size_t>(kv_int(kv, "size", 64));
  s.organ_center_jitter = kv_double(kv, "organ_center_jitter", 0.08);
  s.organ_axis_min = kv_double(kv, "organ_axis_min", 0.28);
  s.organ_axis_max = kv_double(kv, "organ_axis_max", 0.40);
  s.lesion_count_min =
      static_cast<std::size_t>(kv_int(kv, "lesion_count_min", 0));
  s.lesion_count_max =
      static_cast<std::size_t>(kv_int(kv, "lesion_count_max", 3));
  s.lesion_radius_min = kv_double(kv, "lesion_radius_min", 3.0);
  s.lesion_radius_max = kv_double(kv, "lesion_radius_max", 6.0);
  s.contrast_min = kv_double(kv, "contrast_min", 0.03);
  s.contrast_max = kv_double(kv, "contrast_max", 0.10);
  s.noise_sigma = kv_double(kv, "noise_sigma", 0.05);
  s.texture_scale = kv_double(kv, "texture_scale", 0.02);
  s.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", 0));
  s.validate();
  return s;
}

std::string phantom_spec_to_text(const PhantomSpec& s) {
  KeyValues kv;
  char buf[64];
  auto put = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    kv[k] = buf;
  };
  kv["size"] = std::to_string(s.size);
  put("organ_center_jitter", s.organ_center_jitter);
  put("organ_axis_min", s.organ_axis_min);
  put("organ_axis_max", s.organ_axis_max);
  kv["lesion_count_min"] = std::to_string(s.lesion_count_min);
  kv["lesion_count_max"] = std::to_string(s.lesion_count_max);
  put("lesion_radius_min", s.lesion_radius_min);
  put("lesion_radius_max", s.lesion_radius_max);
  put("contrast_min", s.contrast_min);
  put("contrast_max", s.contrast_max);
  put("noise_sigma", s.noise_sigma);
  put("texture_scale", s.texture_scale);
  kv["seed"] = std::to_string(s.seed);
  return serialize_key_values(kv);
}

// Plateau of value 1 up to `radius`, cosine falloff over `kEdge` pixels.
// Half-maximum sits at radius + kEdge/2, which defines the mask.
namespace {
constexpr double kEdge = 1.5;

double blob_profile(double dist, double radius) {
  if (dist <= radius) return 1.0;
  if (dist >= radius + kEdge) return 0.0;
  return 0.5 * (1.0 + std::cos(3.14159265358979323846 *
                               (dist - radius) / kEdge));
}
}  // namespace

static Sample generate_one(const PhantomSpec& spec, std::size_t index) {
  Rng rng(hash_combine(spec.seed, 0x5EED0000ULL + index));
  std::size_t s = spec.size;
  double sz = static_cast<double>(s);

  Sample out;
  out.h = s;
  out.w = s;
  out.mask = Mask(s, s);
  out.image.assign(s * s, 0.0);
  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "%06zu", index);
  out.id = idbuf;

  double cx = sz * (0.5 + rng.uniform(-spec.organ_center_jitter,
                                      spec.organ_center_jitter));
  double cy = sz * (0.5 + rng.uniform(-spec.organ_center_jitter,
                                      spec.organ_center_jitter));
  double ax = sz * rng.uniform(spec.organ_axis_min, spec.organ_axis_max);
  double ay = sz * rng.uniform(spec.organ_axis_min, spec.organ_axis_max);
  double tissue = rng.uniform(0.45, 0.55);
  double background = rng.uniform(0.10, 0.16);

  // smooth low-frequency texture: three random sinusoids
  struct Wave {
    double fx, fy, phase, amp;
  } waves[3];
  for (auto& wv : waves) {
    wv.fx = rng.uniform(0.5, 2.5) / sz;
    wv.fy = rng.uniform(0.5, 2.5) / sz;
    wv.phase = rng.uniform(0.0, 6.283185307179586);
    wv.amp = spec.texture_scale * rng.uniform(0.4, 1.0);
  }

  std::size_t n_lesions =
      spec.lesion_count_max == 0
          ? 0
          : static_cast<std::size_t>(rng.uniform_int(
                static_cast<std::int64_t>(spec.lesion_count_min),
                static_cast<std::int64_t>(spec.lesion_count_max)));
  for (std::size_t li = 0; li < n_lesions; ++li) {
    double radius =
        rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
    double support = radius + kEdge;  // full blob footprint
    LesionInfo info;
    info.radius = radius;
    info.contrast = rng.uniform(spec.contrast_min, spec.contrast_max);
    // rejection-sample a center whose full support stays inside the organ
    bool placed = false;
    for (int tries = 0; tries < 200 && !placed; ++tries) {
      double lx = cx + rng.uniform(-ax, ax);
      double ly = cy + rng.uniform(-ay, ay);
      double nx = (lx - cx) / std::max(ax - support, 1.0);
      double ny = (ly - cy) / std::max(ay - support, 1.0);
      if (nx * nx + ny * ny <= 1.0) {
        info.cx = lx;
        info.cy = ly;
        placed = true;
      }
    }
    if (placed) out.lesions.push_back(info);
  }

  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      double px = static_cast<double>(x) + 0.5;
      double py = static_cast<double>(y) + 0.5;
      double ex = (px - cx) / ax, ey = (py - cy) / ay;
      bool inside = ex * ex + ey * ey <= 1.0;
      double v = inside ? tissue : background;
      if (inside) {
        for (const auto& wv : waves)
          v += wv.amp * std::sin(6.283185307179586 *
                                     (wv.fx * px + wv.fy * py) +
                                 wv.phase);
      }
      double profile_peak = 0.0;
      for (const auto& le : out.lesions) {
        double d = std::hypot(px - le.cx, py - le.cy);
        double pr = blob_profile(d, le.radius);
        v += le.contrast * pr;
        profile_peak = std::max(profile_peak, pr);
      }
      if (profile_peak >= 0.5) out.mask.at(y, x) = 1;
      v += rng.normal(0.0, spec.noise_sigma);
      out.image[y * s + x] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

std::vector<Sample> generate(const PhantomSpec& spec, std::size_t n) {
  spec.validate();
  if (n < 1) throw ValueError("generate: n must be >= 1");
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one(spec, i));
  return out;
}

double best_threshold_f1(const std::vector<Sample>& samples) {
  double best = 0.0;
  for (int t = 0; t <= 255; ++t) {
    double thr = static_cast<double>(t) / 255.0;
    for (int polarity = 0; polarity < 2; ++polarity) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (const auto& s : samples) {
        for (std::size_t i = 0; i < s.image.size(); ++i) {
          bool pred = polarity == 0 ? s.image[i] > thr : s.image[i] < thr;
          bool truth = s.mask.v[i] != 0;
          if (pred && truth) ++tp;
          else if (pred && !truth) ++fp;
          else if (!pred && truth) ++fn;
        }
      }
      double denom = static_cast<double>(2 * tp + fp + fn);
      double f1 = denom > 0 ? 100.0 * 2.0 * tp / denom : 0.0;
      best = std::max(best, f1);
    }
  }
  return best;
}

}  // namespace akseg

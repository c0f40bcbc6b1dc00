#include "akseg/pgm.hpp"

#include <cmath>
#include <fstream>

namespace akseg {

static void write_pgm_bytes(const std::vector<std::uint8_t>& bytes,
                            std::size_t h, std::size_t w,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

static std::vector<std::uint8_t> read_pgm_bytes(const std::string& path,
                                                std::size_t& h,
                                                std::size_t& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") {
    throw IoError("not a binary PGM (expected magic P5, got '" + magic +
                  "'): " + path);
  }
  // header tokens may be separated by whitespace/comments
  auto next_int = [&]() -> std::size_t {
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string junk;
        std::getline(in, junk);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
      if (!in) throw IoError("malformed PGM header: " + path);
    }
    std::size_t v = 0;
    if (!(in >> v)) throw IoError("malformed PGM header: " + path);
    return v;
  };
  w = next_int();
  h = next_int();
  std::size_t maxval = next_int();
  if (maxval != 255) throw IoError("unsupported PGM maxval in " + path);
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> bytes(h * w);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("truncated PGM payload: " + path);
  return bytes;
}

void write_pgm(const std::vector<double>& image, std::size_t h, std::size_t w,
               const std::string& path) {
  if (image.size() != h * w) throw ShapeError("write_pgm: size mismatch");
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    double v = std::min(std::max(image[i], 0.0), 1.0);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_pgm_bytes(bytes, h, w, path);
}

std::vector<double> read_pgm(const std::string& path, std::size_t& h,
                             std::size_t& w) {
  auto bytes = read_pgm_bytes(path, h, w);
  std::vector<double> image(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    image[i] = static_cast<double>(bytes[i]) / 255.0;
  return image;
}

void write_mask(const Mask& mask, const std::string& path) {
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    bytes[i] = mask.v[i] ? 255 : 0;
  write_pgm_bytes(bytes, mask.h, mask.w, path);
}

Mask read_mask(const std::string& path) {
  std::size_t h = 0, w = 0;
  auto bytes = read_pgm_bytes(path, h, w);
  Mask m(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 255) {
      throw IoError("mask pixel " + std::to_string(i) + " has value " +
                    std::to_string(bytes[i]) + " (expected 0 or 255): " +
                    path);
    }
    m.v[i] = bytes[i] ? 1 : 0;
  }
  return m;
}

}  // namespace akseg

#include "occgeom/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "occgeom/errors.hpp"

namespace occgeom::io {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

// Reads a whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw IoError("truncated image header");
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  return v;
}

}  // namespace

void write_pfm(const fs::path& path, const DenseTensor& image) {
  if (image.rank() != 2) throw DimensionError("write_pfm expects an H x W image");
  const Index h = image.dim(0), w = image.dim(1);
  auto out = open_out(path);
  out << "Pf\n" << w << " " << h << "\n-1.0\n";
  for (Index r = h - 1; r >= 0; --r) {
    for (Index c = 0; c < w; ++c) {
      const float f = static_cast<float>(image(r, c));
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      bits = to_little_endian(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

DenseTensor read_pfm(const fs::path& path) {
  auto in = open_in(path);
  if (header_token(in) != "Pf") throw IoError(path.string() + " is not a single-channel PFM");
  const Index w = std::stol(header_token(in)), h = std::stol(header_token(in));
  const double scale = std::stod(header_token(in));
  in.get();
  if (w <= 0 || h <= 0) throw IoError("bad PFM extents in " + path.string());
  const bool little = scale < 0.0;
  DenseTensor img({h, w});
  for (Index r = h - 1; r >= 0; --r) {
    for (Index c = 0; c < w; ++c) {
      std::uint32_t bits;
      if (!in.read(reinterpret_cast<char*>(&bits), 4)) throw IoError("truncated PFM " + path.string());
      if (little != (std::endian::native == std::endian::little))
        bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
      float f;
      std::memcpy(&f, &bits, 4);
      img(r, c) = f;
    }
  }
  return img;
}

void write_pgm16_millimetres(const fs::path& path, const DenseTensor& depth) {
  if (depth.rank() != 2) throw DimensionError("write_pgm16 expects an H x W image");
  auto out = open_out(path);
  out << "P5\n" << depth.dim(1) << " " << depth.dim(0) << "\n65535\n";
  for (Index i = 0; i < depth.size(); ++i) {
    const double mm = std::clamp(std::round(depth.data()[i] * 1000.0), 0.0, 65535.0);
    const auto v = static_cast<std::uint16_t>(mm);
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
    out.write(bytes, 2);
  }
}

void write_mask_pgm(const fs::path& path, std::span<const std::uint8_t> mask, int height, int width) {
  if (mask.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
    throw DimensionError("mask size does not match its extents");
  auto out = open_out(path);
  out << "P5\n" << width << " " << height << "\n255\n";
  for (auto m : mask) out.put(static_cast<char>(m ? 255 : 0));
}

void write_ppm(const fs::path& path, const DenseTensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("write_ppm expects an H x W x 3 image");
  auto out = open_out(path);
  out << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  for (Index i = 0; i < image.size(); ++i) {
    const double v = std::clamp(std::round(image.data()[i] * 255.0), 0.0, 255.0);
    out.put(static_cast<char>(static_cast<unsigned char>(v)));
  }
}

DenseTensor read_ppm(const fs::path& path) {
  auto in = open_in(path);
  if (header_token(in) != "P6") throw IoError(path.string() + " is not a binary PPM");
  const Index w = std::stol(header_token(in)), h = std::stol(header_token(in));
  const int maxval = std::stoi(header_token(in));
  in.get();
  if (maxval != 255) throw IoError("only 8-bit PPM is supported");
  DenseTensor img({h, w, 3});
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.size()));
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw IoError("truncated PPM " + path.string());
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = buf[static_cast<std::size_t>(i)] / 255.0;
  return img;
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  auto in = open_in(path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace occgeom::io

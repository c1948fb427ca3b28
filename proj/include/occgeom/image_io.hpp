#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "occgeom/tensor.hpp"

namespace occgeom::io {

/// Single-channel PFM ("Pf"), little-endian (scale -1.0), rows stored
/// bottom to top as the format requires.
void write_pfm(const std::filesystem::path& path, const DenseTensor& image);
DenseTensor read_pfm(const std::filesystem::path& path);

/// 16-bit binary PGM of depth quantised to millimetres (clamped to 65535).
void write_pgm16_millimetres(const std::filesystem::path& path, const DenseTensor& depth);

/// 8-bit binary PGM, 255 where mask is non-zero.
void write_mask_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> mask, int height, int width);

/// 8-bit binary PPM from an H x W x 3 image in [0, 1].
void write_ppm(const std::filesystem::path& path, const DenseTensor& image);
DenseTensor read_ppm(const std::filesystem::path& path);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace occgeom::io

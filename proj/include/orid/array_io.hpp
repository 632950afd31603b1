#pragma once

#include "orid/imaging.hpp"

#include <string>

namespace orid::io {

// Images are NPY v1.0 files, dtype '<f4', C order, shape (height, width, channels).
// Readers also accept '<f8' and '|u1' (the latter scaled by 1/255).
std::string encode_image_npy(const Image& img);
Image decode_image_npy(const std::string& bytes);
void write_image(const std::string& path, const Image& img);
Image read_image(const std::string& path);

// Mask container layout:
//   "ORIDMASK 1\n"
//   one line per organ, canonical order: "<organ> <channels> <height> <width>\n"
//   "\n"
//   for each organ in header order, channels*height*width bytes, each 0 or 1,
//   channel-major then row-major.
std::string encode_masks(const MaskBundle& masks);
MaskBundle decode_masks(const std::string& bytes);
void write_masks(const std::string& path, const MaskBundle& masks);
MaskBundle read_masks(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace orid::io

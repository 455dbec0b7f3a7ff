#pragma once

// Binary PPM (P6) and PGM (P5) image files, plus write-then-rename file
// output so partially written artifacts never land under their final name.

#include <filesystem>
#include <string>

#include "eat/tensor.hpp"

namespace eat {

// {3,H,W} in [0,1] <-> P6 with maxval 255.
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& image);

// {H,W} in [0,1] <-> P5 with maxval 255.
Tensor read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Tensor& plane);

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// Reads any image format: PPM/PGM natively, JPEG/PNG through OpenCV when
// built with EAT_WITH_OPENCV. Returns {3,H,W}.
Tensor read_image_any(const std::filesystem::path& path);

}  // namespace eat

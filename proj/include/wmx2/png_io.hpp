#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmx2/tensor.hpp"

namespace wmx2 {

// 8-bit image carrier for PNG I/O. Interleaved samples, row-major.
struct ImageU8 {
    int h = 0;
    int w = 0;
    int channels = 0;  // 1 (grayscale) or 3 (RGB)
    std::vector<uint8_t> data;

    bool operator==(const ImageU8& o) const = default;
};

// Loads an 8-bit RGB or grayscale PNG. Palette, 16-bit and other exotic
// formats are rejected with an IoError naming the cause; alpha is dropped.
ImageU8 load_png(const std::string& path);

void save_png(const ImageU8& img, const std::string& path);

// u8 -> float in [0,1], shape (1, channels, h, w).
Tensor image_to_tensor(const ImageU8& img);

// float -> u8 with round-half-away-from-zero, clamped to [0,255].
ImageU8 tensor_to_image(const Tensor& t);

// Replicates a grayscale image into 3 channels; RGB passes through.
ImageU8 promote_to_rgb(const ImageU8& img);

}  // namespace wmx2

#include "wmx2/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "wmx2/error.hpp"

namespace wmx2 {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

ImageU8 load_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open PNG file: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw IoError("not a PNG file: " + path);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng allocation failed");
    }
    ImageU8 img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode error: " + path);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG bit depth " + std::to_string(bit_depth) + " in " + path +
                      " (only 8-bit supported)");
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported palette PNG: " + path);
    }
    if (color_type != PNG_COLOR_TYPE_RGB && color_type != PNG_COLOR_TYPE_GRAY &&
        color_type != PNG_COLOR_TYPE_RGB_ALPHA && color_type != PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG color type " + std::to_string(color_type) + " in " + path);
    }
    if (color_type & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    img.h = static_cast<int>(h);
    img.w = static_cast<int>(w);
    img.channels = (color_type & PNG_COLOR_MASK_COLOR) ? 3 : 1;
    img.data.resize(static_cast<size_t>(img.h) * img.w * img.channels);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = img.data.data() + static_cast<size_t>(y) * img.w * img.channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const ImageU8& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw ParamError("save_png: channels must be 1 or 3, got " + std::to_string(img.channels));
    }
    if (img.data.size() != static_cast<size_t>(img.h) * img.w * img.channels) {
        throw ParamError("save_png: data size does not match dims");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode error: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.data.data() +
                                                 static_cast<size_t>(y) * img.w * img.channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor image_to_tensor(const ImageU8& img) {
    Tensor t(1, img.channels, img.h, img.w);
    for (int c = 0; c < img.channels; ++c) {
        float* dst = t.row(0, c, 0);
        for (int64_t i = 0; i < static_cast<int64_t>(img.h) * img.w; ++i) {
            dst[i] = static_cast<float>(img.data[static_cast<size_t>(i) * img.channels + c]) / 255.0f;
        }
    }
    return t;
}

ImageU8 tensor_to_image(const Tensor& t) {
    if (t.n() != 1 || (t.c() != 1 && t.c() != 3)) {
        throw ShapeError("tensor_to_image: expected (1,{1|3},h,w), got " + t.shape().str());
    }
    ImageU8 img;
    img.h = t.h();
    img.w = t.w();
    img.channels = t.c();
    img.data.resize(static_cast<size_t>(img.h) * img.w * img.channels);
    for (int c = 0; c < img.channels; ++c) {
        const float* src = t.row(0, c, 0);
        for (int64_t i = 0; i < static_cast<int64_t>(img.h) * img.w; ++i) {
            // Round half away from zero, then clamp to the 8-bit range.
            const double scaled = static_cast<double>(src[i]) * 255.0;
            long v = std::lround(scaled);
            if (v < 0) v = 0;
            if (v > 255) v = 255;
            img.data[static_cast<size_t>(i) * img.channels + c] = static_cast<uint8_t>(v);
        }
    }
    return img;
}

ImageU8 promote_to_rgb(const ImageU8& img) {
    if (img.channels == 3) return img;
    if (img.channels != 1) throw ParamError("promote_to_rgb: expected 1 or 3 channels");
    ImageU8 out;
    out.h = img.h;
    out.w = img.w;
    out.channels = 3;
    out.data.resize(static_cast<size_t>(out.h) * out.w * 3);
    for (size_t i = 0; i < img.data.size(); ++i) {
        out.data[i * 3] = out.data[i * 3 + 1] = out.data[i * 3 + 2] = img.data[i];
    }
    return out;
}

}  // namespace wmx2

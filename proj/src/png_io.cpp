#include "cts/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace cts {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("png: " + what + " (" + path + ")");
}

} // namespace

ImageGrid read_png_gray(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(path, "cannot open for reading");

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8)) fail(path, "not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "corrupt PNG");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    if (depth == 16) png_set_swap(png); // little-endian rows below
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    std::vector<png_byte> data(stride * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = data.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageGrid img(static_cast<Eigen::Index>(height), static_cast<Eigen::Index>(width));
    if (out_depth == 16) {
        for (png_uint_32 y = 0; y < height; ++y) {
            const auto* row = reinterpret_cast<const std::uint16_t*>(rows[y]);
            for (png_uint_32 x = 0; x < width; ++x)
                img(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) =
                    static_cast<float>(row[x]) * (255.0f / 65535.0f);
        }
    } else {
        for (png_uint_32 y = 0; y < height; ++y)
            for (png_uint_32 x = 0; x < width; ++x)
                img(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = static_cast<float>(rows[y][x]);
    }
    return img;
}

namespace {

void write_png(const std::string& path, png_uint_32 width, png_uint_32 height, int depth, int color,
               const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(path, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (depth == 16) png_set_swap(png);
    png_write_image(png, const_cast<png_bytep*>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::uint8_t to_u8(float v) {
    const float r = std::round(v);
    return static_cast<std::uint8_t>(r < 0.f ? 0.f : (r > 255.f ? 255.f : r));
}

} // namespace

void write_png_gray8(const std::string& path, const ImageGrid& img) {
    const auto h = static_cast<png_uint_32>(img.rows()), w = static_cast<png_uint_32>(img.cols());
    std::vector<png_byte> data(static_cast<std::size_t>(h) * w);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = data.data() + static_cast<std::size_t>(y) * w;
        for (png_uint_32 x = 0; x < w; ++x) rows[y][x] = to_u8(img(y, x));
    }
    write_png(path, w, h, 8, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_gray16(const std::string& path, const ImageGrid& img) {
    const auto h = static_cast<png_uint_32>(img.rows()), w = static_cast<png_uint_32>(img.cols());
    std::vector<std::uint16_t> data(static_cast<std::size_t>(h) * w);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = reinterpret_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * w);
        for (png_uint_32 x = 0; x < w; ++x) {
            const float v = std::round(img(y, x) * (65535.0f / 255.0f));
            data[static_cast<std::size_t>(y) * w + x] =
                static_cast<std::uint16_t>(v < 0.f ? 0.f : (v > 65535.f ? 65535.f : v));
        }
    }
    write_png(path, w, h, 16, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_rgb8(const std::string& path, const ImageGrid& r, const ImageGrid& g, const ImageGrid& b) {
    const auto h = static_cast<png_uint_32>(r.rows()), w = static_cast<png_uint_32>(r.cols());
    std::vector<png_byte> data(static_cast<std::size_t>(h) * w * 3);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = data.data() + static_cast<std::size_t>(y) * w * 3;
        for (png_uint_32 x = 0; x < w; ++x) {
            rows[y][3 * x + 0] = to_u8(r(y, x));
            rows[y][3 * x + 1] = to_u8(g(y, x));
            rows[y][3 * x + 2] = to_u8(b(y, x));
        }
    }
    write_png(path, w, h, 8, PNG_COLOR_TYPE_RGB, rows);
}

} // namespace cts

#include "adgen/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>

#include "adgen/errors.hpp"

namespace adgen {

namespace {

struct FileCloser {
    FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace

Image8 read_png(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open PNG for reading: " + path);
    FileCloser closer{f};

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode PNG: " + path);
    }
    png_init_io(png, f);
    png_read_png(png, info,
                 PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND |
                     PNG_TRANSFORM_STRIP_ALPHA,
                 nullptr);

    Image8 img;
    img.w = static_cast<int>(png_get_image_width(png, info));
    img.h = static_cast<int>(png_get_image_height(png, info));
    img.c = static_cast<int>(png_get_channels(png, info));
    if (img.c != 1 && img.c != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG channel count in " + path);
    }
    img.pix.resize(static_cast<size_t>(img.w) * img.h * img.c);
    png_bytepp rows = png_get_rows(png, info);
    const size_t rowbytes = static_cast<size_t>(img.w) * img.c;
    for (int y = 0; y < img.h; ++y)
        std::copy(rows[y], rows[y] + rowbytes, img.pix.begin() + static_cast<size_t>(y) * rowbytes);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const Image8& img) {
    if (img.c != 1 && img.c != 3) throw IoError("write_png: channels must be 1 or 3");
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open PNG for writing: " + path);
    FileCloser closer{f};

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode PNG: " + path);
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const size_t rowbytes = static_cast<size_t>(img.w) * img.c;
    for (int y = 0; y < img.h; ++y)
        png_write_row(png, const_cast<png_bytep>(img.pix.data() + static_cast<size_t>(y) * rowbytes));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

double byte_to_unit(uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

uint8_t unit_to_byte(double v) {
    v = std::min(1.0, std::max(-1.0, v));
    const double b = std::round((v + 1.0) * 127.5);
    return static_cast<uint8_t>(std::min(255.0, std::max(0.0, b)));
}

Tensor image_to_tensor(const Image8& img) {
    Tensor t({img.c, img.h, img.w});
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) t.at(ch, y, x) = byte_to_unit(img.at(y, x, ch));
    return t;
}

Image8 tensor_to_image(const Tensor& t) {
    if (t.rank() != 3) throw InputError("tensor_to_image: rank-3 required");
    Image8 img(t.dim(2), t.dim(1), t.dim(0));
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) img.at(y, x, ch) = unit_to_byte(t.at(ch, y, x));
    return img;
}

Tensor mask_to_tensor(const Image8& img) {
    if (img.c != 1) throw InputError("mask_to_tensor: expected single channel");
    Tensor m({img.h, img.w});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) m.at(y, x) = img.at(y, x, 0) >= 128 ? 1.0 : 0.0;
    return m;
}

Image8 mask_to_image(const Tensor& m) {
    if (m.rank() != 2) throw InputError("mask_to_image: rank-2 required");
    Image8 img(m.dim(1), m.dim(0), 1);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            img.at(y, x, 0) = m.at(y, x) > 0.5 ? 255 : 0;
    return img;
}

}  // namespace adgen

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

#include "lhsr/image.hpp"

namespace lhsr {

namespace {

[[noreturn]] void fail(const std::filesystem::path& p, const std::string& why) {
    throw std::runtime_error("image i/o: " + p.string() + ": " + why);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool has_ext(const std::filesystem::path& p, const char* ext) {
    auto e = p.extension().string();
    for (auto& ch : e) ch = static_cast<char>(std::tolower(ch));
    return e == ext;
}

LoadedImage load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    std::string magic;
    in >> magic;
    if (magic != "P5") fail(path, "not a binary PGM (P5)");
    auto next_int = [&]() {
        int v;
        // skip whitespace and '#' comment lines
        for (;;) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
            } else
                break;
        }
        if (!(in >> v)) fail(path, "truncated PGM header");
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) fail(path, "unsupported bit depth (maxval != 255)");
    in.get();  // single whitespace after maxval
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) fail(path, "truncated PGM pixel data");
    LoadedImage img;
    img.y = Plane(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            img.y(r, c) = buf[static_cast<std::size_t>(r) * w + c] / 255.0;
    return img;
}

void save_pgm(const std::filesystem::path& path, const Plane& y) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << "P5\n" << y.cols() << ' ' << y.rows() << "\n255\n";
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(y.rows()) * y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r)
        for (Eigen::Index c = 0; c < y.cols(); ++c)
            buf[static_cast<std::size_t>(r) * y.cols() + c] = quantize8(y(r, c));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) fail(path, "write failed");
}

LoadedImage load_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(path, "cannot open");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) fail(path, "libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "libpng decode error");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unsupported bit depth (16)");
    }
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
    LoadedImage img;
    img.y = Plane(h, w);
    const bool rgb = channels >= 3;
    if (rgb) {
        img.cb = Plane(h, w);
        img.cr = Plane(h, w);
    }
    for (png_uint_32 r = 0; r < h; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 c = 0; c < w; ++c) {
            if (rgb) {
                const auto ycc = rgb_to_ycbcr(row[c * channels] / 255.0,
                                              row[c * channels + 1] / 255.0,
                                              row[c * channels + 2] / 255.0);
                img.y(r, c) = ycc[0];
                (*img.cb)(r, c) = ycc[1];
                (*img.cr)(r, c) = ycc[2];
            } else {
                img.y(r, c) = row[c] / 255.0;
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const std::filesystem::path& path, const Plane& y, const Plane* cb,
              const Plane* cr) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) fail(path, "libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "libpng encode error");
    }
    png_init_io(png, fp.get());
    const bool color = cb && cr;
    png_set_IHDR(png, info, static_cast<png_uint_32>(y.cols()),
                 static_cast<png_uint_32>(y.rows()), 8,
                 color ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(y.cols()) * (color ? 3 : 1));
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            if (color) {
                const auto rgb = ycbcr_to_rgb(y(r, c), (*cb)(r, c), (*cr)(r, c));
                row[c * 3] = quantize8(rgb[0]);
                row[c * 3 + 1] = quantize8(rgb[1]);
                row[c * 3 + 2] = quantize8(rgb[2]);
            } else {
                row[c] = quantize8(y(r, c));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

LoadedImage load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(path, "no such file");
    if (has_ext(path, ".pgm")) return load_pgm(path);
    if (has_ext(path, ".png")) return load_png(path);
    fail(path, "unsupported format (want .png or .pgm)");
}

void save_image_gray(const std::filesystem::path& path, const Plane& y) {
    if (has_ext(path, ".pgm"))
        save_pgm(path, y);
    else if (has_ext(path, ".png"))
        save_png(path, y, nullptr, nullptr);
    else
        fail(path, "unsupported format (want .png or .pgm)");
}

void save_image_color(const std::filesystem::path& path, const Plane& y,
                      const Plane& cb, const Plane& cr) {
    if (!has_ext(path, ".png")) fail(path, "color output must be .png");
    if (cb.rows() != y.rows() || cb.cols() != y.cols() || cr.rows() != y.rows() ||
        cr.cols() != y.cols())
        fail(path, "chroma plane size mismatch");
    save_png(path, y, &cb, &cr);
}

} // namespace lhsr

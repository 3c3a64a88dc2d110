#include "segsum/image.hpp"

#include "segsum/error.hpp"

#include <png.h>

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

namespace segsum {

PosterImage::PosterImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

void PosterImage::fill_rect(int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (int yy = std::max(0, y); yy < std::min(height, y + h); ++yy) {
        for (int xx = std::max(0, x); xx < std::min(width, x + w); ++xx) {
            auto* p = at(xx, yy);
            p[0] = r;
            p[1] = g;
            p[2] = b;
        }
    }
}

PosterImage decode_png(std::span<const std::uint8_t> bytes) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) == 0) {
        throw ValidationError(std::string("invalid PNG: ") + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    if (img.width == 0 || img.height == 0) {
        png_image_free(&img);
        throw ValidationError("PNG has zero area");
    }
    PosterImage out;
    out.width = static_cast<int>(img.width);
    out.height = static_cast<int>(img.height);
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr) == 0) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw ValidationError("invalid PNG: " + msg);
    }
    return out;
}

std::vector<std::uint8_t> encode_png(const PosterImage& image) {
    if (!image.valid()) {
        throw ValidationError("cannot encode an invalid image");
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr) == 0) {
        throw RuntimeError(std::string("PNG encode failed: ") + img.message);
    }
    std::vector<std::uint8_t> out(size);
    if (png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr) == 0) {
        throw RuntimeError(std::string("PNG encode failed: ") + img.message);
    }
    out.resize(size);
    return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open image: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

PosterImage load_png(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_png(bytes);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void save_png(const PosterImage& image, const std::filesystem::path& path) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw RuntimeError("cannot write image: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImageDims png_dimensions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open image: " + path.string());
    }
    std::array<unsigned char, 24> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    static constexpr std::array<unsigned char, 8> signature{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (in.gcount() != static_cast<std::streamsize>(header.size()) ||
        !std::equal(signature.begin(), signature.end(), header.begin()) ||
        std::memcmp(header.data() + 12, "IHDR", 4) != 0) {
        throw ValidationError("not a PNG file: " + path.string());
    }
    auto be32 = [&](int off) {
        return (static_cast<int>(header[off]) << 24) | (static_cast<int>(header[off + 1]) << 16) |
               (static_cast<int>(header[off + 2]) << 8) | static_cast<int>(header[off + 3]);
    };
    return {be32(16), be32(20)};
}

} // namespace segsum

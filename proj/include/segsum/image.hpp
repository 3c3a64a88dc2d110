#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace segsum {

/// Row-major 8-bit RGB raster.
struct PosterImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    PosterImage() = default;
    /// Allocates a width x height image filled with `fill` in every channel.
    PosterImage(int width, int height, std::uint8_t fill = 255);

    [[nodiscard]] bool valid() const noexcept {
        return width >= 1 && height >= 1 &&
               pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
    }
    [[nodiscard]] std::uint8_t* at(int x, int y) noexcept {
        return pixels.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
    }
    [[nodiscard]] const std::uint8_t* at(int x, int y) const noexcept {
        return pixels.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
    }
    /// Rec. 601 luma in [0, 255].
    [[nodiscard]] double luminance(int x, int y) const noexcept {
        const auto* p = at(x, y);
        return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
    void fill_rect(int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    bool operator==(const PosterImage&) const = default;
};

struct ImageDims {
    int width = 0;
    int height = 0;
};

PosterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const PosterImage& image);
PosterImage load_png(const std::filesystem::path& path);
void save_png(const PosterImage& image, const std::filesystem::path& path);
/// Reads only the PNG header.
ImageDims png_dimensions(const std::filesystem::path& path);

} // namespace segsum

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace segsum {

struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    [[nodiscard]] long long area() const noexcept { return static_cast<long long>(w) * h; }
    [[nodiscard]] bool contains(int px, int py) const noexcept {
        return px >= x && px < x + w && py >= y && py < y + h;
    }
    bool operator==(const BBox&) const = default;
};

/// Tight box over two boxes.
BBox bbox_union(const BBox& a, const BBox& b);

/// Row-major run-length encoding of a binary bitmap covering the whole image
/// grid. counts[0] is the number of leading zero pixels (possibly 0); counts
/// then alternate ones/zeros.
struct Rle {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> counts;

    bool operator==(const Rle&) const = default;
};

Rle rle_encode(std::span<const std::uint8_t> bits, int width, int height);
std::vector<std::uint8_t> rle_decode(const Rle& rle);
Rle rle_from_bbox(const BBox& box, int width, int height);

/// Sum of counts; must equal width * height for a well-formed encoding.
std::uint64_t rle_length(const Rle& rle);
std::uint64_t rle_area(const Rle& rle);
/// Tight box around the set bits; all-zero masks yield a zero box.
BBox rle_bbox(const Rle& rle);

/// Calls fn(start_index, length) for every run of set bits.
template <typename Fn>
void for_each_set_run(const Rle& rle, Fn&& fn) {
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < rle.counts.size(); ++i) {
        if (i % 2 == 1 && rle.counts[i] > 0) {
            fn(pos, static_cast<std::uint64_t>(rle.counts[i]));
        }
        pos += rle.counts[i];
    }
}

} // namespace segsum

#include "segsum/rle.hpp"

#include "segsum/error.hpp"

#include <algorithm>
#include <limits>

namespace segsum {

BBox bbox_union(const BBox& a, const BBox& b) {
    const int x0 = std::min(a.x, b.x);
    const int y0 = std::min(a.y, b.y);
    const int x1 = std::max(a.x + a.w, b.x + b.w);
    const int y1 = std::max(a.y + a.h, b.y + b.h);
    return {x0, y0, x1 - x0, y1 - y0};
}

Rle rle_encode(std::span<const std::uint8_t> bits, int width, int height) {
    if (bits.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw ValidationError("bitmap size does not match width * height");
    }
    Rle rle{width, height, {}};
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (const auto b : bits) {
        const std::uint8_t v = b ? 1 : 0;
        if (v != current) {
            rle.counts.push_back(run);
            run = 0;
            current = v;
        }
        ++run;
    }
    rle.counts.push_back(run);
    return rle;
}

std::vector<std::uint8_t> rle_decode(const Rle& rle) {
    const std::uint64_t total = static_cast<std::uint64_t>(rle.width) * static_cast<std::uint64_t>(rle.height);
    if (rle_length(rle) != total) {
        throw ValidationError("RLE counts do not sum to width * height");
    }
    std::vector<std::uint8_t> bits;
    bits.reserve(total);
    for (std::size_t i = 0; i < rle.counts.size(); ++i) {
        bits.insert(bits.end(), rle.counts[i], static_cast<std::uint8_t>(i % 2));
    }
    return bits;
}

Rle rle_from_bbox(const BBox& box, int width, int height) {
    Rle rle{width, height, {}};
    if (box.w <= 0 || box.h <= 0) {
        rle.counts.push_back(static_cast<std::uint32_t>(width) * static_cast<std::uint32_t>(height));
        return rle;
    }
    const auto w = static_cast<std::uint32_t>(width);
    std::uint32_t leading = static_cast<std::uint32_t>(box.y) * w + static_cast<std::uint32_t>(box.x);
    rle.counts.push_back(leading);
    const auto gap = w - static_cast<std::uint32_t>(box.w);
    if (gap == 0) {
        rle.counts.push_back(static_cast<std::uint32_t>(box.w) * static_cast<std::uint32_t>(box.h));
    } else {
        for (int row = 0; row < box.h; ++row) {
            rle.counts.push_back(static_cast<std::uint32_t>(box.w));
            if (row + 1 < box.h) {
                rle.counts.push_back(gap);
            }
        }
    }
    const std::uint64_t used = rle_length(rle);
    const std::uint64_t total = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
    rle.counts.push_back(static_cast<std::uint32_t>(total - used));
    return rle;
}

std::uint64_t rle_length(const Rle& rle) {
    std::uint64_t total = 0;
    for (const auto c : rle.counts) {
        total += c;
    }
    return total;
}

std::uint64_t rle_area(const Rle& rle) {
    std::uint64_t area = 0;
    for_each_set_run(rle, [&](std::uint64_t, std::uint64_t len) { area += len; });
    return area;
}

BBox rle_bbox(const Rle& rle) {
    if (rle.width <= 0) {
        return {};
    }
    const auto w = static_cast<std::uint64_t>(rle.width);
    std::uint64_t x0 = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t y0 = x0;
    std::uint64_t x1 = 0;
    std::uint64_t y1 = 0;
    bool any = false;
    for_each_set_run(rle, [&](std::uint64_t start, std::uint64_t len) {
        any = true;
        const std::uint64_t end = start + len - 1;
        const std::uint64_t ys = start / w;
        const std::uint64_t ye = end / w;
        y0 = std::min(y0, ys);
        y1 = std::max(y1, ye);
        if (ys == ye) {
            x0 = std::min(x0, start % w);
            x1 = std::max(x1, end % w);
        } else {
            x0 = 0;
            x1 = w - 1;
        }
    });
    if (!any) {
        return {};
    }
    return {static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1 - x0 + 1), static_cast<int>(y1 - y0 + 1)};
}

} // namespace segsum

#include "segsum/segment.hpp"

#include "segsum/http_util.hpp"

#include "httplib.h"
#include "json.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace segsum {

SplitUrl split_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) {
        throw ValidationError("URL lacks a scheme: " + std::string(url));
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) {
        return {std::string(url), "/"};
    }
    return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

SegmentMask mask_from_bbox(int id, const BBox& box, int image_width, int image_height) {
    SegmentMask m;
    m.id = id;
    m.bbox = box;
    m.rle = rle_from_bbox(box, image_width, image_height);
    m.area = static_cast<std::uint64_t>(box.area());
    return m;
}

std::string check_mask(const SegmentMask& m, int width, int height) {
    if (m.rle.width != width || m.rle.height != height) {
        return "RLE grid does not match the image size";
    }
    if (rle_length(m.rle) != static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height)) {
        return "RLE counts do not cover the image grid";
    }
    if (m.bbox.x < 0 || m.bbox.y < 0 || m.bbox.w < 1 || m.bbox.h < 1 || m.bbox.x + m.bbox.w > width ||
        m.bbox.y + m.bbox.h > height) {
        return "bbox outside the image";
    }
    const auto area = rle_area(m.rle);
    if (area == 0 || area != m.area) {
        return fmt::format("area {} does not match set-bit count {}", m.area, area);
    }
    if (m.area > static_cast<std::uint64_t>(m.bbox.area())) {
        return "area exceeds bbox area";
    }
    const BBox tight = rle_bbox(m.rle);
    if (tight.x < m.bbox.x || tight.y < m.bbox.y || tight.x + tight.w > m.bbox.x + m.bbox.w ||
        tight.y + tight.h > m.bbox.y + m.bbox.h) {
        return "set bits outside bbox";
    }
    return {};
}

void validate(const SegmenterConfig& c) {
    if (!(c.min_area_frac >= 0.0 && c.min_area_frac < 0.5)) {
        throw ValidationError("min_area_frac must lie in [0, 0.5)");
    }
    if (c.grid_rows < 1 || c.grid_cols < 1) {
        throw ValidationError("grid dimensions must be >= 1");
    }
    if (c.min_gutter_px < 0) {
        throw ValidationError("min_gutter_px must be >= 0");
    }
    if (c.backend == SegmenterBackend::remote && c.remote_url.empty()) {
        throw ValidationError("remote segmentation backend needs remote_url");
    }
}

namespace {

void require_valid(const PosterImage& image) {
    if (image.width < 1 || image.height < 1) {
        throw ValidationError("image has zero area");
    }
    if (!image.valid()) {
        throw ValidationError("pixel buffer size does not match image dimensions");
    }
}

// Summed-area table of the ink bitmap for O(1) row/column sums.
class InkIntegral {
  public:
    InkIntegral(const PosterImage& image, double threshold)
        : w_(image.width), h_(image.height),
          table_(static_cast<std::size_t>(w_ + 1) * static_cast<std::size_t>(h_ + 1), 0) {
        for (int y = 0; y < h_; ++y) {
            std::int64_t row = 0;
            for (int x = 0; x < w_; ++x) {
                row += image.luminance(x, y) < threshold ? 1 : 0;
                at(x + 1, y + 1) = at(x + 1, y) + row;
            }
        }
    }

    [[nodiscard]] std::int64_t sum(int x0, int y0, int x1, int y1) const {
        return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
    }

  private:
    int w_;
    int h_;
    std::vector<std::int64_t> table_;

    std::int64_t& at(int x, int y) { return table_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_ + 1) + static_cast<std::size_t>(x)]; }
    [[nodiscard]] std::int64_t at(int x, int y) const {
        return table_[static_cast<std::size_t>(y) * static_cast<std::size_t>(w_ + 1) + static_cast<std::size_t>(x)];
    }
};

struct Interval {
    int begin;
    int end;
};

// Splits [0, n) into ink-bearing pieces separated by blank runs >= min_gap.
std::vector<Interval> pieces_between_gutters(const std::vector<std::int64_t>& profile, int min_gap) {
    std::vector<Interval> pieces;
    const int n = static_cast<int>(profile.size());
    int piece_start = 0;
    int i = 0;
    while (i < n) {
        if (profile[static_cast<std::size_t>(i)] != 0) {
            ++i;
            continue;
        }
        int j = i;
        while (j < n && profile[static_cast<std::size_t>(j)] == 0) {
            ++j;
        }
        if (j - i >= min_gap && i > piece_start) {
            pieces.push_back({piece_start, i});
            piece_start = j;
        }
        i = j;
    }
    if (piece_start < n) {
        pieces.push_back({piece_start, n});
    }
    return pieces;
}

void xy_cut(const InkIntegral& ink, BBox region, int min_gap, std::vector<BBox>& out) {
    // Trim to the ink bounding box.
    int x0 = region.x, x1 = region.x + region.w, y0 = region.y, y1 = region.y + region.h;
    while (y0 < y1 && ink.sum(x0, y0, x1, y0 + 1) == 0) ++y0;
    while (y1 > y0 && ink.sum(x0, y1 - 1, x1, y1) == 0) --y1;
    if (y0 == y1) {
        return;
    }
    while (x0 < x1 && ink.sum(x0, y0, x0 + 1, y1) == 0) ++x0;
    while (x1 > x0 && ink.sum(x1 - 1, y0, x1, y1) == 0) --x1;
    const BBox trimmed{x0, y0, x1 - x0, y1 - y0};

    std::vector<std::int64_t> rows(static_cast<std::size_t>(trimmed.h));
    for (int y = 0; y < trimmed.h; ++y) {
        rows[static_cast<std::size_t>(y)] = ink.sum(x0, y0 + y, x1, y0 + y + 1);
    }
    const auto bands = pieces_between_gutters(rows, min_gap);
    if (bands.size() > 1) {
        for (const auto& b : bands) {
            xy_cut(ink, {x0, y0 + b.begin, trimmed.w, b.end - b.begin}, min_gap, out);
        }
        return;
    }
    std::vector<std::int64_t> cols(static_cast<std::size_t>(trimmed.w));
    for (int x = 0; x < trimmed.w; ++x) {
        cols[static_cast<std::size_t>(x)] = ink.sum(x0 + x, y0, x0 + x + 1, y1);
    }
    const auto columns = pieces_between_gutters(cols, min_gap);
    if (columns.size() > 1) {
        for (const auto& c : columns) {
            xy_cut(ink, {x0 + c.begin, y0, c.end - c.begin, trimmed.h}, min_gap, out);
        }
        return;
    }
    out.push_back(trimmed);
}

} // namespace

std::vector<SegmentMask> grid_segment(const PosterImage& image, int rows, int cols) {
    require_valid(image);
    if (rows < 1 || cols < 1) {
        throw ValidationError("grid dimensions must be >= 1");
    }
    rows = std::min(rows, image.height);
    cols = std::min(cols, image.width);
    std::vector<SegmentMask> masks;
    const auto W = static_cast<long long>(image.width);
    const auto H = static_cast<long long>(image.height);
    for (int r = 0; r < rows; ++r) {
        const int y0 = static_cast<int>(r * H / rows);
        const int y1 = static_cast<int>((r + 1) * H / rows);
        for (int c = 0; c < cols; ++c) {
            const int x0 = static_cast<int>(c * W / cols);
            const int x1 = static_cast<int>((c + 1) * W / cols);
            masks.push_back(mask_from_bbox(static_cast<int>(masks.size()), {x0, y0, x1 - x0, y1 - y0},
                                           image.width, image.height));
        }
    }
    return masks;
}

std::vector<SegmentMask> gutter_segment(const PosterImage& image, double ink_threshold, int min_gutter_px) {
    require_valid(image);
    const int min_gap = min_gutter_px > 0
                            ? min_gutter_px
                            : std::max(2, static_cast<int>(std::lround(0.01 * std::max(image.width, image.height))));
    const InkIntegral ink(image, ink_threshold);
    std::vector<BBox> boxes;
    xy_cut(ink, {0, 0, image.width, image.height}, min_gap, boxes);
    if (boxes.empty()) {
        boxes.push_back({0, 0, image.width, image.height});
    }
    std::vector<SegmentMask> masks;
    masks.reserve(boxes.size());
    for (const auto& b : boxes) {
        masks.push_back(mask_from_bbox(static_cast<int>(masks.size()), b, image.width, image.height));
    }
    return masks;
}

std::vector<SegmentMask> parse_segment_response(std::string_view body, int width, int height) {
    using Kind = SegmentationError::Kind;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw SegmentationError(Kind::schema, std::string("segmentation response is not JSON: ") + e.what());
    }
    try {
        const auto& img = j.at("image");
        const int rw = img.at("width").get<int>();
        const int rh = img.at("height").get<int>();
        if (rw != width || rh != height) {
            throw SegmentationError(Kind::schema, fmt::format("response image {}x{} does not match request {}x{}",
                                                              rw, rh, width, height));
        }
        std::vector<SegmentMask> masks;
        for (const auto& jm : j.at("masks")) {
            SegmentMask m;
            m.id = static_cast<int>(masks.size());
            m.rle.width = width;
            m.rle.height = height;
            for (const auto& c : jm.at("rle")) {
                const auto v = c.get<std::int64_t>();
                if (v < 0) {
                    throw SegmentationError(Kind::schema, "negative RLE count");
                }
                m.rle.counts.push_back(static_cast<std::uint32_t>(v));
            }
            const auto& b = jm.at("bbox");
            if (!b.is_array() || b.size() != 4) {
                throw SegmentationError(Kind::schema, "bbox must be [x, y, w, h]");
            }
            m.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
            m.area = jm.at("area").get<std::uint64_t>();
            if (jm.contains("score")) {
                const double score = jm["score"].get<double>();
                if (!(score >= 0.0 && score <= 1.0)) {
                    throw SegmentationError(Kind::schema, "mask score outside [0, 1]");
                }
            }
            if (auto problem = check_mask(m, width, height); !problem.empty()) {
                throw SegmentationError(Kind::schema, fmt::format("mask {}: {}", masks.size(), problem));
            }
            if (rle_bbox(m.rle) != m.bbox) {
                throw SegmentationError(Kind::schema, fmt::format("mask {}: bbox is not tight", masks.size()));
            }
            masks.push_back(std::move(m));
        }
        return masks;
    } catch (const nlohmann::json::exception& e) {
        throw SegmentationError(Kind::schema, std::string("malformed segmentation response: ") + e.what());
    }
}

std::vector<SegmentMask> remote_segment(const PosterImage& image, const SegmenterConfig& config) {
    using Kind = SegmentationError::Kind;
    require_valid(image);
    const auto url = split_url(config.remote_url);
    httplib::Client client(url.origin);
    client.set_connection_timeout(10);
    client.set_read_timeout(config.remote_timeout_s);
    const auto png = encode_png(image);
    const std::string path = fmt::format("{}{}max_masks={}&points_per_side={}&seed={}", url.path,
                                         url.path.find('?') == std::string::npos ? "?" : "&",
                                         config.remote_max_masks, config.remote_points_per_side, config.remote_seed);
    auto res = client.Post(path, reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
    if (!res) {
        throw SegmentationError(Kind::transport, "segmentation backend unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw SegmentationError(Kind::transport, fmt::format("segmentation backend returned HTTP {}", res->status));
    }
    return parse_segment_response(res->body, image.width, image.height);
}

std::vector<SegmentMask> segment(const PosterImage& image, const SegmenterConfig& config) {
    require_valid(image);
    validate(config);
    std::vector<SegmentMask> raw;
    switch (config.backend) {
    case SegmenterBackend::grid:
        raw = grid_segment(image, config.grid_rows, config.grid_cols);
        break;
    case SegmenterBackend::gutter:
        raw = gutter_segment(image, config.ink_threshold, config.min_gutter_px);
        break;
    case SegmenterBackend::remote:
        raw = remote_segment(image, config);
        break;
    }
    const double image_area = static_cast<double>(image.width) * static_cast<double>(image.height);
    const double min_area = config.min_area_frac * image_area;
    std::vector<SegmentMask> kept;
    for (auto& m : raw) {
        if (static_cast<double>(m.area) >= min_area) {
            m.id = static_cast<int>(kept.size());
            kept.push_back(std::move(m));
        }
    }
    if (kept.empty()) {
        kept.push_back(mask_from_bbox(0, {0, 0, image.width, image.height}, image.width, image.height));
    }
    return kept;
}

PosterImage crop(const PosterImage& image, const BBox& box) {
    if (box.x < 0 || box.y < 0 || box.w < 1 || box.h < 1 || box.x + box.w > image.width ||
        box.y + box.h > image.height) {
        throw ValidationError(fmt::format("crop box ({}, {}, {}, {}) outside {}x{} image", box.x, box.y, box.w,
                                          box.h, image.width, image.height));
    }
    PosterImage out;
    out.width = box.w;
    out.height = box.h;
    out.pixels.resize(static_cast<std::size_t>(box.w) * static_cast<std::size_t>(box.h) * 3);
    const std::size_t row_bytes = static_cast<std::size_t>(box.w) * 3;
    for (int y = 0; y < box.h; ++y) {
        std::copy_n(image.at(box.x, box.y + y), row_bytes, out.at(0, y));
    }
    return out;
}

PosterImage downscale_max_width(const PosterImage& image, int max_width) {
    if (max_width < 1) {
        throw ValidationError("max_width must be >= 1");
    }
    if (image.width <= max_width) {
        return image;
    }
    const double scale = static_cast<double>(max_width) / image.width;
    const int out_h = std::max(1, static_cast<int>(std::lround(image.height * scale)));
    PosterImage out(max_width, out_h, 0);
    const double sx = static_cast<double>(image.width) / max_width;
    const double sy = static_cast<double>(image.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double ty = fy - y0;
        for (int x = 0; x < max_width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double tx = fx - x0;
            auto* dst = out.at(x, y);
            for (int ch = 0; ch < 3; ++ch) {
                const double top = image.at(x0, y0)[ch] * (1 - tx) + image.at(x1, y0)[ch] * tx;
                const double bottom = image.at(x0, y1)[ch] * (1 - tx) + image.at(x1, y1)[ch] * tx;
                dst[ch] = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bottom * ty));
            }
        }
    }
    return out;
}

} // namespace segsum

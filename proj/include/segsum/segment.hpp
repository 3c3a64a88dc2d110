#pragma once

#include "segsum/error.hpp"
#include "segsum/image.hpp"
#include "segsum/rle.hpp"

#include <string>
#include <vector>

namespace segsum {

struct SegmentMask {
    int id = 0;
    BBox bbox;
    Rle rle;
    std::uint64_t area = 0;

    bool operator==(const SegmentMask&) const = default;
};

/// Builds a mask whose bitmap is the filled box.
SegmentMask mask_from_bbox(int id, const BBox& box, int image_width, int image_height);

/// Empty string when the mask satisfies every invariant for the given image
/// size, otherwise a description of the first violation.
std::string check_mask(const SegmentMask& mask, int image_width, int image_height);

enum class SegmenterBackend { grid, gutter, remote };

struct SegmenterConfig {
    SegmenterBackend backend = SegmenterBackend::gutter;
    int grid_rows = 2;
    int grid_cols = 2;
    double min_area_frac = 0.001;
    /// gutter backend: pixels darker than this luma count as ink.
    double ink_threshold = 200.0;
    /// gutter backend: minimum blank run that separates regions; 0 picks
    /// max(2, 1% of the longer image side).
    int min_gutter_px = 0;
    std::string remote_url;
    int remote_max_masks = 64;
    int remote_points_per_side = 32;
    int remote_seed = 0;
    int remote_timeout_s = 120;
};

/// Throws ValidationError for out-of-range settings.
void validate(const SegmenterConfig& config);

class SegmentationError : public RuntimeError {
  public:
    enum class Kind { transport, schema };
    SegmentationError(Kind kind, const std::string& what) : RuntimeError(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const noexcept { return kind_; }

  private:
    Kind kind_;
};

/// Runs the configured backend, drops masks below min_area_frac of the image
/// area and renumbers survivors 0..n-1. Never returns an empty list: when
/// nothing survives a single whole-image mask is returned.
std::vector<SegmentMask> segment(const PosterImage& image, const SegmenterConfig& config);

/// Tiles the image into rows x cols cells; cell edges at floor(i * W / cols).
std::vector<SegmentMask> grid_segment(const PosterImage& image, int rows, int cols);

/// Recursive XY-cut on ink projection profiles. Each leaf is the tight ink
/// box of a region bounded by blank gutters; a blank image yields one
/// whole-image region.
std::vector<SegmentMask> gutter_segment(const PosterImage& image, double ink_threshold, int min_gutter_px = 0);

/// Parses the segmentation sidecar's JSON response and checks every mask
/// against the image size. Throws SegmentationError(schema) on any mismatch.
std::vector<SegmentMask> parse_segment_response(std::string_view body, int image_width, int image_height);

/// POSTs the image as PNG to config.remote_url and parses the response.
std::vector<SegmentMask> remote_segment(const PosterImage& image, const SegmenterConfig& config);

/// Copies the pixels under `box`. Throws ValidationError if the box leaves the image.
PosterImage crop(const PosterImage& image, const BBox& box);

/// Identity when width <= max_width; otherwise bilinear resample to
/// max_width x round(height * max_width / width).
PosterImage downscale_max_width(const PosterImage& image, int max_width);

} // namespace segsum

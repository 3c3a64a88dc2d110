#include "segsum/cluster.hpp"

#include "segsum/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace segsum {

std::vector<RegionFeature> featurize(std::span<const SegmentMask> masks, int image_width, int image_height) {
    if (image_width < 1 || image_height < 1) {
        throw ValidationError("image has zero area");
    }
    if (masks.empty()) {
        throw ValidationError("featurize needs at least one mask");
    }
    const auto W = static_cast<std::uint64_t>(image_width);
    const double image_area = static_cast<double>(image_width) * static_cast<double>(image_height);
    std::vector<RegionFeature> out;
    out.reserve(masks.size());
    for (const auto& m : masks) {
        std::uint64_t sum_x = 0;
        std::uint64_t sum_y = 0;
        std::uint64_t count = 0;
        for_each_set_run(m.rle, [&](std::uint64_t start, std::uint64_t len) {
            while (len > 0) {
                const std::uint64_t y = start / W;
                const std::uint64_t x = start % W;
                const std::uint64_t seg = std::min(len, W - x);
                sum_x += seg * x + seg * (seg - 1) / 2;
                sum_y += seg * y;
                count += seg;
                start += seg;
                len -= seg;
            }
        });
        if (count == 0) {
            throw ValidationError(fmt::format("mask {} has no set bits", m.id));
        }
        RegionFeature f;
        f.mask_id = m.id;
        f.cx = (static_cast<double>(sum_x) / static_cast<double>(count) + 0.5) / image_width;
        f.cy = (static_cast<double>(sum_y) / static_cast<double>(count) + 0.5) / image_height;
        f.nw = static_cast<double>(m.bbox.w) / image_width;
        f.nh = static_cast<double>(m.bbox.h) / image_height;
        f.weight = static_cast<double>(count) / image_area;
        out.push_back(f);
    }
    return out;
}

void validate(const KMeansConfig& c) {
    if (c.k < 1) {
        throw ValidationError("k must be >= 1");
    }
    if (c.max_iter < 1) {
        throw ValidationError("max_iter must be >= 1");
    }
    if (!(c.tol >= 0.0)) {
        throw ValidationError("tol must be nonnegative");
    }
    if (c.restarts < 1) {
        throw ValidationError("restarts must be >= 1");
    }
}

ClusterAssignment kmeans(std::span<const RegionFeature> features, const KMeansConfig& config) {
    if (features.empty()) {
        throw ValidationError("kmeans needs at least one feature");
    }
    const auto n = static_cast<Eigen::Index>(features.size());
    Points2<double> pts(n, 2);
    Weights<double> w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& f = features[static_cast<std::size_t>(i)];
        pts(i, 0) = f.cx;
        pts(i, 1) = f.cy;
        w(i) = f.weight;
    }
    const auto res = kmeans<double>(pts, w, config);
    ClusterAssignment out;
    for (Eigen::Index i = 0; i < n; ++i) {
        out.cluster_of[features[static_cast<std::size_t>(i)].mask_id] = res.labels[static_cast<std::size_t>(i)];
    }
    out.centroids = res.centroids;
    out.inertia = res.inertia;
    out.inertia_history = res.inertia_history;
    return out;
}

namespace {

void sort_reading_order(std::vector<RegionCluster>& clusters) {
    std::sort(clusters.begin(), clusters.end(), [](const RegionCluster& a, const RegionCluster& b) {
        if (a.order_key() != b.order_key()) {
            return a.order_key() < b.order_key();
        }
        return a.cluster_id < b.cluster_id;
    });
}

} // namespace

std::vector<RegionCluster> compose_clusters(std::span<const SegmentMask> masks, const std::map<int, int>& assignment,
                                            const PosterImage& image) {
    std::map<int, RegionCluster> by_id;
    for (const auto& m : masks) {
        const auto it = assignment.find(m.id);
        if (it == assignment.end()) {
            throw ValidationError(fmt::format("mask {} has no cluster assignment", m.id));
        }
        auto [slot, inserted] = by_id.try_emplace(it->second);
        auto& cluster = slot->second;
        if (inserted) {
            cluster.cluster_id = it->second;
            cluster.union_bbox = m.bbox;
        } else {
            cluster.union_bbox = bbox_union(cluster.union_bbox, m.bbox);
        }
        cluster.member_mask_ids.push_back(m.id);
    }
    std::vector<RegionCluster> out;
    out.reserve(by_id.size());
    for (auto& [id, cluster] : by_id) {
        cluster.crop = crop(image, cluster.union_bbox);
        out.push_back(std::move(cluster));
    }
    sort_reading_order(out);
    return out;
}

std::vector<RegionCluster> top_k_by_area(std::span<const SegmentMask> masks, int k, const PosterImage& image) {
    if (k < 1) {
        throw ValidationError("k must be >= 1");
    }
    std::vector<std::size_t> order(masks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (masks[a].area != masks[b].area) {
            return masks[a].area > masks[b].area;
        }
        return masks[a].id < masks[b].id;
    });
    order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
    std::vector<RegionCluster> out;
    for (const auto idx : order) {
        RegionCluster c;
        c.cluster_id = static_cast<int>(out.size());
        c.member_mask_ids = {masks[idx].id};
        c.union_bbox = masks[idx].bbox;
        c.crop = crop(image, c.union_bbox);
        out.push_back(std::move(c));
    }
    return out;
}

std::string assignment_to_csv(const std::map<int, int>& assignment) {
    std::string out = "mask_id,cluster_id\n";
    for (const auto& [mask, cluster] : assignment) {
        out += fmt::format("{},{}\n", mask, cluster);
    }
    return out;
}

} // namespace segsum

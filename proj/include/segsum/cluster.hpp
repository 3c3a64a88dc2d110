#pragma once

#include "segsum/image.hpp"
#include "segsum/segment.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace segsum {

/// Geometry of one mask, normalized by the image size.
struct RegionFeature {
    int mask_id = 0;
    double cx = 0.0;
    double cy = 0.0;
    double nw = 0.0;
    double nh = 0.0;
    double weight = 0.0;
};

/// Centroids use pixel centres, so a full-image mask sits at (0.5, 0.5).
std::vector<RegionFeature> featurize(std::span<const SegmentMask> masks, int image_width, int image_height);

enum class KMeansInit { kmeanspp_seeded, farthest_point };

struct KMeansConfig {
    int k = 8;
    std::uint64_t seed = 0;
    int max_iter = 100;
    /// Stop once the relative inertia decrease of an iteration falls below tol.
    double tol = 1e-6;
    KMeansInit init = KMeansInit::kmeanspp_seeded;
    /// Independent seeded runs; the lowest final inertia wins (earliest on ties).
    int restarts = 10;
};

void validate(const KMeansConfig& config);

template <typename Scalar>
using Points2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;
template <typename Scalar>
using Weights = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct KMeansResult {
    std::vector<int> labels;
    Points2<Scalar> centroids;
    Scalar inertia = Scalar(0);
    /// Weighted inertia after every assignment, repair and update step of the
    /// winning run.
    std::vector<Scalar> inertia_history;
    int iterations = 0;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Scalar>
Scalar weighted_inertia(const Points2<Scalar>& pts, const Weights<Scalar>& w, const Points2<Scalar>& centroids,
                        const std::vector<int>& labels) {
    Scalar total(0);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        total += w(i) * (pts.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return total;
}

template <typename Scalar>
Scalar nearest_sq(const Points2<Scalar>& pts, Eigen::Index i, const Points2<Scalar>& centroids, Eigen::Index count) {
    Scalar best = std::numeric_limits<Scalar>::max();
    for (Eigen::Index c = 0; c < count; ++c) {
        best = std::min(best, (pts.row(i) - centroids.row(c)).squaredNorm());
    }
    return best;
}

template <typename Scalar>
Points2<Scalar> init_kmeanspp(const Points2<Scalar>& pts, const Weights<Scalar>& w, int k, std::mt19937_64& rng) {
    const Eigen::Index n = pts.rows();
    Points2<Scalar> centroids(k, 2);
    auto sample = [&](const Weights<Scalar>& mass) -> Eigen::Index {
        const Scalar total = mass.sum();
        if (!(total > Scalar(0))) {
            return 0;
        }
        const Scalar target = static_cast<Scalar>(uniform01(rng)) * total;
        Scalar acc(0);
        Eigen::Index last_positive = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (mass(i) > Scalar(0)) {
                last_positive = i;
                acc += mass(i);
                if (target < acc) {
                    return i;
                }
            }
        }
        return last_positive;
    };
    centroids.row(0) = pts.row(sample(w));
    Weights<Scalar> mass(n);
    for (int c = 1; c < k; ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            mass(i) = w(i) * nearest_sq(pts, i, centroids, c);
        }
        centroids.row(c) = pts.row(sample(mass));
    }
    return centroids;
}

template <typename Scalar>
Points2<Scalar> init_farthest(const Points2<Scalar>& pts, const Weights<Scalar>& w, int k) {
    const Eigen::Index n = pts.rows();
    Points2<Scalar> centroids(k, 2);
    Eigen::Index first = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
        if (w(i) > w(first)) {
            first = i;
        }
    }
    centroids.row(0) = pts.row(first);
    for (int c = 1; c < k; ++c) {
        Eigen::Index pick = 0;
        Scalar far(-1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar d = nearest_sq(pts, i, centroids, c);
            if (d > far) {
                far = d;
                pick = i;
            }
        }
        centroids.row(c) = pts.row(pick);
    }
    return centroids;
}

template <typename Scalar>
KMeansResult<Scalar> lloyd(const Points2<Scalar>& pts, const Weights<Scalar>& w, Points2<Scalar> centroids,
                           const KMeansConfig& config) {
    const Eigen::Index n = pts.rows();
    const int k = static_cast<int>(centroids.rows());
    KMeansResult<Scalar> res;
    res.labels.assign(static_cast<std::size_t>(n), 0);

    auto assign = [&](bool keep_ties) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& label = res.labels[static_cast<std::size_t>(i)];
            int best = keep_ties ? label : 0;
            Scalar best_d = (pts.row(i) - centroids.row(best)).squaredNorm();
            for (int c = 0; c < k; ++c) {
                const Scalar d = (pts.row(i) - centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (best != label) {
                changed = true;
                label = best;
            }
        }
        return changed;
    };

    // Moves the point farthest from its centroid (in a cluster of >= 2) into
    // each empty cluster.
    auto repair = [&]() {
        std::vector<int> sizes(static_cast<std::size_t>(k), 0);
        for (const int l : res.labels) {
            ++sizes[static_cast<std::size_t>(l)];
        }
        bool repaired = false;
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<std::size_t>(c)] > 0) {
                continue;
            }
            Eigen::Index pick = -1;
            Scalar far(-1);
            for (Eigen::Index i = 0; i < n; ++i) {
                const int l = res.labels[static_cast<std::size_t>(i)];
                if (sizes[static_cast<std::size_t>(l)] < 2) {
                    continue;
                }
                const Scalar d = w(i) * (pts.row(i) - centroids.row(l)).squaredNorm();
                if (d > far) {
                    far = d;
                    pick = i;
                }
            }
            if (pick < 0) {
                break;
            }
            --sizes[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(pick)])];
            res.labels[static_cast<std::size_t>(pick)] = c;
            sizes[static_cast<std::size_t>(c)] = 1;
            centroids.row(c) = pts.row(pick);
            repaired = true;
        }
        return repaired;
    };

    auto update = [&]() {
        Points2<Scalar> sums = Points2<Scalar>::Zero(k, 2);
        Weights<Scalar> mass = Weights<Scalar>::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int l = res.labels[static_cast<std::size_t>(i)];
            sums.row(l) += w(i) * pts.row(i);
            mass(l) += w(i);
        }
        for (int c = 0; c < k; ++c) {
            if (mass(c) > Scalar(0)) {
                centroids.row(c) = sums.row(c) / mass(c);
            }
        }
    };

    auto record = [&]() {
        res.inertia_history.push_back(weighted_inertia(pts, w, centroids, res.labels));
        return res.inertia_history.back();
    };

    assign(false);
    record();
    if (repair()) {
        record();
    }
    for (int it = 0; it < config.max_iter; ++it) {
        const Scalar previous = res.inertia_history.back();
        update();
        record();
        res.iterations = it + 1;
        bool changed = assign(true);
        record();
        if (repair()) {
            changed = true;
            record();
        }
        if (!changed) {
            break;
        }
        const Scalar scale = std::max(previous, std::numeric_limits<Scalar>::min());
        if ((previous - res.inertia_history.back()) / scale < static_cast<Scalar>(config.tol)) {
            break;
        }
    }
    update();
    record();
    res.centroids = centroids;
    res.inertia = res.inertia_history.back();
    return res;
}

// Single-point transfers (Hartigan): move a point to another cluster whenever
// that lowers the weighted inertia with both centroids recomputed. Lloyd fixed
// points are not always transfer-stable; this escapes some of them. Records
// the inertia after every pass that moved something; returns whether any did.
template <typename Scalar>
bool transfer_pass(const Points2<Scalar>& pts, const Weights<Scalar>& w, KMeansResult<Scalar>& res) {
    const Eigen::Index n = pts.rows();
    const auto k = res.centroids.rows();
    Weights<Scalar> mass = Weights<Scalar>::Zero(k);
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        mass(res.labels[static_cast<std::size_t>(i)]) += w(i);
        ++sizes[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(i)])];
    }
    bool any = false;
    for (bool moved = true; moved;) {
        moved = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int from = res.labels[static_cast<std::size_t>(i)];
            if (sizes[static_cast<std::size_t>(from)] < 2 || w(i) <= Scalar(0)) {
                continue;
            }
            const Scalar wi = w(i);
            const Scalar gain = wi * mass(from) / (mass(from) - wi) * (pts.row(i) - res.centroids.row(from)).squaredNorm();
            int to = -1;
            Scalar best = gain;
            for (int c = 0; c < k; ++c) {
                if (c == from) {
                    continue;
                }
                const Scalar cost = wi * mass(c) / (mass(c) + wi) * (pts.row(i) - res.centroids.row(c)).squaredNorm();
                // Relative margin keeps rounding noise from cycling points.
                if (cost < best && best - cost > gain * Scalar(1e-12)) {
                    best = cost;
                    to = c;
                }
            }
            if (to < 0) {
                continue;
            }
            res.centroids.row(from) = (mass(from) * res.centroids.row(from) - wi * pts.row(i)) / (mass(from) - wi);
            res.centroids.row(to) = (mass(to) * res.centroids.row(to) + wi * pts.row(i)) / (mass(to) + wi);
            mass(from) -= wi;
            mass(to) += wi;
            --sizes[static_cast<std::size_t>(from)];
            ++sizes[static_cast<std::size_t>(to)];
            res.labels[static_cast<std::size_t>(i)] = to;
            moved = true;
            any = true;
        }
    }
    if (any) {
        res.inertia = weighted_inertia(pts, w, res.centroids, res.labels);
        res.inertia_history.push_back(res.inertia);
    }
    return any;
}

// Lloyd to convergence, then alternate transfer passes and Lloyd until the
// transfers stop improving.
template <typename Scalar>
KMeansResult<Scalar> lloyd_refined(const Points2<Scalar>& pts, const Weights<Scalar>& w, Points2<Scalar> init,
                                   const KMeansConfig& config) {
    auto res = lloyd(pts, w, std::move(init), config);
    for (int round = 0; round < config.max_iter && transfer_pass(pts, w, res); ++round) {
        auto next = lloyd(pts, w, res.centroids, config);
        if (!(next.inertia < res.inertia)) {
            break;
        }
        res.inertia_history.insert(res.inertia_history.end(), next.inertia_history.begin(), next.inertia_history.end());
        res.labels = std::move(next.labels);
        res.centroids = std::move(next.centroids);
        res.inertia = next.inertia;
        res.iterations += next.iterations;
    }
    return res;
}

} // namespace detail

/// Weighted Lloyd k-means over 2-D points. With n <= k every point becomes its
/// own cluster. Otherwise exactly k nonempty clusters are returned: a cluster
/// that empties is reseeded with the point farthest from its centroid. Each
/// restart's Lloyd result is polished with single-point transfers.
/// Deterministic for a fixed config.
template <typename Scalar>
KMeansResult<Scalar> kmeans(const Points2<Scalar>& points, const Weights<Scalar>& weights, const KMeansConfig& config) {
    validate(config);
    const Eigen::Index n = points.rows();
    if (n == 0) {
        return {};
    }
    if (n <= config.k) {
        KMeansResult<Scalar> res;
        res.labels.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            res.labels[static_cast<std::size_t>(i)] = static_cast<int>(i);
        }
        res.centroids = points;
        res.inertia_history.push_back(Scalar(0));
        return res;
    }

    KMeansResult<Scalar> best;
    bool have_best = false;
    for (int r = 0; r < config.restarts; ++r) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        Points2<Scalar> init = config.init == KMeansInit::kmeanspp_seeded
                                   ? detail::init_kmeanspp(points, weights, config.k, rng)
                                   : detail::init_farthest(points, weights, config.k);
        auto res = detail::lloyd_refined(points, weights, std::move(init), config);
        if (!have_best || res.inertia < best.inertia) {
            best = std::move(res);
            have_best = true;
        }
        if (config.init == KMeansInit::farthest_point) {
            break;
        }
    }
    return best;
}

struct ClusterAssignment {
    /// mask_id -> cluster_id
    std::map<int, int> cluster_of;
    Points2<double> centroids;
    double inertia = 0.0;
    std::vector<double> inertia_history;
};

/// Clusters the features' (cx, cy) weighted by area fraction.
ClusterAssignment kmeans(std::span<const RegionFeature> features, const KMeansConfig& config);

struct RegionCluster {
    int cluster_id = 0;
    std::vector<int> member_mask_ids;
    BBox union_bbox;
    PosterImage crop;

    /// (y, x) of the union box's top-left corner.
    [[nodiscard]] std::pair<int, int> order_key() const noexcept { return {union_bbox.y, union_bbox.x}; }
};

/// One cluster per nonempty group, cropped from `image`, sorted top-to-bottom
/// then left-to-right (cluster_id breaks ties).
std::vector<RegionCluster> compose_clusters(std::span<const SegmentMask> masks, const std::map<int, int>& assignment,
                                            const PosterImage& image);

/// The k largest masks (ties: smaller mask_id first) as singleton clusters, in
/// that order; cluster_id is the rank.
std::vector<RegionCluster> top_k_by_area(std::span<const SegmentMask> masks, int k, const PosterImage& image);

/// "mask_id,cluster_id" rows with a header.
std::string assignment_to_csv(const std::map<int, int>& assignment);

} // namespace segsum

#include "doctest.h"

#include "segsum/cluster.hpp"
#include "segsum/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <random>
#include <set>

using namespace segsum;

namespace {

Points2<double> points(std::initializer_list<std::array<double, 2>> xs) {
    Points2<double> p(static_cast<Eigen::Index>(xs.size()), 2);
    Eigen::Index i = 0;
    for (const auto& x : xs) {
        p(i, 0) = x[0];
        p(i, 1) = x[1];
        ++i;
    }
    return p;
}

} // namespace

TEST_CASE("featurize uses pixel-centre centroids and area weights") {
    const auto a = mask_from_bbox(0, {0, 0, 2, 2}, 4, 4);
    const auto b = mask_from_bbox(1, {0, 0, 4, 4}, 4, 4);
    const std::vector<SegmentMask> masks{a, b};
    const auto f = featurize(masks, 4, 4);
    REQUIRE(f.size() == 2);
    CHECK(f[0].cx == doctest::Approx(0.25));
    CHECK(f[0].cy == doctest::Approx(0.25));
    CHECK(f[0].weight == doctest::Approx(0.25));
    CHECK(f[0].nw == doctest::Approx(0.5));
    CHECK(f[1].cx == doctest::Approx(0.5));
    CHECK(f[1].cy == doctest::Approx(0.5));
    CHECK(f[1].weight == doctest::Approx(1.0));
    CHECK_THROWS_AS(featurize(std::span<const SegmentMask>{}, 4, 4), ValidationError);
}

TEST_CASE("featurize matches a pixel-by-pixel centroid on irregular masks") {
    std::mt19937 rng(11);
    const int w = 9;
    const int h = 7;
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(w * h), 0);
    for (auto& b : bits) {
        b = rng() % 2;
    }
    bits[0] = 1;
    SegmentMask m;
    m.rle = rle_encode(bits, w, h);
    m.bbox = rle_bbox(m.rle);
    m.area = rle_area(m.rle);
    double sx = 0.0, sy = 0.0, n = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (bits[static_cast<std::size_t>(y * w + x)]) {
                sx += x + 0.5;
                sy += y + 0.5;
                n += 1.0;
            }
        }
    }
    const std::vector<SegmentMask> masks{m};
    const auto f = featurize(masks, w, h);
    CHECK(f[0].cx == doctest::Approx(sx / n / w));
    CHECK(f[0].cy == doctest::Approx(sy / n / h));
    CHECK(f[0].weight == doctest::Approx(n / (w * h)));
}

TEST_CASE("k-means separates two obvious pairs") {
    const auto p = points({{0, 0}, {0, 0.1}, {1, 1}, {1, 0.9}});
    const Weights<double> w = Weights<double>::Ones(4);
    KMeansConfig cfg;
    cfg.k = 2;
    const auto res = kmeans(p, w, cfg);
    CHECK(res.labels[0] == res.labels[1]);
    CHECK(res.labels[2] == res.labels[3]);
    CHECK(res.labels[0] != res.labels[2]);
    // Each pair sits 0.05 from its centroid: 4 * 0.05^2.
    CHECK(res.inertia == doctest::Approx(0.01));
}

TEST_CASE("k-means with n <= k keeps every point alone") {
    const auto p = points({{0.1, 0.2}, {0.3, 0.4}});
    const Weights<double> w = Weights<double>::Ones(2);
    KMeansConfig cfg;
    cfg.k = 8;
    const auto res = kmeans(p, w, cfg);
    CHECK(res.labels == std::vector<int>{0, 1});
    CHECK(res.inertia == 0.0);
}

TEST_CASE("weighted centroids") {
    const auto p = points({{0, 0}, {1, 0}, {10, 10}});
    Weights<double> w(3);
    w << 3.0, 1.0, 1.0;
    KMeansConfig cfg;
    cfg.k = 2;
    const auto res = kmeans(p, w, cfg);
    const int c = res.labels[0];
    CHECK(res.labels[1] == c);
    CHECK(res.centroids(c, 0) == doctest::Approx(0.25));
    CHECK(res.centroids(c, 1) == doctest::Approx(0.0));
    CHECK(res.inertia == doctest::Approx(3 * 0.0625 + 0.5625));
}

TEST_CASE("k-means inertia never increases and runs are reproducible") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 5 + trial % 20;
        Points2<double> p(n, 2);
        Weights<double> w(n);
        for (int i = 0; i < n; ++i) {
            p(i, 0) = u(rng);
            p(i, 1) = u(rng);
            w(i) = 0.01 + u(rng);
        }
        for (const auto init : {KMeansInit::kmeanspp_seeded, KMeansInit::farthest_point}) {
            KMeansConfig cfg;
            cfg.k = 2 + trial % 4;
            cfg.seed = static_cast<std::uint64_t>(trial);
            cfg.init = init;
            const auto a = kmeans(p, w, cfg);
            const auto b = kmeans(p, w, cfg);
            CHECK(a.labels == b.labels);
            CHECK(a.inertia_history == b.inertia_history);
            for (std::size_t i = 1; i < a.inertia_history.size(); ++i) {
                CHECK(a.inertia_history[i] <= a.inertia_history[i - 1] + 1e-12);
            }
            std::set<int> used(a.labels.begin(), a.labels.end());
            CHECK(used.size() == static_cast<std::size_t>(std::min(cfg.k, n)));
        }
    }
}

TEST_CASE("k-means with restarts reaches the brute-force optimum on small sets") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 4 + trial % 4;
        std::vector<std::array<double, 2>> pts;
        std::vector<double> ws;
        Points2<double> p(n, 2);
        Weights<double> w(n);
        for (int i = 0; i < n; ++i) {
            pts.push_back({u(rng), u(rng)});
            ws.push_back(0.05 + u(rng));
            p(i, 0) = pts.back()[0];
            p(i, 1) = pts.back()[1];
            w(i) = ws.back();
        }
        KMeansConfig cfg;
        cfg.k = 2 + trial % 2;
        cfg.restarts = 10;
        cfg.seed = static_cast<std::uint64_t>(trial);
        CHECK(kmeans(p, w, cfg).inertia == doctest::Approx(segsum::testing::brute_kmeans_inertia(pts, ws, cfg.k)).epsilon(1e-9));
    }
}

TEST_CASE("coincident points still give k nonempty clusters") {
    const auto p = points({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
    const Weights<double> w = Weights<double>::Ones(4);
    KMeansConfig cfg;
    cfg.k = 3;
    const auto res = kmeans(p, w, cfg);
    CHECK(std::set<int>(res.labels.begin(), res.labels.end()).size() == 3);
    CHECK(res.inertia == 0.0);
}

TEST_CASE("k-means config validation") {
    KMeansConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(validate(cfg), ValidationError);
    cfg = {};
    cfg.max_iter = 0;
    CHECK_THROWS_AS(validate(cfg), ValidationError);
    cfg = {};
    cfg.restarts = 0;
    CHECK_THROWS_AS(validate(cfg), ValidationError);
}

TEST_CASE("clusters come out in reading order with union boxes") {
    PosterImage img(100, 100);
    const std::vector<SegmentMask> masks{
        mask_from_bbox(0, {60, 60, 10, 10}, 100, 100),
        mask_from_bbox(1, {0, 0, 10, 10}, 100, 100),
        mask_from_bbox(2, {20, 5, 10, 10}, 100, 100),
        mask_from_bbox(3, {50, 0, 20, 5}, 100, 100),
    };
    const std::map<int, int> assignment{{0, 0}, {1, 1}, {2, 1}, {3, 2}};
    const auto clusters = compose_clusters(masks, assignment, img);
    REQUIRE(clusters.size() == 3);
    CHECK(clusters[0].cluster_id == 1);
    CHECK(clusters[0].union_bbox == BBox{0, 0, 30, 15});
    CHECK(clusters[0].member_mask_ids == std::vector<int>{1, 2});
    CHECK(clusters[0].crop.width == 30);
    CHECK(clusters[1].cluster_id == 2);
    CHECK(clusters[2].cluster_id == 0);

    const std::map<int, int> partial{{0, 0}};
    CHECK_THROWS_AS(compose_clusters(masks, partial, img), ValidationError);
    CHECK(assignment_to_csv(assignment) == "mask_id,cluster_id\n0,0\n1,1\n2,1\n3,2\n");
}

TEST_CASE("top-k by area picks the largest masks") {
    PosterImage img(100, 100);
    const std::vector<SegmentMask> masks{
        mask_from_bbox(0, {0, 0, 10, 10}, 100, 100),
        mask_from_bbox(1, {20, 20, 30, 30}, 100, 100),
        mask_from_bbox(2, {60, 60, 10, 10}, 100, 100),
        mask_from_bbox(3, {0, 60, 20, 20}, 100, 100),
    };
    const auto top = top_k_by_area(masks, 3, img);
    REQUIRE(top.size() == 3);
    CHECK(top[0].member_mask_ids == std::vector<int>{1});
    CHECK(top[1].member_mask_ids == std::vector<int>{3});
    CHECK(top[2].member_mask_ids == std::vector<int>{0});
    CHECK(top_k_by_area(masks, 10, img).size() == 4);
}

TEST_CASE("clustering a segmented poster") {
    const auto poster = segsum::testing::synthetic_poster(4);
    const auto masks = segment(poster.image, SegmenterConfig{});
    const auto features = featurize(masks, poster.image.width, poster.image.height);
    KMeansConfig cfg;
    cfg.k = 3;
    const auto a = kmeans(std::span<const RegionFeature>(features), cfg);
    CHECK(a.cluster_of.size() == masks.size());
    const auto clusters = compose_clusters(masks, a.cluster_of, poster.image);
    CHECK(clusters.size() == std::min<std::size_t>(3, masks.size()));
    for (std::size_t i = 1; i < clusters.size(); ++i) {
        CHECK(clusters[i - 1].order_key() <= clusters[i].order_key());
    }
}

TEST_CASE("single-point transfers escape a Lloyd fixed point") {
    const std::vector<std::array<double, 2>> pts{{0.4, 1.0}, {0.95, 0.0}, {0.3, 1.0}, {0.2, 0.05}, {0.15, 0.4}};
    const std::vector<double> ws{1, 3, 1, 3, 2};
    Points2<double> p(5, 2);
    Weights<double> w(5);
    for (int i = 0; i < 5; ++i) {
        p(i, 0) = pts[static_cast<std::size_t>(i)][0];
        p(i, 1) = pts[static_cast<std::size_t>(i)][1];
        w(i) = ws[static_cast<std::size_t>(i)];
    }
    const Points2<double> init = p.topRows(2);
    KMeansConfig cfg;
    cfg.k = 2;
    const double best = segsum::testing::brute_kmeans_inertia(pts, ws, 2);
    const auto plain = detail::lloyd(p, w, init, cfg);
    const auto refined = detail::lloyd_refined(p, w, init, cfg);
    CHECK(plain.inertia > best + 0.1);
    CHECK(refined.inertia == doctest::Approx(best).epsilon(1e-12));
    for (std::size_t i = 1; i < refined.inertia_history.size(); ++i) {
        CHECK(refined.inertia_history[i] <= refined.inertia_history[i - 1] + 1e-12);
    }
}

#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include "segsum/dataset.hpp"
#include "segsum/image.hpp"
#include "segsum/modelclient.hpp"
#include "segsum/rle.hpp"

#include "json.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace segsum::testing {

namespace fs = std::filesystem;

class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("segsum_test_" + std::to_string(rd()) + "_" + std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return path_; }
    [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

  private:
    fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct SyntheticPoster {
    PosterImage image;
    std::vector<BBox> blocks;
};

// White canvas with solid dark blocks laid out in columns, separated by
// blank gutters wide enough for the gutter segmenter's default threshold.
inline SyntheticPoster synthetic_poster(std::uint32_t seed, int width = 640, int height = 480) {
    std::mt19937 rng(seed);
    SyntheticPoster out{PosterImage(width, height, 255), {}};
    const int margin = 16;
    const int gutter = 24;
    const int cols = 2 + static_cast<int>(rng() % 2);
    const int col_w = (width - 2 * margin - (cols - 1) * gutter) / cols;
    for (int c = 0; c < cols; ++c) {
        const int rows = 2 + static_cast<int>(rng() % 3);
        const int row_h = (height - 2 * margin - (rows - 1) * gutter) / rows;
        for (int r = 0; r < rows; ++r) {
            const int x = margin + c * (col_w + gutter);
            const int y = margin + r * (row_h + gutter);
            const int shrink_w = static_cast<int>(rng() % 20);
            const int shrink_h = static_cast<int>(rng() % 12);
            const BBox box{x, y, col_w - shrink_w, row_h - shrink_h};
            const auto shade = static_cast<std::uint8_t>(20 + rng() % 100);
            out.image.fill_rect(box.x, box.y, box.w, box.h, shade, static_cast<std::uint8_t>(shade / 2), 40);
            out.blocks.push_back(box);
        }
    }
    return out;
}

// Posters plus a manifest; abstracts are distinct per record and ocr_text is
// a shuffled slice of the abstract.
inline fs::path write_synthetic_corpus(const fs::path& dir, int n, std::uint32_t seed = 1) {
    fs::create_directories(dir / "posters");
    DatasetManifest m;
    static const std::vector<std::string> words{
        "graph", "neural", "attention", "poster", "model", "learning", "sparse", "robust", "training",
        "transformer", "layout", "vision", "language", "benchmark", "results", "method", "data", "loss"};
    std::mt19937 rng(seed);
    for (int i = 0; i < n; ++i) {
        const auto poster = synthetic_poster(seed * 1000 + static_cast<std::uint32_t>(i));
        const std::string name = "p" + std::to_string(i) + ".png";
        save_png(poster.image, dir / "posters" / name);
        PosterRecord r;
        r.id = "poster-" + std::to_string(i);
        r.image_ref = "posters/" + name;
        std::string abstract;
        std::string ocr;
        for (int s = 0; s < 3; ++s) {
            std::string sentence = s == 0 ? "We" : "Our";
            for (int w = 0; w < 8; ++w) {
                sentence += " " + words[rng() % words.size()];
            }
            abstract += (s ? " " : "") + sentence + ".";
            ocr += (s ? "\n" : "") + sentence;
        }
        r.abstract = abstract;
        r.conference = static_cast<Conference>(i % 3);
        r.year = 2022 + i % 3;
        r.split = i % 5 == 0 ? Split::val : Split::test;
        r.ocr_text = ocr;
        m.records.push_back(r);
    }
    const fs::path path = dir / "manifest.jsonl";
    write_manifest(m, path);
    return path;
}

// Mock script covering every prompt the pipeline sends. Local descriptions
// carry a marker derived from the crop so merges can be checked for them.
inline std::vector<MockBackend::Rule> pipeline_script() {
    return {
        {"Describe all the text, tables, figures, and equations in the image.", std::string("REGION<{image_digest8}>")},
        {"Write a single coherent conference-paper abstract*", std::string("ABSTRACT: {prompt}")},
        {"Write an abstract for an AI conference paper for the given research poster image.",
         std::string("ZERO-SHOT {image_digest8}")},
        {"Analyze the research poster image step by step.*", std::string("COT {image_digest8}")},
        {"Write an abstract for an AI conference paper for the given text extracted*", std::string("OCR-LLM {prompt}")},
    };
}

// Config JSON running every method against mock endpoints with pipeline_script().
inline nlohmann::json mock_config(const fs::path& manifest, const fs::path& output_dir) {
    nlohmann::json script = nlohmann::json::array();
    for (const auto& rule : pipeline_script()) {
        script.push_back({{"pattern", rule.pattern}, {"response", std::get<std::string>(rule.response)}});
    }
    return {
        {"manifest", manifest.string()},
        {"output_dir", output_dir.string()},
        {"seed", 7},
        {"kmeans", {{"k", 3}}},
        {"endpoints",
         {{"vision", {{"kind", "mock"}, {"model_id", "mock-vision"}, {"script", script}}},
          {"text", {{"kind", "mock"}, {"model_id", "mock-text"}, {"supports_images", false}, {"script", script}}}}},
    };
}

} // namespace segsum::testing

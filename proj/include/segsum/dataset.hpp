#pragma once

#include "segsum/text.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace segsum {

enum class Conference { ICLR, ICML, NeurIPS };
enum class Split { train, val, test };

std::string_view to_string(Conference c);
std::string_view to_string(Split s);
std::optional<Conference> parse_conference(std::string_view s);
std::optional<Split> parse_split(std::string_view s);

inline constexpr int kMinYear = 2022;
inline constexpr int kMaxYear = 2024;

/// One poster/abstract pair. `image_ref` is kept as written in the manifest;
/// relative paths resolve against the manifest's directory.
struct PosterRecord {
    std::string id;
    std::string image_ref;
    std::string abstract;
    Conference conference = Conference::ICLR;
    int year = kMinYear;
    std::optional<std::string> topic;
    Split split = Split::train;
    std::optional<std::string> ocr_text;

    bool operator==(const PosterRecord&) const = default;
};

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;

    [[nodiscard]] std::size_t total() const noexcept { return train + val + test; }
    bool operator==(const SplitCounts&) const = default;
};

struct DatasetManifest {
    std::vector<PosterRecord> records;
    SplitCounts counts;
    std::filesystem::path base_dir;

    [[nodiscard]] std::filesystem::path resolve_image(const PosterRecord& r) const;
    [[nodiscard]] const PosterRecord* find(std::string_view id) const;
};

SplitCounts count_splits(std::span<const PosterRecord> records);

/// Parses one manifest line. Throws ValidationError describing the problem.
PosterRecord parse_record(std::string_view line);
std::string serialize_record(const PosterRecord& record);

/// Reads a line-delimited JSON manifest. Blank lines are skipped. Errors name
/// the 1-based line number; duplicate ids are rejected.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct ValidationIssue {
    std::string record_id;
    std::string message;
};

/// Checks every record's image is a readable file. Structural invariants are
/// enforced at load time already.
std::vector<ValidationIssue> validate_manifest(const DatasetManifest& manifest);

enum class StatsTokenizer { words, wordpiece };

struct StatsOptions {
    StatsTokenizer tokenizer = StatsTokenizer::words;
    std::optional<std::filesystem::path> vocab_path;
    bool image_dims = false;
    bool novel_ngrams = false;
};

struct CorpusStats {
    std::size_t n_records = 0;
    double mean_summary_tokens = 0.0;
    double mean_summary_sentences = 0.0;
    SplitCounts split_sizes;
    std::optional<std::array<double, 2>> mean_image_dims;
    std::size_t images_skipped = 0;
    /// n in 1..4 -> macro-averaged percentage over records carrying OCR text.
    std::map<int, double> novel_ngram_pct;
    std::size_t novelty_records = 0;
};

CorpusStats compute_corpus_stats(const DatasetManifest& manifest, const StatsOptions& options = {});

/// Percentage of summary n-gram occurrences absent from the source n-gram set.
/// Throws ValidationError if n < 1 or the summary has fewer than n tokens.
double novel_ngram_pct(std::span<const std::string> summary_tokens,
                       std::span<const std::string> source_tokens, int n);

std::string stats_to_json(const CorpusStats& stats);
std::string stats_to_csv(const CorpusStats& stats);

} // namespace segsum

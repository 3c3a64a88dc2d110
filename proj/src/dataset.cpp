#include "segsum/dataset.hpp"

#include "segsum/error.hpp"
#include "segsum/image.hpp"

#include "json.hpp"

#include <fmt/format.h>

#include <fstream>
#include <set>
#include <unordered_set>

namespace segsum {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Conference c) {
    switch (c) {
    case Conference::ICLR: return "ICLR";
    case Conference::ICML: return "ICML";
    case Conference::NeurIPS: return "NeurIPS";
    }
    return "?";
}

std::string_view to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

std::optional<Conference> parse_conference(std::string_view s) {
    if (s == "ICLR") return Conference::ICLR;
    if (s == "ICML") return Conference::ICML;
    if (s == "NeurIPS") return Conference::NeurIPS;
    return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    return std::nullopt;
}

std::filesystem::path DatasetManifest::resolve_image(const PosterRecord& r) const {
    std::filesystem::path p(r.image_ref);
    return p.is_absolute() ? p : base_dir / p;
}

const PosterRecord* DatasetManifest::find(std::string_view id) const {
    for (const auto& r : records) {
        if (r.id == id) {
            return &r;
        }
    }
    return nullptr;
}

SplitCounts count_splits(std::span<const PosterRecord> records) {
    SplitCounts c;
    for (const auto& r : records) {
        switch (r.split) {
        case Split::train: ++c.train; break;
        case Split::val: ++c.val; break;
        case Split::test: ++c.test; break;
        }
    }
    return c;
}

namespace {

const std::set<std::string, std::less<>> kKnownFields{"id", "image", "abstract", "conference",
                                                      "year", "topic", "split", "ocr_text"};

std::string required_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) {
        throw ValidationError(fmt::format("missing field '{}'", key));
    }
    if (!j[key].is_string()) {
        throw ValidationError(fmt::format("field '{}' must be a string", key));
    }
    return j[key].get<std::string>();
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    if (!j[key].is_string()) {
        throw ValidationError(fmt::format("field '{}' must be a string", key));
    }
    return j[key].get<std::string>();
}

} // namespace

PosterRecord parse_record(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("record must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!kKnownFields.contains(key)) {
            throw ValidationError(fmt::format("unknown field '{}'", key));
        }
    }

    PosterRecord r;
    r.id = required_string(j, "id");
    if (r.id.empty()) {
        throw ValidationError("empty id");
    }
    r.image_ref = required_string(j, "image");
    if (r.image_ref.empty()) {
        throw ValidationError("empty image path");
    }
    r.abstract = required_string(j, "abstract");
    if (r.abstract.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw ValidationError("empty abstract");
    }
    const auto conference = required_string(j, "conference");
    const auto parsed_conf = parse_conference(conference);
    if (!parsed_conf) {
        throw ValidationError(fmt::format("unknown conference '{}'", conference));
    }
    r.conference = *parsed_conf;
    if (!j.contains("year") || !j["year"].is_number_integer()) {
        throw ValidationError("field 'year' must be an integer");
    }
    r.year = j["year"].get<int>();
    if (r.year < kMinYear || r.year > kMaxYear) {
        throw ValidationError(fmt::format("year {} outside [{}, {}]", r.year, kMinYear, kMaxYear));
    }
    const auto split = required_string(j, "split");
    const auto parsed_split = parse_split(split);
    if (!parsed_split) {
        throw ValidationError(fmt::format("unknown split '{}'", split));
    }
    r.split = *parsed_split;
    r.topic = optional_string(j, "topic");
    r.ocr_text = optional_string(j, "ocr_text");
    return r;
}

std::string serialize_record(const PosterRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["image"] = r.image_ref;
    j["abstract"] = r.abstract;
    j["conference"] = std::string(to_string(r.conference));
    j["year"] = r.year;
    if (r.topic) {
        j["topic"] = *r.topic;
    }
    j["split"] = std::string(to_string(r.split));
    if (r.ocr_text) {
        j["ocr_text"] = *r.ocr_text;
    }
    return j.dump();
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("manifest not found: " + path.string());
    }
    DatasetManifest manifest;
    manifest.base_dir = path.parent_path();
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        PosterRecord record;
        try {
            record = parse_record(line);
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
        if (!seen.insert(record.id).second) {
            throw ValidationError(fmt::format("{}:{}: duplicate id '{}'", path.string(), line_no, record.id));
        }
        manifest.records.push_back(std::move(record));
    }
    manifest.counts = count_splits(manifest.records);
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError("cannot write manifest: " + path.string());
    }
    for (const auto& r : manifest.records) {
        out << serialize_record(r) << '\n';
    }
}

std::vector<ValidationIssue> validate_manifest(const DatasetManifest& manifest) {
    std::vector<ValidationIssue> issues;
    for (const auto& r : manifest.records) {
        const auto image = manifest.resolve_image(r);
        std::error_code ec;
        if (!std::filesystem::is_regular_file(image, ec)) {
            issues.push_back({r.id, "image not found: " + image.string()});
        }
    }
    return issues;
}

double novel_ngram_pct(std::span<const std::string> summary_tokens,
                       std::span<const std::string> source_tokens, int n) {
    if (n < 1) {
        throw ValidationError("n-gram order must be >= 1");
    }
    const auto order = static_cast<std::size_t>(n);
    if (summary_tokens.size() < order) {
        throw ValidationError(fmt::format("summary has {} tokens, fewer than n = {}", summary_tokens.size(), n));
    }
    auto gram_at = [order](std::span<const std::string> toks, std::size_t i) {
        std::string g;
        for (std::size_t k = 0; k < order; ++k) {
            if (k > 0) {
                g.push_back('\x1f');
            }
            g += toks[i + k];
        }
        return g;
    };
    std::unordered_set<std::string> source;
    if (source_tokens.size() >= order) {
        for (std::size_t i = 0; i + order <= source_tokens.size(); ++i) {
            source.insert(gram_at(source_tokens, i));
        }
    }
    std::size_t total = 0;
    std::size_t novel = 0;
    for (std::size_t i = 0; i + order <= summary_tokens.size(); ++i) {
        ++total;
        if (!source.contains(gram_at(summary_tokens, i))) {
            ++novel;
        }
    }
    return 100.0 * static_cast<double>(novel) / static_cast<double>(total);
}

CorpusStats compute_corpus_stats(const DatasetManifest& manifest, const StatsOptions& options) {
    CorpusStats stats;
    stats.n_records = manifest.records.size();
    stats.split_sizes = count_splits(manifest.records);

    std::optional<WordPieceVocab> vocab;
    if (options.tokenizer == StatsTokenizer::wordpiece) {
        if (!options.vocab_path) {
            throw ValidationError("wordpiece tokenizer requires a vocabulary file");
        }
        vocab = WordPieceVocab::load(*options.vocab_path);
    }

    double token_sum = 0.0;
    double sentence_sum = 0.0;
    double width_sum = 0.0;
    double height_sum = 0.0;
    std::size_t images_read = 0;
    std::array<double, 5> novelty_sum{};
    std::array<std::size_t, 5> novelty_count{};

    for (const auto& r : manifest.records) {
        const auto words = tokenize(r.abstract, TokenizeMode::metric_default);
        token_sum += static_cast<double>(vocab ? vocab->tokenize(r.abstract).size() : words.size());
        sentence_sum += static_cast<double>(split_sentences(r.abstract).size());

        if (options.image_dims) {
            try {
                const auto dims = png_dimensions(manifest.resolve_image(r));
                width_sum += dims.width;
                height_sum += dims.height;
                ++images_read;
            } catch (const ValidationError& e) {
                fmt::print(stderr, "warning: record {}: {}\n", r.id, e.what());
                ++stats.images_skipped;
            }
        }

        if (options.novel_ngrams && r.ocr_text) {
            const auto source = tokenize(*r.ocr_text, TokenizeMode::metric_default);
            bool counted = false;
            for (int n = 1; n <= 4; ++n) {
                if (words.size() < static_cast<std::size_t>(n)) {
                    continue;
                }
                novelty_sum[static_cast<std::size_t>(n)] += novel_ngram_pct(words.tokens, source.tokens, n);
                ++novelty_count[static_cast<std::size_t>(n)];
                counted = true;
            }
            if (counted) {
                ++stats.novelty_records;
            }
        }
    }

    if (stats.n_records > 0) {
        stats.mean_summary_tokens = token_sum / static_cast<double>(stats.n_records);
        stats.mean_summary_sentences = sentence_sum / static_cast<double>(stats.n_records);
    }
    if (options.image_dims && images_read > 0) {
        stats.mean_image_dims = std::array<double, 2>{width_sum / static_cast<double>(images_read),
                                                      height_sum / static_cast<double>(images_read)};
    }
    if (options.novel_ngrams) {
        for (int n = 1; n <= 4; ++n) {
            const auto idx = static_cast<std::size_t>(n);
            if (novelty_count[idx] > 0) {
                stats.novel_ngram_pct[n] = novelty_sum[idx] / static_cast<double>(novelty_count[idx]);
            }
        }
    }
    return stats;
}

std::string stats_to_json(const CorpusStats& s) {
    ordered_json j;
    j["n_records"] = s.n_records;
    j["mean_summary_tokens"] = s.mean_summary_tokens;
    j["mean_summary_sentences"] = s.mean_summary_sentences;
    j["split_sizes"] = {{"train", s.split_sizes.train}, {"val", s.split_sizes.val}, {"test", s.split_sizes.test}};
    if (s.mean_image_dims) {
        j["mean_image_dims"] = {{"width", (*s.mean_image_dims)[0]}, {"height", (*s.mean_image_dims)[1]}};
        j["images_skipped"] = s.images_skipped;
    }
    if (!s.novel_ngram_pct.empty()) {
        ordered_json novel;
        for (const auto& [n, pct] : s.novel_ngram_pct) {
            novel[std::to_string(n)] = pct;
        }
        j["novel_ngram_pct"] = novel;
        j["novelty_records"] = s.novelty_records;
    }
    return j.dump(2);
}

std::string stats_to_csv(const CorpusStats& s) {
    std::string out = "name,value\n";
    out += fmt::format("n_records,{}\n", s.n_records);
    out += fmt::format("mean_summary_tokens,{:.4f}\n", s.mean_summary_tokens);
    out += fmt::format("mean_summary_sentences,{:.4f}\n", s.mean_summary_sentences);
    out += fmt::format("train_size,{}\n", s.split_sizes.train);
    out += fmt::format("val_size,{}\n", s.split_sizes.val);
    out += fmt::format("test_size,{}\n", s.split_sizes.test);
    if (s.mean_image_dims) {
        out += fmt::format("mean_image_width,{:.2f}\n", (*s.mean_image_dims)[0]);
        out += fmt::format("mean_image_height,{:.2f}\n", (*s.mean_image_dims)[1]);
        out += fmt::format("images_skipped,{}\n", s.images_skipped);
    }
    for (const auto& [n, pct] : s.novel_ngram_pct) {
        out += fmt::format("novel_{}gram_pct,{:.4f}\n", n, pct);
    }
    return out;
}

} // namespace segsum

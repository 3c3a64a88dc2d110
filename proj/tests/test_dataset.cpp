#include "doctest.h"

#include "segsum/dataset.hpp"
#include "segsum/error.hpp"
#include "support.hpp"

#include "json.hpp"

using namespace segsum;
using segsum::testing::TempDir;
using segsum::testing::write_text;

namespace {

const char* kValid =
    R"({"id":"a1","image":"img/a1.png","abstract":"We study posters.","conference":"ICLR","year":2023,"split":"test"})";

std::string with(std::string_view field_json) {
    std::string s = kValid;
    s.pop_back();
    return s + "," + std::string(field_json) + "}";
}

} // namespace

TEST_CASE("parse_record accepts a valid line") {
    const auto r = parse_record(kValid);
    CHECK(r.id == "a1");
    CHECK(r.image_ref == "img/a1.png");
    CHECK(r.conference == Conference::ICLR);
    CHECK(r.year == 2023);
    CHECK(r.split == Split::test);
    CHECK_FALSE(r.topic.has_value());
    CHECK_FALSE(r.ocr_text.has_value());

    const auto t = parse_record(with(R"("topic":"Vision","ocr_text":"OCR here")"));
    CHECK(t.topic == std::optional<std::string>("Vision"));
    CHECK(t.ocr_text == std::optional<std::string>("OCR here"));
}

TEST_CASE("parse_record rejects bad records") {
    CHECK_THROWS_AS(parse_record("{not json"), ValidationError);
    CHECK_THROWS_AS(parse_record("[1,2]"), ValidationError);
    CHECK_THROWS_AS(parse_record(with(R"("extra":1)")), ValidationError);
    CHECK_THROWS_AS(parse_record(R"({"id":"a","image":"x.png","abstract":"t","conference":"ICLR","year":2021,"split":"test"})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_record(R"({"id":"a","image":"x.png","abstract":"t","conference":"ICLR","year":2025,"split":"test"})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_record(R"({"id":"a","image":"x.png","abstract":"","conference":"ICLR","year":2022,"split":"test"})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_record(R"({"id":"a","image":"x.png","abstract":"t","conference":"CVPR","year":2022,"split":"test"})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_record(R"({"id":"a","image":"x.png","abstract":"t","conference":"ICLR","year":2022,"split":"dev"})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_record(R"({"image":"x.png","abstract":"t","conference":"ICLR","year":2022,"split":"test"})"),
                    ValidationError);
}

TEST_CASE("serialize_record round-trips") {
    PosterRecord r;
    r.id = "x\"1";
    r.image_ref = "/abs/x.png";
    r.abstract = "Line one.\nLine two é.";
    r.conference = Conference::NeurIPS;
    r.year = 2024;
    r.topic = "Theory";
    r.split = Split::val;
    r.ocr_text = "ocr";
    CHECK(parse_record(serialize_record(r)) == r);
    const auto j = nlohmann::ordered_json::parse(serialize_record(r));
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) {
        keys.push_back(k);
    }
    CHECK(keys == std::vector<std::string>{"id", "image", "abstract", "conference", "year", "topic", "split", "ocr_text"});
}

TEST_CASE("load_manifest counts splits and skips blank lines") {
    TempDir dir;
    write_text(dir / "m.jsonl",
               std::string(kValid) + "\n\n" +
                   R"({"id":"b","image":"b.png","abstract":"B.","conference":"ICML","year":2022,"split":"train"})" + "\n");
    const auto m = load_manifest(dir / "m.jsonl");
    REQUIRE(m.records.size() == 2);
    CHECK(m.counts == SplitCounts{1, 0, 1});
    CHECK(m.base_dir == dir.path());
    CHECK(m.resolve_image(m.records[1]) == dir.path() / "b.png");
    CHECK(m.find("b") == &m.records[1]);
    CHECK(m.find("zzz") == nullptr);
}

TEST_CASE("load_manifest errors name the line or duplicate id") {
    TempDir dir;
    write_text(dir / "dup.jsonl", std::string(kValid) + "\n" + kValid + "\n");
    try {
        load_manifest(dir / "dup.jsonl");
        FAIL("expected a duplicate-id error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("a1") != std::string::npos);
    }
    write_text(dir / "bad.jsonl", std::string(kValid) + "\n" + with(R"("bogus":true)") + "\n");
    try {
        load_manifest(dir / "bad.jsonl");
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    CHECK_THROWS_AS(load_manifest(dir / "absent.jsonl"), ValidationError);
}

TEST_CASE("validate_manifest reports missing images") {
    TempDir dir;
    save_png(PosterImage(4, 4), dir / "ok.png");
    write_text(dir / "m.jsonl",
               R"({"id":"ok","image":"ok.png","abstract":"A.","conference":"ICLR","year":2022,"split":"test"})"
               "\n"
               R"({"id":"gone","image":"gone.png","abstract":"A.","conference":"ICLR","year":2022,"split":"test"})"
               "\n");
    const auto issues = validate_manifest(load_manifest(dir / "m.jsonl"));
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].record_id == "gone");
    CHECK(issues[0].message.find("gone.png") != std::string::npos);
}

TEST_CASE("novel n-gram percentage") {
    const std::vector<std::string> sum{"a", "b", "c"};
    const std::vector<std::string> src{"a", "b"};
    CHECK(novel_ngram_pct(sum, src, 2) == doctest::Approx(50.0));
    CHECK(novel_ngram_pct(sum, src, 1) == doctest::Approx(100.0 / 3.0));
    CHECK(novel_ngram_pct(sum, src, 3) == doctest::Approx(100.0));
    CHECK_THROWS_AS(novel_ngram_pct(sum, src, 0), ValidationError);
    CHECK_THROWS_AS(novel_ngram_pct(sum, src, 4), ValidationError);
}

TEST_CASE("corpus stats on a hand-computed fixture") {
    TempDir dir;
    save_png(PosterImage(10, 20), dir / "r1.png");
    save_png(PosterImage(30, 40), dir / "r2.png");
    write_text(dir / "m.jsonl",
               R"({"id":"r1","image":"r1.png","abstract":"We propose a model. It works well.","conference":"ICLR","year":2022,"split":"train","ocr_text":"we propose a new model"})"
               "\n"
               R"({"id":"r2","image":"r2.png","abstract":"Short one.","conference":"ICML","year":2023,"split":"val","ocr_text":"short one"})"
               "\n"
               R"({"id":"r3","image":"r3.png","abstract":"Three words here.","conference":"NeurIPS","year":2024,"split":"test"})"
               "\n");
    const auto m = load_manifest(dir / "m.jsonl");
    StatsOptions opts;
    opts.image_dims = true;
    opts.novel_ngrams = true;
    const auto s = compute_corpus_stats(m, opts);
    CHECK(s.n_records == 3);
    CHECK(s.split_sizes == SplitCounts{1, 1, 1});
    // 7 + 2 + 3 tokens, 2 + 1 + 1 sentences.
    CHECK(s.mean_summary_tokens == doctest::Approx(4.0));
    CHECK(s.mean_summary_sentences == doctest::Approx(4.0 / 3.0));
    REQUIRE(s.mean_image_dims.has_value());
    CHECK((*s.mean_image_dims)[0] == doctest::Approx(20.0));
    CHECK((*s.mean_image_dims)[1] == doctest::Approx(30.0));
    CHECK(s.images_skipped == 1);
    // r1: 3/7, 4/6, 4/5, 4/4 novel; r2: 0/2, 0/1 and too short beyond.
    CHECK(s.novelty_records == 2);
    REQUIRE(s.novel_ngram_pct.size() == 4);
    CHECK(s.novel_ngram_pct.at(1) == doctest::Approx((300.0 / 7.0) / 2.0));
    CHECK(s.novel_ngram_pct.at(2) == doctest::Approx((400.0 / 6.0) / 2.0));
    CHECK(s.novel_ngram_pct.at(3) == doctest::Approx(80.0));
    CHECK(s.novel_ngram_pct.at(4) == doctest::Approx(100.0));

    const auto j = nlohmann::json::parse(stats_to_json(s));
    CHECK(j["split_sizes"]["val"] == 1);
    CHECK(j["novel_ngram_pct"].size() == 4);
    const auto csv = stats_to_csv(s);
    CHECK(csv.rfind("name,value\n", 0) == 0);
    CHECK(csv.find("novel_4gram_pct") != std::string::npos);
}

TEST_CASE("wordpiece stats need a vocabulary") {
    DatasetManifest m;
    StatsOptions opts;
    opts.tokenizer = StatsTokenizer::wordpiece;
    CHECK_THROWS_AS(compute_corpus_stats(m, opts), ValidationError);
}

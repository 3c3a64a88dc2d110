#include "doctest.h"

#include "segsum/cli.hpp"
#include "segsum/error.hpp"
#include "support.hpp"

#include <sstream>

using namespace segsum;
namespace fs = std::filesystem;
using segsum::testing::read_text;
using segsum::testing::TempDir;
using segsum::testing::write_text;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    Result r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

struct Workspace {
    TempDir dir;
    fs::path manifest;
    fs::path config;

    explicit Workspace(int n = 4, nlohmann::json tweak = nlohmann::json::object()) {
        manifest = segsum::testing::write_synthetic_corpus(dir / "corpus", n);
        auto cfg = segsum::testing::mock_config(manifest, dir / "out");
        cfg.merge_patch(tweak);
        config = dir / "config.json";
        write_text(config, cfg.dump(2));
    }
};

// Rewrites a run file so every summary equals the record's reference abstract.
void oracle_run(const fs::path& manifest_path, const fs::path& out, const std::string& method) {
    const auto manifest = load_manifest(manifest_path);
    std::string text;
    for (const auto& r : manifest.records) {
        nlohmann::ordered_json j;
        j["poster_id"] = r.id;
        j["method"] = method;
        j["status"] = "ok";
        j["summary"] = r.abstract;
        text += j.dump() + "\n";
    }
    write_text(out, text);
}

} // namespace

TEST_CASE("ingest reports record counts and manifest problems") {
    Workspace ws(2);
    auto r = cli({"ingest", ws.manifest.string()});
    CHECK(r.code == 0);
    CHECK(r.out == "2 records\n");

    const auto text = read_text(ws.manifest);
    const auto first = text.substr(0, text.find('\n') + 1);
    write_text(ws.dir / "corpus" / "dup.jsonl", text + first);
    r = cli({"ingest", (ws.dir / "corpus" / "dup.jsonl").string()});
    CHECK(r.code == 1);
    CHECK((r.err + r.out).find("poster-0") != std::string::npos);

    fs::remove(ws.dir / "corpus" / "posters" / "p1.png");
    r = cli({"ingest", ws.manifest.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("p1.png") != std::string::npos);

    r = cli({"ingest", (ws.dir / "absent.jsonl").string()});
    CHECK(r.code == 1);
}

TEST_CASE("usage errors exit 1") {
    CHECK(cli({}).code == 1);
    CHECK(cli({"bogus"}).code == 1);
    CHECK(cli({"--workers", "0", "ingest", "x"}).code == 1);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("stats prints corpus statistics with provenance") {
    Workspace ws(5);
    const auto r = cli({"--config", ws.config.string(), "stats", "--ngrams", "--image-dims", "--out-dir",
                        (ws.dir / "stats").string()});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.contains("provenance"));
    CHECK(j["provenance"]["seed"] == 7);
    CHECK(j["stats"].is_object());
    CHECK(r.out.find("novel") != std::string::npos);
    CHECK(fs::exists(ws.dir / "stats" / "stats.json"));
    CHECK(fs::exists(ws.dir / "stats" / "stats.csv"));
}

TEST_CASE("run writes one line per record and reruns from cache byte-identically") {
    Workspace ws(4);
    const auto cache = (ws.dir / "cache").string();
    const auto out1 = (ws.dir / "a.jsonl").string();
    const auto out2 = (ws.dir / "b.jsonl").string();
    auto r = cli({"--config", ws.config.string(), "--cache-dir", cache, "--workers", "3", "run", "--method", "seg_sum",
                  "--out", out1});
    REQUIRE(r.code == 0);
    const auto first = read_text(out1);
    CHECK(count_lines(first) == 5);
    CHECK(first.rfind("{\"provenance\":", 0) == 0);
    CHECK(first.find("\"status\":\"ok\"") != std::string::npos);
    CHECK(read_text(ws.dir / "a.timings.csv").rfind("poster_id,stage,seconds\n", 0) == 0);

    r = cli({"--config", ws.config.string(), "--cache-dir", cache, "--workers", "1", "run", "--method", "seg_sum",
             "--out", out2});
    REQUIRE(r.code == 0);
    CHECK(read_text(out2) == first);

    const auto lines = load_run_file(out1);
    REQUIRE(lines.size() == 4);
    for (const auto& l : lines) {
        CHECK(l.summary.rfind("ABSTRACT: ", 0) == 0);
        CHECK(l.summary.find("REGION<") != std::string::npos);
    }
}

TEST_CASE("run honours split and limit and defaults the output path") {
    Workspace ws(10);
    auto r = cli({"--config", ws.config.string(), "run", "--method", "ocr_raw", "--split", "val"});
    REQUIRE(r.code == 0);
    const auto lines = load_run_file(ws.dir / "out" / "run_ocr_raw.jsonl");
    CHECK(lines.size() == 2);
    r = cli({"--config", ws.config.string(), "run", "--method", "zero_shot", "--limit", "3"});
    REQUIRE(r.code == 0);
    CHECK(load_run_file(ws.dir / "out" / "run_zero_shot.jsonl").size() == 3);
    CHECK(cli({"--config", ws.config.string(), "run", "--method", "nope"}).code == 1);
}

TEST_CASE("run exits 2 when model calls fail") {
    Workspace ws(2, {{"endpoints", {{"text", {{"script", nlohmann::json::array()}}}}}});
    const auto r = cli({"--config", ws.config.string(), "run", "--method", "seg_sum"});
    CHECK(r.code == 2);
    const auto lines = load_run_file(ws.dir / "out" / "run_seg_sum.jsonl");
    REQUIRE(lines.size() == 2);
    CHECK_FALSE(lines[0].ok);
}

TEST_CASE("run without a needed endpoint is a validation error") {
    Workspace ws(2, {{"endpoints", {{"text", nullptr}}}});
    CHECK(cli({"--config", ws.config.string(), "run", "--method", "seg_sum"}).code == 1);
    CHECK(cli({"--config", ws.config.string(), "run", "--method", "zero_shot"}).code == 0);
}

TEST_CASE("eval of reference summaries scores perfectly") {
    Workspace ws(4);
    const auto run = ws.dir / "perfect.jsonl";
    oracle_run(ws.manifest, run, "ocr_raw");
    const auto r = cli({"--config", ws.config.string(), "eval", "--run", run.string(), "--out-dir",
                        (ws.dir / "report").string()});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(read_text(ws.dir / "report" / "eval.json"));
    const auto csv = read_text(ws.dir / "report" / "eval.csv");
    CHECK(csv.find("ocr_raw,100.00,100.00,100.00,100.00,100.00,") != std::string::npos);
    CHECK(csv.find("# config_digest: ") != std::string::npos);
    CHECK(r.out.find("| ocr_raw | 100.00 | 100.00 | 100.00 | 100.00 | 100.00 |") != std::string::npos);
    CHECK(j.dump().find("provenance") != std::string::npos);
}

TEST_CASE("eval tabulates several methods and OCR length bins") {
    Workspace ws(6);
    REQUIRE(cli({"--config", ws.config.string(), "run", "--method", "ocr_raw"}).code == 0);
    REQUIRE(cli({"--config", ws.config.string(), "run", "--method", "seg_sum"}).code == 0);
    const auto r = cli({"--config", ws.config.string(), "eval", "--run",
                        (ws.dir / "out" / "run_ocr_raw.jsonl").string(), "--run",
                        (ws.dir / "out" / "run_seg_sum.jsonl").string(), "--ocr-bins", "0,80,120"});
    REQUIRE(r.code == 0);
    const auto md = read_text(ws.dir / "out" / "eval.md");
    CHECK(md.find("| ocr_raw |") != std::string::npos);
    CHECK(md.find("| seg_sum |") != std::string::npos);
    CHECK(r.out.find("| ocr_raw |") != std::string::npos);
    const auto j = read_text(ws.dir / "out" / "eval.json");
    CHECK(j.find("spearman") != std::string::npos);
}

TEST_CASE("eval rejects runs naming unknown posters") {
    Workspace ws(2);
    write_text(ws.dir / "bad.jsonl", R"({"poster_id":"ghost","method":"cot","status":"ok","summary":"x"})" "\n");
    CHECK(cli({"--config", ws.config.string(), "eval", "--run", (ws.dir / "bad.jsonl").string()}).code == 1);
}

TEST_CASE("ablate-k sweeps k and is reproducible") {
    Workspace ws(3);
    const auto cache = (ws.dir / "cache").string();
    auto r = cli({"--config", ws.config.string(), "--cache-dir", cache, "ablate-k"});
    REQUIRE(r.code == 0);
    const auto csv = read_text(ws.dir / "out" / "ablate_k.csv");
    CHECK(csv.find("k,method,mean_rl,n\n") != std::string::npos);
    CHECK(csv.find("\n2,seg_sum,") != std::string::npos);
    CHECK(csv.find("\n10,seg_sum,") != std::string::npos);
    CHECK(csv.find(",3\n") != std::string::npos);

    const auto topk_path = (ws.dir / "topk.csv").string();
    r = cli({"--config", ws.config.string(), "--cache-dir", cache, "ablate-k", "--with-topk", "--k-min", "2",
             "--k-max", "4", "--out", topk_path});
    REQUIRE(r.code == 0);
    const auto topk = read_text(topk_path);
    CHECK(topk.find("\n2,seg_sum,") < topk.find("\n2,seg_sum_topk,"));
    CHECK(topk.find("\n2,seg_sum_topk,") < topk.find("\n3,seg_sum,"));

    r = cli({"--config", ws.config.string(), "--cache-dir", cache, "ablate-k", "--out",
             (ws.dir / "again.csv").string()});
    REQUIRE(r.code == 0);
    CHECK(read_text(ws.dir / "again.csv") == csv);
    CHECK(cli({"--config", ws.config.string(), "ablate-k", "--k-min", "5", "--k-max", "4"}).code == 1);
}

TEST_CASE("config parsing") {
    TempDir dir;
    const auto base = segsum::testing::mock_config(dir / "m.jsonl", dir / "out");

    SUBCASE("environment interpolation") {
        auto j = base;
        j["endpoints"]["vision"] = {{"kind", "openai"},
                                    {"model_id", "${MODEL}"},
                                    {"base_url", "http://h/$$x"},
                                    {"auth_env", "KEY_VAR"}};
        const EnvLookup env = [](const std::string& k) -> std::optional<std::string> {
            if (k == "MODEL") return std::string("m-1");
            return std::nullopt;
        };
        const auto cfg = parse_config(j, dir.path(), env);
        REQUIRE(cfg.vision);
        CHECK(cfg.vision->endpoint.model_id == "m-1");
        CHECK(cfg.vision->endpoint.base_url == "http://h/$x");
        j["endpoints"]["vision"]["model_id"] = "${MISSING}";
        CHECK_THROWS_AS(parse_config(j, dir.path(), env), ValidationError);
    }

    SUBCASE("unknown keys are rejected") {
        auto j = base;
        j["kmeans"]["kk"] = 3;
        CHECK_THROWS_AS(parse_config(j, dir.path(), process_env), ValidationError);
        j = base;
        j["extra"] = 1;
        CHECK_THROWS_AS(parse_config(j, dir.path(), process_env), ValidationError);
    }

    SUBCASE("digest ignores credentials and scheduling") {
        const auto env = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
        auto a = base;
        a["endpoints"]["vision"] = {{"kind", "openai"}, {"model_id", "m"}, {"base_url", "http://h"}, {"auth_env", "A"}};
        auto b = a;
        b["endpoints"]["vision"]["auth_env"] = "B";
        b["workers"] = 8;
        auto c = a;
        c["kmeans"]["k"] = 4;
        const auto da = config_digest(parse_config(a, dir.path(), env));
        CHECK(da == config_digest(parse_config(b, dir.path(), env)));
        CHECK(da != config_digest(parse_config(c, dir.path(), env)));
        CHECK(da.size() == 64);
    }

    SUBCASE("seed override reaches clustering") {
        auto cfg = parse_config(base, dir.path(), process_env);
        apply_seed(cfg, 99);
        CHECK(cfg.kmeans.seed == 99);
    }
}

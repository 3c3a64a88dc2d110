#include "segsum/cli.hpp"

#include "segsum/error.hpp"

#include "CLI11.hpp"
#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace segsum {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

ordered_json provenance(const AppConfig& config, const PromptLibrary& prompts, std::string_view command) {
    ordered_json p;
    p["command"] = command;
    p["config_digest"] = config_digest(config);
    p["seed"] = config.seed;
    p["kmeans_seed"] = config.kmeans.seed;
    if (config.segmenter.backend == SegmenterBackend::remote) {
        p["segmenter_seed"] = config.segmenter.remote_seed;
    }
    p["template_version"] = prompts.version();
    ordered_json ids = ordered_json::object();
    if (config.vision) {
        ids["vision"] = config.vision->endpoint.model_id;
    }
    if (config.text) {
        ids["text"] = config.text->endpoint.model_id;
    }
    p["model_ids"] = ids;
    return p;
}

std::string provenance_jsonl(const ordered_json& prov) {
    ordered_json line;
    line["provenance"] = prov;
    return line.dump();
}

std::string provenance_csv(const ordered_json& prov) {
    std::string out;
    for (const auto& [key, value] : prov.items()) {
        out += fmt::format("# {}: {}\n", key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    return out;
}

namespace {

bool needs_vision(MethodTag m) { return m != MethodTag::ocr_raw && m != MethodTag::ocr_llm; }
bool needs_text(MethodTag m) {
    return m == MethodTag::ocr_llm || m == MethodTag::seg_sum || m == MethodTag::seg_sum_topk;
}

} // namespace

RunConfig make_run_config(const AppConfig& config, MethodTag method) {
    if (needs_vision(method) && !config.vision) {
        throw ValidationError(fmt::format("method {} needs a vision endpoint (endpoints.vision)", to_string(method)));
    }
    if (needs_text(method) && !config.text) {
        throw ValidationError(fmt::format("method {} needs a text endpoint (endpoints.text)", to_string(method)));
    }
    RunConfig cfg;
    cfg.segmenter = config.segmenter;
    cfg.kmeans = config.kmeans;
    if (config.vision) {
        cfg.vision = config.vision->endpoint;
    }
    if (config.text) {
        cfg.text = config.text->endpoint;
    }
    cfg.config_digest = config_digest(config);
    return cfg;
}

std::vector<RunRecord> run_corpus(std::span<const PosterRecord> records, const DatasetManifest& manifest,
                                  MethodTag method, const RunConfig& cfg, ModelContext& ctx, int workers,
                                  const std::function<void(const RunRecord&)>& sink) {
    const std::size_t n = records.size();
    std::vector<std::optional<RunRecord>> slots(n);
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::size_t emitted = 0;
    std::exception_ptr failure;

    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                auto rec = run_method(method, records[i], manifest.resolve_image(records[i]), cfg, ctx);
                std::lock_guard lock(mutex);
                slots[i] = std::move(rec);
                while (emitted < n && slots[emitted]) {
                    if (sink) {
                        sink(*slots[emitted]);
                    }
                    ++emitted;
                }
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(n);
                return;
            }
        }
    };

    const auto count = static_cast<std::size_t>(std::max(1, workers));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(count, n); ++t) {
        pool.emplace_back(work);
    }
    work();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    std::vector<RunRecord> out;
    out.reserve(n);
    for (auto& s : slots) {
        out.push_back(std::move(*s));
    }
    return out;
}

MethodEvaluation evaluate_run(std::span<const RunSummaryLine> lines, const DatasetManifest& manifest,
                              std::span<const double> ocr_bin_edges) {
    if (lines.empty()) {
        throw ValidationError("nothing to evaluate");
    }
    MethodEvaluation ev;
    ev.method = lines.front().method;
    std::vector<std::string> cands;
    std::vector<std::string> refs;
    std::vector<const PosterRecord*> recs;
    std::set<std::string> seen;
    for (const auto& l : lines) {
        if (l.method != ev.method) {
            throw ValidationError("evaluate_run expects a single method");
        }
        const PosterRecord* rec = manifest.find(l.poster_id);
        if (rec == nullptr) {
            throw ValidationError(fmt::format("poster {} is not in the manifest", l.poster_id));
        }
        if (!seen.insert(l.poster_id).second) {
            throw ValidationError(fmt::format("poster {} appears twice for method {}", l.poster_id, to_string(l.method)));
        }
        ev.poster_ids.push_back(l.poster_id);
        ev.ok.push_back(l.ok);
        cands.push_back(l.ok ? l.summary : std::string());
        refs.push_back(rec->abstract);
        recs.push_back(rec);
    }
    ev.scores = evaluate_corpus(cands, refs);
    if (!ocr_bin_edges.empty()) {
        std::vector<OcrLengthPoint> points;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            if (recs[i]->ocr_text) {
                points.push_back({static_cast<double>(char_length(*recs[i]->ocr_text)), ev.scores.per_record[i].rl.f1});
            }
        }
        ev.ocr_length = ocr_length_analysis(points, ocr_bin_edges);
    }
    return ev;
}

namespace {

ordered_json triple_json(const ScoreTriple& t) {
    ordered_json j;
    j["p"] = t.precision;
    j["r"] = t.recall;
    j["f1"] = t.f1;
    return j;
}

ordered_json scores_json(const EvalScores& s) {
    ordered_json j;
    j["r1"] = triple_json(s.r1);
    j["r2"] = triple_json(s.r2);
    j["rl"] = triple_json(s.rl);
    j["rlsum"] = triple_json(s.rlsum);
    j["sbleu"] = s.sbleu;
    j["meteor"] = s.meteor;
    return j;
}

} // namespace

ordered_json evaluation_json(const MethodEvaluation& ev) {
    ordered_json j;
    j["method"] = to_string(ev.method);
    j["n"] = ev.poster_ids.size();
    j["n_failed"] = std::count(ev.ok.begin(), ev.ok.end(), false);
    j["corpus"] = scores_json(ev.scores.corpus);
    ordered_json records = ordered_json::array();
    for (std::size_t i = 0; i < ev.poster_ids.size(); ++i) {
        ordered_json r;
        r["poster_id"] = ev.poster_ids[i];
        r["status"] = ev.ok[i] ? "ok" : "failed";
        r["scores"] = scores_json(ev.scores.per_record[i]);
        records.push_back(std::move(r));
    }
    j["records"] = std::move(records);
    if (ev.ocr_length) {
        const auto& b = *ev.ocr_length;
        ordered_json o;
        ordered_json bins = ordered_json::array();
        for (const auto& bin : b.bins) {
            ordered_json x;
            x["lo"] = bin.lo;
            x["hi"] = std::isinf(bin.hi) ? ordered_json(nullptr) : ordered_json(bin.hi);
            x["mean_rl"] = bin.mean_rl;
            x["count"] = bin.count;
            bins.push_back(std::move(x));
        }
        o["bins"] = std::move(bins);
        o["pearson_r"] = b.pearson_r;
        o["pearson_defined"] = b.pearson_defined;
        o["spearman_r"] = b.spearman_r;
        o["spearman_defined"] = b.spearman_defined;
        j["ocr_length"] = std::move(o);
    }
    return j;
}

std::vector<AblationRow> ablate_k(std::span<const PosterRecord> records, const DatasetManifest& manifest,
                                  const AppConfig& config, ModelContext& ctx, int k_min, int k_max, bool with_topk) {
    if (k_min < 1 || k_max < k_min) {
        throw ValidationError(fmt::format("invalid k range [{}, {}]", k_min, k_max));
    }
    if (records.empty()) {
        throw ValidationError("no records selected for the sweep");
    }
    std::vector<AblationRow> rows;
    for (int k = k_min; k <= k_max; ++k) {
        AppConfig c = config;
        c.kmeans.k = k;
        std::vector<MethodTag> methods{MethodTag::seg_sum};
        if (with_topk) {
            methods.push_back(MethodTag::seg_sum_topk);
        }
        for (const auto method : methods) {
            const RunConfig cfg = make_run_config(c, method);
            const auto run = run_corpus(records, manifest, method, cfg, ctx, config.workers);
            double sum = 0.0;
            for (std::size_t i = 0; i < run.size(); ++i) {
                const std::string cand = run[i].ok() ? run[i].global->text : std::string();
                sum += rouge_l(tokenize(cand, TokenizeMode::metric_default, TokenOrigin::candidate),
                               tokenize(records[i].abstract, TokenizeMode::metric_default, TokenOrigin::reference))
                           .f1;
            }
            rows.push_back({k, method, sum / static_cast<double>(run.size()), run.size()});
        }
    }
    return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::string out = "k,method,mean_rl,n\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{:.6f},{}\n", r.k, to_string(r.method), r.mean_rl, r.n);
    }
    return out;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeError(fmt::format("cannot write {}", path.string()));
    }
    out << content;
    if (!out) {
        throw RuntimeError(fmt::format("write failed for {}", path.string()));
    }
}

std::vector<PosterRecord> select_records(const DatasetManifest& manifest, const std::string& split, std::size_t limit) {
    std::optional<Split> want;
    if (!split.empty()) {
        want = parse_split(split);
        if (!want) {
            throw ValidationError(fmt::format("unknown split \"{}\"", split));
        }
    }
    std::vector<PosterRecord> out;
    for (const auto& r : manifest.records) {
        if (want && r.split != *want) {
            continue;
        }
        out.push_back(r);
        if (limit > 0 && out.size() == limit) {
            break;
        }
    }
    return out;
}

std::vector<double> parse_edges(const std::string& text) {
    std::vector<double> edges;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            edges.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw ValidationError(fmt::format("bad bin edge \"{}\"", item));
        }
    }
    return edges;
}

struct Globals {
    std::string config_path;
    std::string cache_dir;
    int workers = 0;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

AppConfig resolve_config(const Globals& g) {
    AppConfig c = g.config_path.empty() ? AppConfig{} : load_config(g.config_path);
    if (!g.cache_dir.empty()) {
        c.cache_dir = fs::path(g.cache_dir);
    }
    if (g.workers > 0) {
        c.workers = g.workers;
    }
    if (g.seed_opt != nullptr && g.seed_opt->count() > 0) {
        apply_seed(c, g.seed);
    }
    return c;
}

fs::path require_manifest(const AppConfig& c, const std::string& flag) {
    if (!flag.empty()) {
        return flag;
    }
    if (c.manifest) {
        return *c.manifest;
    }
    throw ValidationError("no manifest given (pass --manifest or set it in the config)");
}

PromptLibrary prompts_for(const AppConfig& c) {
    return c.prompts_dir ? PromptLibrary::load(*c.prompts_dir) : PromptLibrary::builtin();
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Poster summarization: segment, cluster, summarize, evaluate."};
    app.name("segsum");
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--cache-dir", g.cache_dir, "response cache directory");
    app.add_option("--workers", g.workers, "records processed in parallel")->check(CLI::PositiveNumber);
    g.seed_opt = app.add_option("--seed", g.seed, "clustering and segmentation seed");

    std::string manifest_flag;
    auto* ingest = app.add_subcommand("ingest", "validate a manifest");
    ingest->add_option("manifest", manifest_flag, "manifest path");

    bool ngrams = false;
    bool image_dims = false;
    std::string tokenizer = "words";
    std::string vocab;
    std::string stats_out;
    auto* stats = app.add_subcommand("stats", "corpus statistics");
    stats->add_option("manifest", manifest_flag, "manifest path");
    stats->add_flag("--ngrams", ngrams, "novel n-gram percentages against ocr_text");
    stats->add_flag("--image-dims", image_dims, "mean image width and height");
    stats->add_option("--tokenizer", tokenizer, "words or wordpiece")->check(CLI::IsMember({"words", "wordpiece"}));
    stats->add_option("--vocab", vocab, "wordpiece vocabulary file");
    stats->add_option("--out-dir", stats_out, "also write stats.json and stats.csv here");

    std::string method_flag;
    std::string split;
    std::size_t limit = 0;
    std::string run_out;
    auto* run = app.add_subcommand("run", "summarize posters with one method");
    run->add_option("--manifest", manifest_flag, "manifest path");
    run->add_option("--method", method_flag, "zero_shot, cot, ocr_raw, ocr_llm, seg_sum or seg_sum_topk");
    run->add_option("--split", split, "only records of this split");
    run->add_option("--limit", limit, "only the first N selected records");
    run->add_option("--out", run_out, "run file (default <output_dir>/run_<method>.jsonl)");

    std::vector<std::string> run_files;
    std::string eval_out;
    std::string bins;
    auto* eval = app.add_subcommand("eval", "score run files against the manifest");
    eval->add_option("--run", run_files, "run file(s)")->required();
    eval->add_option("--manifest", manifest_flag, "manifest path");
    eval->add_option("--out-dir", eval_out, "report directory (default <output_dir>)");
    eval->add_option("--ocr-bins", bins, "comma-separated OCR character-length bin edges");

    int k_min = 2;
    int k_max = 10;
    bool with_topk = false;
    std::string ablate_out;
    auto* ablate = app.add_subcommand("ablate-k", "sweep the cluster count");
    ablate->add_option("--manifest", manifest_flag, "manifest path");
    ablate->add_option("--k-min", k_min, "smallest k");
    ablate->add_option("--k-max", k_max, "largest k");
    ablate->add_flag("--with-topk", with_topk, "add the no-clustering row for every k");
    ablate->add_option("--split", split, "only records of this split");
    ablate->add_option("--limit", limit, "only the first N selected records");
    ablate->add_option("--out", ablate_out, "CSV path (default <output_dir>/ablate_k.csv)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        AppConfig config = resolve_config(g);
        validate(config);
        const PromptLibrary prompts = prompts_for(config);

        if (ingest->parsed()) {
            const auto manifest = load_manifest(require_manifest(config, manifest_flag));
            const auto issues = validate_manifest(manifest);
            for (const auto& issue : issues) {
                err << fmt::format("{}: {}\n", issue.record_id, issue.message);
            }
            if (!issues.empty()) {
                return 1;
            }
            out << fmt::format("{} records\n", manifest.records.size());
            return 0;
        }

        if (stats->parsed()) {
            const auto manifest = load_manifest(require_manifest(config, manifest_flag));
            StatsOptions opts;
            opts.tokenizer = tokenizer == "wordpiece" ? StatsTokenizer::wordpiece : StatsTokenizer::words;
            if (!vocab.empty()) {
                opts.vocab_path = fs::path(vocab);
            }
            opts.image_dims = image_dims;
            opts.novel_ngrams = ngrams;
            const auto s = compute_corpus_stats(manifest, opts);
            const auto prov = provenance(config, prompts, "stats");
            ordered_json doc;
            doc["provenance"] = prov;
            doc["stats"] = ordered_json::parse(stats_to_json(s));
            out << doc.dump(2) << "\n";
            if (!stats_out.empty()) {
                write_file(fs::path(stats_out) / "stats.json", doc.dump(2) + "\n");
                write_file(fs::path(stats_out) / "stats.csv", provenance_csv(prov) + stats_to_csv(s));
            }
            return 0;
        }

        if (run->parsed()) {
            if (!method_flag.empty()) {
                const auto m = parse_method(method_flag);
                if (!m) {
                    throw ValidationError(fmt::format("unknown method \"{}\"", method_flag));
                }
                config.method = *m;
            }
            const auto manifest = load_manifest(require_manifest(config, manifest_flag));
            const auto records = select_records(manifest, split, limit);
            const RunConfig cfg = make_run_config(config, config.method);
            ModelClient client;
            ModelContext ctx{client, prompts, config.decode, config.cache_dir};

            const fs::path path = run_out.empty()
                                      ? config.output_dir / fmt::format("run_{}.jsonl", to_string(config.method))
                                      : fs::path(run_out);
            auto prov = provenance(config, prompts, "run");
            prov["method"] = to_string(config.method);
            write_file(path, provenance_jsonl(prov) + "\n");
            fs::path timings_path = path;
            timings_path.replace_extension(".timings.csv");
            write_file(timings_path, "poster_id,stage,seconds\n");

            std::ofstream run_file(path, std::ios::binary | std::ios::app);
            std::ofstream timing_file(timings_path, std::ios::binary | std::ios::app);
            std::size_t failed = 0;
            run_corpus(records, manifest, config.method, cfg, ctx, config.workers, [&](const RunRecord& r) {
                run_file << run_record_to_json(r, false) << "\n" << std::flush;
                for (const auto& t : r.timings) {
                    timing_file << fmt::format("{},{},{:.6f}\n", r.poster_id, t.stage, t.seconds);
                }
                timing_file.flush();
                if (!r.ok()) {
                    ++failed;
                    err << fmt::format("{}: failed at {}: {}\n", r.poster_id, r.failed_stage, r.error);
                }
            });
            out << fmt::format("{} records, {} failed -> {}\n", records.size(), failed, path.string());
            return failed == 0 ? 0 : 2;
        }

        if (eval->parsed()) {
            const auto manifest = load_manifest(require_manifest(config, manifest_flag));
            const auto edges = bins.empty() ? std::vector<double>{} : parse_edges(bins);
            std::vector<MethodTag> order;
            std::map<MethodTag, std::vector<RunSummaryLine>> by_method;
            std::set<std::string> digests;
            for (const auto& f : run_files) {
                for (auto& line : load_run_file(f)) {
                    if (!by_method.count(line.method)) {
                        order.push_back(line.method);
                    }
                    digests.insert(line.config_digest);
                    by_method[line.method].push_back(std::move(line));
                }
            }
            if (order.empty()) {
                throw ValidationError("the run files contain no records");
            }
            auto prov = provenance(config, prompts, "eval");
            prov["run_config_digests"] = digests;
            ordered_json report;
            report["provenance"] = prov;
            report["methods"] = ordered_json::array();
            std::string csv = provenance_csv(prov) + csv_header() + "\n";
            std::vector<std::pair<std::string, EvalScores>> rows;
            for (const auto m : order) {
                const auto ev = evaluate_run(by_method[m], manifest, edges);
                report["methods"].push_back(evaluation_json(ev));
                csv += csv_row(to_string(m), ev.scores.corpus) + "\n";
                rows.emplace_back(std::string(to_string(m)), ev.scores.corpus);
            }
            const std::string md = markdown_table(rows);
            const fs::path dir = eval_out.empty() ? config.output_dir : fs::path(eval_out);
            write_file(dir / "eval.json", report.dump(2) + "\n");
            write_file(dir / "eval.csv", csv);
            write_file(dir / "eval.md", "<!-- " + prov.dump() + " -->\n" + md);
            out << md;
            return 0;
        }

        if (ablate->parsed()) {
            const auto manifest = load_manifest(require_manifest(config, manifest_flag));
            const auto records = select_records(manifest, split, limit);
            ModelClient client;
            ModelContext ctx{client, prompts, config.decode, config.cache_dir};
            const auto rows = ablate_k(records, manifest, config, ctx, k_min, k_max, with_topk);
            auto prov = provenance(config, prompts, "ablate-k");
            prov["k_range"] = fmt::format("{}..{}", k_min, k_max);
            const std::string csv = provenance_csv(prov) + ablation_csv(rows);
            const fs::path path = ablate_out.empty() ? config.output_dir / "ablate_k.csv" : fs::path(ablate_out);
            write_file(path, csv);
            out << ablation_csv(rows);
            return 0;
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run_cli(args, std::cout, std::cerr);
}

} // namespace segsum

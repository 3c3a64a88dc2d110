#include "segsum/summarize.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace segsum {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(MethodTag m) {
    switch (m) {
    case MethodTag::zero_shot: return "zero_shot";
    case MethodTag::cot: return "cot";
    case MethodTag::ocr_raw: return "ocr_raw";
    case MethodTag::ocr_llm: return "ocr_llm";
    case MethodTag::seg_sum: return "seg_sum";
    case MethodTag::seg_sum_topk: return "seg_sum_topk";
    }
    return "?";
}

std::optional<MethodTag> parse_method(std::string_view s) {
    for (auto m : {MethodTag::zero_shot, MethodTag::cot, MethodTag::ocr_raw, MethodTag::ocr_llm, MethodTag::seg_sum,
                   MethodTag::seg_sum_topk}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    return std::nullopt;
}

namespace {

class StageClock {
  public:
    StageClock(RunRecord& record, std::string stage)
        : record_(record), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~StageClock() {
        const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start_;
        record_.timings.push_back({stage_, d.count()});
    }

  private:
    RunRecord& record_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

Completion call_model(const Endpoint& endpoint, const CompletionRequest& request, ModelContext& ctx) {
    if (ctx.cache_dir) {
        return ctx.client.cached_complete(endpoint, request, *ctx.cache_dir).completion;
    }
    return ctx.client.complete(endpoint, request);
}

CompletionRequest single_turn(std::string text, std::optional<std::vector<std::uint8_t>> image, const DecodeParams& d) {
    CompletionRequest req;
    req.turns.push_back({Role::user, std::move(text), std::move(image)});
    req.decode = d;
    return req;
}

void note_params(RunRecord& record, const Usage& usage) {
    for (const auto& p : usage.transmitted_params) {
        if (std::find(record.transmitted_params.begin(), record.transmitted_params.end(), p) ==
            record.transmitted_params.end()) {
            record.transmitted_params.push_back(p);
        }
    }
    for (const auto& p : usage.ignored_params) {
        if (std::find(record.ignored_params.begin(), record.ignored_params.end(), p) == record.ignored_params.end()) {
            record.ignored_params.push_back(p);
        }
    }
}

std::string require_text(std::string text, std::string_view what) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw RuntimeError(fmt::format("{} returned empty text", what));
    }
    return text;
}

// Runs `body` and converts any exception into a failed record for `stage`.
template <typename Fn>
void guarded(RunRecord& record, const std::string& stage, Fn&& body) {
    try {
        body();
    } catch (const StageError& e) {
        record.failed_stage = e.stage();
        record.error = e.what();
        record.global.reset();
        throw;
    } catch (const std::exception& e) {
        record.failed_stage = stage;
        record.error = e.what();
        record.global.reset();
        throw StageError(stage, e.what());
    }
}

RunRecord single_call_run(MethodTag method, const std::string& prompt, const PosterRecord& record,
                          const PosterImage& image, const Endpoint& vision, ModelContext& ctx) {
    RunRecord out;
    out.poster_id = record.id;
    out.method = method;
    try {
        guarded(out, "generate", [&] {
            StageClock clock(out, "generate");
            const auto completion = call_model(vision, single_turn(prompt, attachment_for(vision, image), ctx.decode), ctx);
            note_params(out, completion.usage);
            out.global = GlobalSummary{require_text(completion.text, "vision model"), method, {vision.model_id}};
        });
    } catch (const StageError&) {
    }
    return out;
}

RunRecord hierarchical_run(MethodTag method, const PosterRecord& record, const PosterImage& image, const RunConfig& cfg,
                           ModelContext& ctx) {
    RunRecord out;
    out.poster_id = record.id;
    out.method = method;
    out.config_digest = cfg.config_digest;
    try {
        std::vector<SegmentMask> masks;
        guarded(out, "segment", [&] {
            StageClock clock(out, "segment");
            masks = segment(image, cfg.segmenter);
        });
        out.n_masks = masks.size();

        std::vector<RegionCluster> clusters;
        guarded(out, "cluster", [&] {
            StageClock clock(out, "cluster");
            if (method == MethodTag::seg_sum) {
                const auto features = featurize(masks, image.width, image.height);
                const auto assignment = kmeans(features, cfg.kmeans);
                clusters = compose_clusters(masks, assignment.cluster_of, image);
            } else {
                clusters = top_k_by_area(masks, cfg.kmeans.k, image);
                std::stable_sort(clusters.begin(), clusters.end(), [](const RegionCluster& a, const RegionCluster& b) {
                    return a.order_key() < b.order_key();
                });
            }
        });
        out.n_clusters = clusters.size();

        guarded(out, "local", [&] {
            StageClock clock(out, "local");
            out.locals = local_summaries(clusters, cfg.vision, ctx);
        });

        guarded(out, "merge", [&] {
            StageClock clock(out, "merge");
            auto merged = global_merge(out.locals, cfg.text, ctx);
            merged.method = method;
            merged.model_ids = {cfg.vision.model_id, cfg.text.model_id};
            out.global = std::move(merged);
        });
    } catch (const StageError&) {
    }
    return out;
}

} // namespace

std::vector<std::uint8_t> attachment_for(const Endpoint& endpoint, const PosterImage& image) {
    if (endpoint.size_limited) {
        return encode_png(downscale_max_width(image, kSizeLimitedMaxWidth));
    }
    return encode_png(image);
}

std::vector<LocalSummary> local_summaries(std::span<const RegionCluster> clusters, const Endpoint& vision,
                                          ModelContext& ctx) {
    if (clusters.empty()) {
        throw ValidationError("local_summaries needs at least one cluster");
    }
    std::vector<LocalSummary> out(clusters.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    int failed_cluster = -1;
    std::size_t failed_index = clusters.size();

    auto worker = [&] {
        for (std::size_t i = next++; i < clusters.size(); i = next++) {
            const auto& c = clusters[i];
            try {
                const auto completion =
                    call_model(vision, single_turn(ctx.prompts.local, attachment_for(vision, c.crop), ctx.decode), ctx);
                out[i] = {c.cluster_id, require_text(completion.text, "vision model"), vision.model_id};
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < failed_index) {
                    failed_index = i;
                    failed_cluster = c.cluster_id;
                    first_error = std::current_exception();
                }
            }
        }
    };

    const auto workers = std::min<std::size_t>(clusters.size(), static_cast<std::size_t>(std::max(1, vision.max_concurrency)));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    if (first_error) {
        try {
            std::rethrow_exception(first_error);
        } catch (const std::exception& e) {
            throw StageError("local", fmt::format("local summary for cluster {} failed: {}", failed_cluster, e.what()));
        }
    }
    return out;
}

GlobalSummary global_merge(std::span<const LocalSummary> locals, const Endpoint& text, ModelContext& ctx) {
    if (locals.empty()) {
        throw ValidationError("global_merge needs at least one local summary");
    }
    const auto completion = call_model(text, single_turn(ctx.prompts.render_merge(locals), std::nullopt, ctx.decode), ctx);
    return {require_text(completion.text, "text model"), MethodTag::seg_sum, {text.model_id}};
}

RunRecord run_segment_and_summarize(const PosterRecord& record, const PosterImage& image, const RunConfig& cfg,
                                    ModelContext& ctx) {
    return hierarchical_run(MethodTag::seg_sum, record, image, cfg, ctx);
}

RunRecord run_segment_and_summarize_topk(const PosterRecord& record, const PosterImage& image, const RunConfig& cfg,
                                         ModelContext& ctx) {
    return hierarchical_run(MethodTag::seg_sum_topk, record, image, cfg, ctx);
}

RunRecord run_zero_shot(const PosterRecord& record, const PosterImage& image, const Endpoint& vision,
                        ModelContext& ctx) {
    return single_call_run(MethodTag::zero_shot, ctx.prompts.zero_shot, record, image, vision, ctx);
}

RunRecord run_cot(const PosterRecord& record, const PosterImage& image, const Endpoint& vision, ModelContext& ctx) {
    return single_call_run(MethodTag::cot, ctx.prompts.cot, record, image, vision, ctx);
}

RunRecord run_ocr_baseline(const PosterRecord& record, const std::optional<std::string>& ocr_text, OcrMode mode,
                           const Endpoint& text, ModelContext& ctx) {
    RunRecord out;
    out.poster_id = record.id;
    out.method = mode == OcrMode::raw ? MethodTag::ocr_raw : MethodTag::ocr_llm;
    try {
        guarded(out, "ocr", [&] {
            if (!ocr_text || ocr_text->find_first_not_of(" \t\r\n") == std::string::npos) {
                throw ValidationError(fmt::format("record {} has no OCR text", record.id));
            }
        });
        if (mode == OcrMode::raw) {
            out.global = GlobalSummary{*ocr_text, MethodTag::ocr_raw, {}};
            return out;
        }
        guarded(out, "generate", [&] {
            StageClock clock(out, "generate");
            const auto completion =
                call_model(text, single_turn(ctx.prompts.render_ocr(*ocr_text), std::nullopt, ctx.decode), ctx);
            note_params(out, completion.usage);
            out.global = GlobalSummary{require_text(completion.text, "text model"), MethodTag::ocr_llm, {text.model_id}};
        });
    } catch (const StageError&) {
    }
    return out;
}

RunRecord run_method(MethodTag method, const PosterRecord& record, const std::filesystem::path& image_path,
                     const RunConfig& cfg, ModelContext& ctx) {
    RunRecord out;
    if (method == MethodTag::ocr_raw || method == MethodTag::ocr_llm) {
        out = run_ocr_baseline(record, record.ocr_text, method == MethodTag::ocr_raw ? OcrMode::raw : OcrMode::llm,
                               cfg.text, ctx);
    } else {
        PosterImage image;
        std::vector<StageTiming> load_timing;
        try {
            const auto start = std::chrono::steady_clock::now();
            image = load_png(image_path);
            load_timing.push_back({"load", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
        } catch (const std::exception& e) {
            out.poster_id = record.id;
            out.method = method;
            out.failed_stage = "load";
            out.error = e.what();
            out.config_digest = cfg.config_digest;
            return out;
        }
        switch (method) {
        case MethodTag::zero_shot: out = run_zero_shot(record, image, cfg.vision, ctx); break;
        case MethodTag::cot: out = run_cot(record, image, cfg.vision, ctx); break;
        case MethodTag::seg_sum: out = run_segment_and_summarize(record, image, cfg, ctx); break;
        default: out = run_segment_and_summarize_topk(record, image, cfg, ctx); break;
        }
        out.timings.insert(out.timings.begin(), load_timing.begin(), load_timing.end());
    }
    out.config_digest = cfg.config_digest;
    return out;
}

std::string run_record_to_json(const RunRecord& r, bool include_timings) {
    ordered_json j;
    j["poster_id"] = r.poster_id;
    j["method"] = std::string(to_string(r.method));
    j["status"] = r.ok() ? "ok" : "failed";
    j["summary"] = r.ok() ? r.global->text : std::string();
    if (include_timings) {
        ordered_json timings = ordered_json::object();
        for (const auto& t : r.timings) {
            timings[t.stage] = t.seconds;
        }
        j["stage_timings"] = std::move(timings);
    }
    j["config_digest"] = r.config_digest;
    if (r.method == MethodTag::seg_sum || r.method == MethodTag::seg_sum_topk) {
        j["n_masks"] = r.n_masks;
        j["n_clusters"] = r.n_clusters;
        ordered_json locals = ordered_json::array();
        for (const auto& l : r.locals) {
            locals.push_back({{"cluster_id", l.cluster_id}, {"text", l.text}, {"model_id", l.model_id}});
        }
        j["local_summaries"] = std::move(locals);
    }
    j["model_ids"] = r.ok() ? r.global->model_ids : std::vector<std::string>{};
    j["decode_transmitted"] = r.transmitted_params;
    j["decode_ignored"] = r.ignored_params;
    if (!r.ok()) {
        j["failed_stage"] = r.failed_stage;
        j["error"] = r.error;
    }
    return j.dump();
}

std::vector<RunSummaryLine> load_run_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("run file not found: " + path.string());
    }
    std::vector<RunSummaryLine> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.contains("provenance")) {
                continue;
            }
            RunSummaryLine r;
            r.poster_id = j.at("poster_id").get<std::string>();
            const auto method = parse_method(j.at("method").get<std::string>());
            if (!method) {
                throw ValidationError("unknown method");
            }
            r.method = *method;
            r.ok = j.at("status").get<std::string>() == "ok";
            r.summary = j.at("summary").get<std::string>();
            r.config_digest = j.value("config_digest", "");
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw ValidationError(fmt::format("{}:{}: malformed run record: {}", path.string(), line_no, e.what()));
        }
    }
    return out;
}

} // namespace segsum

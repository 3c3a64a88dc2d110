#pragma once

#include "segsum/cluster.hpp"
#include "segsum/dataset.hpp"
#include "segsum/modelclient.hpp"
#include "segsum/prompts.hpp"
#include "segsum/segment.hpp"
#include "segsum/text.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace segsum {

enum class MethodTag { zero_shot, cot, ocr_raw, ocr_llm, seg_sum, seg_sum_topk };

std::string_view to_string(MethodTag m);
std::optional<MethodTag> parse_method(std::string_view s);

struct LocalSummary {
    int cluster_id = 0;
    std::string text;
    std::string model_id;
};

struct GlobalSummary {
    std::string text;
    MethodTag method = MethodTag::seg_sum;
    std::vector<std::string> model_ids;

    [[nodiscard]] TokenSeq tokens() const { return tokenize(text); }
};

/// Everything a model-backed stage needs besides its inputs.
struct ModelContext {
    ModelClient& client;
    const PromptLibrary& prompts = PromptLibrary::builtin();
    DecodeParams decode;
    /// Responses are cached here when set.
    std::optional<std::filesystem::path> cache_dir;
};

/// A stage failure; `stage` is one of load, segment, cluster, local, merge,
/// generate, ocr.
class StageError : public RuntimeError {
  public:
    StageError(std::string stage, const std::string& what) : RuntimeError(what), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

  private:
    std::string stage_;
};

/// PNG bytes for `image` as sent to `endpoint`: downscaled to 2048 px wide
/// first when the endpoint is size-limited.
std::vector<std::uint8_t> attachment_for(const Endpoint& endpoint, const PosterImage& image);

/// One vision call per cluster (local template + crop), results in input
/// order. Calls may overlap up to the endpoint's concurrency bound. A failing
/// cluster fails the whole step with its cluster_id in the message.
std::vector<LocalSummary> local_summaries(std::span<const RegionCluster> clusters, const Endpoint& vision,
                                          ModelContext& ctx);

/// One text call over the rendered merge template.
GlobalSummary global_merge(std::span<const LocalSummary> locals, const Endpoint& text, ModelContext& ctx);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunRecord {
    std::string poster_id;
    MethodTag method = MethodTag::seg_sum;
    std::string config_digest;
    std::size_t n_masks = 0;
    std::size_t n_clusters = 0;
    std::vector<LocalSummary> locals;
    std::optional<GlobalSummary> global;
    std::vector<StageTiming> timings;
    std::string failed_stage;
    std::string error;
    std::vector<std::string> transmitted_params;
    std::vector<std::string> ignored_params;

    [[nodiscard]] bool ok() const noexcept { return global.has_value(); }
};

/// Settings shared by every method run.
struct RunConfig {
    SegmenterConfig segmenter;
    KMeansConfig kmeans;
    Endpoint vision;
    Endpoint text;
    std::string config_digest;
};

RunRecord run_segment_and_summarize(const PosterRecord& record, const PosterImage& image, const RunConfig& cfg,
                                    ModelContext& ctx);
/// No-clustering ablation: the k largest masks become the regions.
RunRecord run_segment_and_summarize_topk(const PosterRecord& record, const PosterImage& image, const RunConfig& cfg,
                                         ModelContext& ctx);
RunRecord run_zero_shot(const PosterRecord& record, const PosterImage& image, const Endpoint& vision,
                        ModelContext& ctx);
RunRecord run_cot(const PosterRecord& record, const PosterImage& image, const Endpoint& vision, ModelContext& ctx);

enum class OcrMode { raw, llm };
/// raw: the OCR text is the summary. llm: one text call over the OCR template.
RunRecord run_ocr_baseline(const PosterRecord& record, const std::optional<std::string>& ocr_text, OcrMode mode,
                           const Endpoint& text, ModelContext& ctx);

/// Loads the poster (stage "load") when the method needs pixels, then
/// dispatches. Never throws for stage failures; they land in the record.
RunRecord run_method(MethodTag method, const PosterRecord& record, const std::filesystem::path& image_path,
                     const RunConfig& cfg, ModelContext& ctx);

/// One JSON object per line.
std::string run_record_to_json(const RunRecord& record, bool include_timings = true);

/// The fields evaluation needs from a run file line.
struct RunSummaryLine {
    std::string poster_id;
    MethodTag method = MethodTag::seg_sum;
    bool ok = false;
    std::string summary;
    std::string config_digest;
};

/// Parses a run file, skipping the provenance header line.
std::vector<RunSummaryLine> load_run_file(const std::filesystem::path& path);

} // namespace segsum

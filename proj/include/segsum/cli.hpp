#pragma once

#include "segsum/config.hpp"
#include "segsum/dataset.hpp"
#include "segsum/metrics.hpp"
#include "segsum/summarize.hpp"

#include "json.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace segsum {

/// Exit codes: 0 success, 1 validation error, 2 runtime or model error.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Config digest, seeds, template version and endpoint model ids. No timestamps.
nlohmann::ordered_json provenance(const AppConfig& config, const PromptLibrary& prompts, std::string_view command);
/// `{"provenance": ...}` as the first line of JSONL outputs.
std::string provenance_jsonl(const nlohmann::ordered_json& prov);
/// `# key: value` lines heading CSV outputs.
std::string provenance_csv(const nlohmann::ordered_json& prov);

/// Builds the method settings from a config. Throws ValidationError when an
/// endpoint the method needs is not configured.
RunConfig make_run_config(const AppConfig& config, MethodTag method);

/// Runs `method` over `records` on `workers` threads. `sink` sees each result
/// in input order as soon as it and all earlier records are done.
std::vector<RunRecord> run_corpus(std::span<const PosterRecord> records, const DatasetManifest& manifest,
                                  MethodTag method, const RunConfig& cfg, ModelContext& ctx, int workers,
                                  const std::function<void(const RunRecord&)>& sink = {});

/// Per-record scores of one method's run against the manifest abstracts.
/// Failed records are scored as empty summaries.
struct MethodEvaluation {
    MethodTag method = MethodTag::seg_sum;
    std::vector<std::string> poster_ids;
    std::vector<bool> ok;
    CorpusEvaluation scores;
    std::optional<BinCorrelation> ocr_length;
};

MethodEvaluation evaluate_run(std::span<const RunSummaryLine> lines, const DatasetManifest& manifest,
                              std::span<const double> ocr_bin_edges = {});
nlohmann::ordered_json evaluation_json(const MethodEvaluation& eval);

struct AblationRow {
    int k = 0;
    MethodTag method = MethodTag::seg_sum;
    double mean_rl = 0.0;
    std::size_t n = 0;
};

/// Sweeps k over [k_min, k_max], scoring mean ROUGE-L F1 per k; with_topk adds
/// the no-clustering row for each k right after the clustered one.
std::vector<AblationRow> ablate_k(std::span<const PosterRecord> records, const DatasetManifest& manifest,
                                  const AppConfig& config, ModelContext& ctx, int k_min, int k_max, bool with_topk);
std::string ablation_csv(std::span<const AblationRow> rows);

} // namespace segsum

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace segsum {

struct LocalSummary;

/// Fixed prompt templates. zero_shot, cot and local are sent verbatim;
/// global_merge has a {sections} slot and ocr_llm an {ocr_text} slot.
struct PromptLibrary {
    std::string zero_shot;
    std::string cot;
    std::string local;
    std::string global_merge;
    std::string ocr_llm;

    /// Templates compiled into the binary.
    static const PromptLibrary& builtin();
    /// Reads <dir>/{zero_shot,cot,local,global_merge,ocr_llm}.txt.
    static PromptLibrary load(const std::filesystem::path& dir);

    /// Local summaries enumerated as "Section i:\n<text>" blocks separated by
    /// blank lines, in the order given.
    [[nodiscard]] std::string render_merge(std::span<const LocalSummary> locals) const;
    [[nodiscard]] std::string render_ocr(std::string_view ocr_text) const;

    /// Short identifier of the template set for provenance headers.
    [[nodiscard]] std::string version() const;
};

inline constexpr std::string_view kMergeTemplateVersion = "merge-v1";
inline constexpr std::string_view kOcrTemplateVersion = "ocr-v1";

} // namespace segsum

#include "segsum/prompts.hpp"

#include "segsum/digest.hpp"
#include "segsum/error.hpp"
#include "segsum/summarize.hpp"

#include <fmt/format.h>

#include <fstream>
#include <iterator>

namespace segsum {

namespace {

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot read prompt template: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string replace_slot(std::string text, std::string_view slot, std::string_view value) {
    const auto pos = text.find(slot);
    if (pos == std::string::npos) {
        throw ValidationError(fmt::format("template lacks the {} slot", slot));
    }
    text.replace(pos, slot.size(), value);
    return text;
}

} // namespace

const PromptLibrary& PromptLibrary::builtin() {
    static const PromptLibrary lib{
        "Write an abstract for an AI conference paper for the given research poster image.",
        "Analyze the research poster image step by step.\n"
        "First, identify the title and main research problem.\n"
        "Then, briefly describe the methodology used.\n"
        "Next, summarize the key findings or results.\n"
        "Finally, note the conclusion or implications.\n"
        "Using this information, write an abstract for the given research poster image.",
        "Describe all the text, tables, figures, and equations in the image.",
        "Write a single coherent conference-paper abstract from the following section descriptions.\n\n{sections}",
        "Write an abstract for an AI conference paper for the given text extracted from a research poster.\n\n"
        "{ocr_text}",
    };
    return lib;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
    PromptLibrary lib{read_text(dir / "zero_shot.txt"), read_text(dir / "cot.txt"), read_text(dir / "local.txt"),
                      read_text(dir / "global_merge.txt"), read_text(dir / "ocr_llm.txt")};
    if (lib.global_merge.find("{sections}") == std::string::npos) {
        throw ValidationError("global_merge.txt lacks the {sections} slot");
    }
    if (lib.ocr_llm.find("{ocr_text}") == std::string::npos) {
        throw ValidationError("ocr_llm.txt lacks the {ocr_text} slot");
    }
    return lib;
}

std::string PromptLibrary::render_merge(std::span<const LocalSummary> locals) const {
    std::string sections;
    for (std::size_t i = 0; i < locals.size(); ++i) {
        if (i > 0) {
            sections += "\n\n";
        }
        sections += fmt::format("Section {}:\n{}", i + 1, locals[i].text);
    }
    return replace_slot(global_merge, "{sections}", sections);
}

std::string PromptLibrary::render_ocr(std::string_view ocr_text) const {
    return replace_slot(ocr_llm, "{ocr_text}", ocr_text);
}

std::string PromptLibrary::version() const {
    const std::string all = zero_shot + '\x1f' + cot + '\x1f' + local + '\x1f' + global_merge + '\x1f' + ocr_llm;
    return fmt::format("{}+{}:{}", kMergeTemplateVersion, kOcrTemplateVersion, sha256_hex(all).substr(0, 12));
}

} // namespace segsum

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace segsum {

enum class TokenOrigin { candidate, reference };

struct TokenSeq {
    std::vector<std::string> tokens;
    TokenOrigin origin = TokenOrigin::candidate;

    [[nodiscard]] std::size_t size() const noexcept { return tokens.size(); }
    [[nodiscard]] bool empty() const noexcept { return tokens.empty(); }
};

enum class TokenizeMode {
    /// Lowercased; whitespace and punctuation are separators and are dropped.
    metric_default,
    /// mteval-v13a conventions: case preserved, punctuation isolated as tokens.
    bleu_13a_like,
};

TokenSeq tokenize(std::string_view text, TokenizeMode mode = TokenizeMode::metric_default,
                  TokenOrigin origin = TokenOrigin::candidate);

/// Rule-based splitter: a sentence ends at `.`, `!` or `?` (plus any closing
/// quotes/brackets) followed by whitespace and then an uppercase letter, a digit,
/// a quote or an opening bracket. When `newline_breaks` is set every newline
/// also ends a sentence. Returned sentences are trimmed and nonempty.
std::vector<std::string> split_sentences(std::string_view text, bool newline_breaks = false);

/// Decodes one UTF-8 code point starting at `pos`, advancing `pos`. Invalid
/// bytes decode to U+FFFD and advance by one.
char32_t next_code_point(std::string_view text, std::size_t& pos);
void append_utf8(std::string& out, char32_t cp);

/// Greedy longest-match-first subword tokenizer over a vocabulary file
/// (one piece per line, continuation pieces prefixed with "##").
class WordPieceVocab {
  public:
    static WordPieceVocab load(const std::filesystem::path& path);
    explicit WordPieceVocab(std::vector<std::string> pieces);

    /// Splits `text` into words (metric_default rules, punctuation kept as its
    /// own word) and each word into pieces. Unknown words become one "[UNK]".
    [[nodiscard]] std::vector<std::string> tokenize(std::string_view text) const;

  private:
    std::unordered_map<std::string, int> ids_;
    std::size_t max_piece_bytes_ = 0;
};

} // namespace segsum

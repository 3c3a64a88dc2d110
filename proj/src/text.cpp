#include "segsum/text.hpp"

#include "segsum/error.hpp"

#include <fstream>
#include <regex>

namespace segsum {

namespace {

bool is_ascii_alnum(char32_t c) {
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9');
}

// Non-ASCII code points treated as separators by the metric tokenizer.
bool is_unicode_separator(char32_t c) {
    return (c >= 0x00A0 && c <= 0x00BF) || c == 0x00D7 || c == 0x00F7 ||
           (c >= 0x2000 && c <= 0x206F) || (c >= 0x2190 && c <= 0x23FF) ||
           (c >= 0x2500 && c <= 0x27BF) || (c >= 0x3000 && c <= 0x303F) ||
           (c >= 0xFE30 && c <= 0xFE4F) || (c >= 0xFF01 && c <= 0xFF0F) ||
           (c >= 0xFF1A && c <= 0xFF20) || c == 0xFEFF || c == 0xFFFD;
}

bool is_word_char(char32_t c) {
    if (c < 0x80) {
        return is_ascii_alnum(c);
    }
    return !is_unicode_separator(c);
}

bool is_space(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
           c == 0x00A0 || (c >= 0x2000 && c <= 0x200B) || c == 0x3000;
}

char32_t to_lower(char32_t c) {
    if (c >= U'A' && c <= U'Z') {
        return c + 32;
    }
    if (c >= 0x00C0 && c <= 0x00DE && c != 0x00D7) {
        return c + 32;
    }
    if (c >= 0x0391 && c <= 0x03A9 && c != 0x03A2) {
        return c + 32;
    }
    if (c >= 0x0410 && c <= 0x042F) {
        return c + 32;
    }
    if (c >= 0x0400 && c <= 0x040F) {
        return c + 80;
    }
    return c;
}

std::vector<std::string> tokenize_metric(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t c = next_code_point(text, pos);
        if (is_word_char(c)) {
            append_utf8(current, to_lower(c));
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

bool is_13a_symbol(char c) {
    switch (c) {
    case '{': case '|': case '}': case '~':
    case '[': case '\\': case ']': case '^': case '_': case '`':
    case ' ': case '!': case '"': case '#': case '$': case '%': case '&':
    case '(': case ')': case '*': case '+':
    case ':': case ';': case '<': case '=': case '>': case '?': case '@':
    case '/':
        return true;
    default:
        return false;
    }
}

std::vector<std::string> tokenize_13a(std::string_view text) {
    std::string line(text);
    replace_all(line, "<skipped>", "");
    replace_all(line, "-\n", "");
    replace_all(line, "\n", " ");
    if (line.find('&') != std::string::npos) {
        replace_all(line, "&quot;", "\"");
        replace_all(line, "&amp;", "&");
        replace_all(line, "&lt;", "<");
        replace_all(line, "&gt;", ">");
    }

    std::string padded;
    padded.reserve(line.size() * 2 + 2);
    padded.push_back(' ');
    for (char c : line) {
        if (is_13a_symbol(c)) {
            padded.push_back(' ');
            padded.push_back(c);
            padded.push_back(' ');
        } else {
            padded.push_back(c);
        }
    }
    padded.push_back(' ');

    static const std::regex period_after_nondigit(R"(([^0-9])([\.,]))");
    static const std::regex period_before_nondigit(R"(([\.,])([^0-9]))");
    static const std::regex dash_after_digit(R"(([0-9])(-))");
    padded = std::regex_replace(padded, period_after_nondigit, "$1 $2 ");
    padded = std::regex_replace(padded, period_before_nondigit, " $1 $2");
    padded = std::regex_replace(padded, dash_after_digit, "$1 $2 ");

    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < padded.size()) {
        while (i < padded.size() && (padded[i] == ' ' || padded[i] == '\t' || padded[i] == '\r' ||
                                     padded[i] == '\f' || padded[i] == '\v')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < padded.size() && !(padded[i] == ' ' || padded[i] == '\t' || padded[i] == '\r' ||
                                      padded[i] == '\f' || padded[i] == '\v')) {
            ++i;
        }
        if (i > start) {
            out.emplace_back(padded.substr(start, i - start));
        }
    }
    return out;
}

bool is_closer(char32_t c) {
    return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == 0x201D || c == 0x2019;
}

bool starts_sentence(char32_t c) {
    return (c >= U'A' && c <= U'Z') || (c >= 0x00C0 && c <= 0x00DE && c != 0x00D7) ||
           (c >= 0x0391 && c <= 0x03A9) || (c >= 0x0400 && c <= 0x042F) || c == U'"' ||
           c == U'\'' || c == U'(' || c == U'[' || c == 0x201C || c == 0x2018;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

} // namespace

char32_t next_code_point(std::string_view text, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(text[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return 0xFFFD;
    }
    if (pos + len > text.size()) {
        ++pos;
        return 0xFFFD;
    }
    for (int i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(text[pos + i]);
        if ((b & 0xC0) != 0x80) {
            ++pos;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    pos += len;
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

TokenSeq tokenize(std::string_view text, TokenizeMode mode, TokenOrigin origin) {
    TokenSeq seq;
    seq.origin = origin;
    seq.tokens = mode == TokenizeMode::metric_default ? tokenize_metric(text) : tokenize_13a(text);
    return seq;
}

std::vector<std::string> split_sentences(std::string_view text, bool newline_breaks) {
    std::vector<std::string> out;
    std::size_t sentence_start = 0;
    std::size_t pos = 0;
    auto flush = [&](std::size_t end) {
        std::string s = trim(text.substr(sentence_start, end - sentence_start));
        if (!s.empty()) {
            out.push_back(std::move(s));
        }
        sentence_start = end;
    };

    while (pos < text.size()) {
        const std::size_t here = pos;
        const char32_t c = next_code_point(text, pos);
        if (newline_breaks && c == U'\n') {
            flush(here);
            continue;
        }
        if (c != U'.' && c != U'!' && c != U'?') {
            continue;
        }
        std::size_t end = pos;
        while (end < text.size()) {
            std::size_t probe = end;
            if (!is_closer(next_code_point(text, probe))) {
                break;
            }
            end = probe;
        }
        std::size_t after = end;
        bool saw_space = false;
        while (after < text.size()) {
            std::size_t probe = after;
            const char32_t s = next_code_point(text, probe);
            if (!is_space(s) || (newline_breaks && s == U'\n')) {
                break;
            }
            saw_space = true;
            after = probe;
        }
        if (!saw_space || after >= text.size()) {
            continue;
        }
        std::size_t probe = after;
        if (starts_sentence(next_code_point(text, probe))) {
            flush(end);
            pos = end;
        }
    }
    flush(text.size());
    return out;
}

WordPieceVocab::WordPieceVocab(std::vector<std::string> pieces) {
    int id = 0;
    for (auto& piece : pieces) {
        max_piece_bytes_ = std::max(max_piece_bytes_, piece.size());
        ids_.emplace(std::move(piece), id++);
    }
}

WordPieceVocab WordPieceVocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open vocabulary file: " + path.string());
    }
    std::vector<std::string> pieces;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            pieces.push_back(line);
        }
    }
    if (pieces.empty()) {
        throw ValidationError("empty vocabulary file: " + path.string());
    }
    return WordPieceVocab(std::move(pieces));
}

std::vector<std::string> WordPieceVocab::tokenize(std::string_view text) const {
    std::vector<std::string> words;
    std::string current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t c = next_code_point(text, pos);
        if (is_space(c)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else if (!is_word_char(c)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
            std::string p;
            append_utf8(p, c);
            words.push_back(std::move(p));
        } else {
            append_utf8(current, to_lower(c));
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }

    std::vector<std::string> out;
    for (const auto& word : words) {
        std::vector<std::string> pieces;
        std::size_t start = 0;
        bool bad = false;
        while (start < word.size()) {
            std::size_t end = std::min(word.size(), start + max_piece_bytes_ + 2);
            bool found = false;
            while (end > start) {
                std::string candidate = word.substr(start, end - start);
                if (start > 0) {
                    candidate = "##" + candidate;
                }
                if (ids_.contains(candidate)) {
                    pieces.push_back(std::move(candidate));
                    found = true;
                    break;
                }
                --end;
            }
            if (!found) {
                bad = true;
                break;
            }
            start = end;
        }
        if (bad) {
            out.emplace_back("[UNK]");
        } else {
            out.insert(out.end(), pieces.begin(), pieces.end());
        }
    }
    return out;
}

} // namespace segsum

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ypath::detail {

// Decodes the UTF-8 code point starting at pos, advancing pos past it.
// Malformed bytes are consumed one at a time and returned as U+FFFD.
inline char32_t utf8_next(std::string_view s, size_t& pos) {
    unsigned char c = static_cast<unsigned char>(s[pos]);
    if (c < 0x80) {
        ++pos;
        return c;
    }
    int extra;
    char32_t cp;
    if ((c & 0xe0) == 0xc0) { extra = 1; cp = c & 0x1f; }
    else if ((c & 0xf0) == 0xe0) { extra = 2; cp = c & 0x0f; }
    else if ((c & 0xf8) == 0xf0) { extra = 3; cp = c & 0x07; }
    else { ++pos; return 0xfffd; }
    if (pos + extra >= s.size()) {
        ++pos;
        return 0xfffd;
    }
    for (int i = 1; i <= extra; ++i) {
        unsigned char cc = static_cast<unsigned char>(s[pos + i]);
        if ((cc & 0xc0) != 0x80) {
            ++pos;
            return 0xfffd;
        }
        cp = (cp << 6) | (cc & 0x3f);
    }
    pos += 1 + extra;
    return cp;
}

/// Length in bytes of the UTF-8 sequence starting with byte c (1 if malformed).
inline size_t utf8_len(unsigned char c) {
    if (c < 0x80) return 1;
    if ((c & 0xe0) == 0xc0) return 2;
    if ((c & 0xf0) == 0xe0) return 3;
    if ((c & 0xf8) == 0xf0) return 4;
    return 1;
}

inline bool is_cjk(char32_t cp) {
    return (cp >= 0x4e00 && cp <= 0x9fff) ||   // CJK unified
           (cp >= 0x3400 && cp <= 0x4dbf) ||   // extension A
           (cp >= 0xf900 && cp <= 0xfaff) ||   // compatibility ideographs
           (cp >= 0x3040 && cp <= 0x30ff) ||   // hiragana + katakana
           (cp >= 0xac00 && cp <= 0xd7af);     // hangul syllables
}

inline bool is_space_cp(char32_t cp) {
    return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
           cp == U'\v' || cp == 0x3000 || cp == 0x00a0;
}

inline bool is_ascii_alnum(char32_t cp) {
    return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
}

/// Word constituents for the fallback tokenizer: ASCII letters/digits plus
/// Latin-1..Latin Extended letters. Apostrophes/hyphens split.
inline bool is_word_cp(char32_t cp) {
    if (is_ascii_alnum(cp)) return true;
    if (cp >= 0x00c0 && cp <= 0x024f && cp != 0x00d7 && cp != 0x00f7) return true;  // latin ext
    if (cp >= 0x0370 && cp <= 0x03ff) return true;                                  // greek
    if (cp >= 0x0400 && cp <= 0x04ff) return true;                                  // cyrillic
    return false;
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else {
        out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
}

/// Canonical text form used for content hashing and keyword matching:
/// whitespace runs (incl. ideographic space) collapse to one ASCII space,
/// leading/trailing whitespace trimmed. Idempotent. Inputs are expected to
/// be NFC already; no recomposition is attempted.
inline std::string normalize_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    size_t pos = 0;
    bool pending_space = false;
    bool emitted = false;
    while (pos < s.size()) {
        size_t start = pos;
        char32_t cp = utf8_next(s, pos);
        if (is_space_cp(cp)) {
            pending_space = true;
            continue;
        }
        if (pending_space && emitted) out.push_back(' ');
        pending_space = false;
        emitted = true;
        out.append(s.substr(start, pos - start));
    }
    return out;
}

/// ASCII-only case folding; non-ASCII passes through untouched.
inline std::string casefold(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

inline std::string normalize_casefold(std::string_view s) { return casefold(normalize_text(s)); }

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && (static_cast<unsigned char>(s[b]) <= ' ')) ++b;
    while (e > b && (static_cast<unsigned char>(s[e - 1]) <= ' ')) --e;
    return std::string(s.substr(b, e - b));
}

/// Splits text into sentence-ish units. Boundaries are ., !, ?, their
/// fullwidth forms, the ideographic full stop, and newlines; the delimiter
/// stays attached to its sentence. Spans are byte ranges into the input.
struct SentenceSpan {
    size_t begin;
    size_t end;
};

inline std::vector<SentenceSpan> split_sentences(std::string_view text) {
    std::vector<SentenceSpan> spans;
    size_t pos = 0;
    size_t start = 0;
    while (pos < text.size()) {
        size_t cp_start = pos;
        char32_t cp = utf8_next(text, pos);
        bool boundary = cp == U'.' || cp == U'!' || cp == U'?' || cp == 0x3002 ||
                        cp == 0xff01 || cp == 0xff1f || cp == U'\n';
        if (cp == U'.') {
            // require whitespace/end after the period so "3.5" stays intact
            if (pos < text.size()) {
                size_t peek = pos;
                char32_t next = utf8_next(text, peek);
                if (!is_space_cp(next)) boundary = false;
            }
        }
        if (boundary) {
            size_t end = (cp == U'\n') ? cp_start : pos;
            if (end > start) spans.push_back({start, end});
            // skip whitespace between sentences
            size_t p = pos;
            while (p < text.size()) {
                size_t q = p;
                char32_t w = utf8_next(text, q);
                if (!is_space_cp(w)) break;
                p = q;
            }
            start = p;
            pos = p;
        }
    }
    if (start < text.size()) spans.push_back({start, text.size()});
    // drop empty/whitespace-only spans
    std::vector<SentenceSpan> out;
    for (auto sp : spans) {
        std::string_view piece = text.substr(sp.begin, sp.end - sp.begin);
        bool blank = true;
        size_t p = 0;
        while (p < piece.size()) {
            if (!is_space_cp(utf8_next(piece, p))) { blank = false; break; }
        }
        if (!blank) out.push_back(sp);
    }
    return out;
}

/// True if needle occurs in haystack after normalize+casefold on both sides.
inline bool contains_normalized(std::string_view haystack, std::string_view needle) {
    std::string h = normalize_casefold(haystack);
    std::string n = normalize_casefold(needle);
    if (n.empty()) return false;
    return h.find(n) != std::string::npos;
}

/// One segmentation unit: a run of word codepoints, a single CJK character,
/// or a single punctuation codepoint. Whitespace produces no unit.
struct UnitSpan {
    size_t begin = 0;
    size_t end = 0;
    bool is_word = false;  // word run or CJK char (counts toward token limits)
};

inline std::vector<UnitSpan> segment_unit_spans(std::string_view text) {
    std::vector<UnitSpan> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t start = pos;
        char32_t cp = utf8_next(text, pos);
        if (is_space_cp(cp)) continue;
        if (is_cjk(cp)) {
            out.push_back({start, pos, true});
            continue;
        }
        if (is_word_cp(cp)) {
            size_t end = pos;
            while (end < text.size()) {
                size_t next = end;
                char32_t c2 = utf8_next(text, next);
                if (!is_word_cp(c2) || is_cjk(c2)) break;
                end = next;
            }
            out.push_back({start, end, true});
            pos = end;
            continue;
        }
        out.push_back({start, pos, false});
    }
    return out;
}

/// Word-only units of the casefolded text (CJK chars count as words);
/// punctuation dropped. This is the shared fallback vocabulary unit.
inline std::vector<std::string> segment_units(std::string_view text) {
    std::string folded = normalize_casefold(text);
    std::vector<std::string> out;
    for (const auto& u : segment_unit_spans(folded)) {
        if (u.is_word) out.emplace_back(folded.substr(u.begin, u.end - u.begin));
    }
    return out;
}

/// Token count used for chunk-size limits when no lexicon is loaded.
inline size_t fallback_token_count(std::string_view text) {
    size_t n = 0;
    for (const auto& u : segment_unit_spans(text)) {
        if (u.is_word) ++n;
    }
    return n;
}

}  // namespace ypath::detail

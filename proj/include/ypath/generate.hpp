#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ypath/common.hpp"
#include "ypath/gateway.hpp"
#include "ypath/prompts.hpp"
#include "ypath/sed.hpp"
#include "ypath/store.hpp"

namespace ypath {

struct GenerationConfig {
    size_t context_c = 3;
    ProviderConfig drafter;
    ProviderConfig refiner;
    bool single_stage = false;

    void validate() const {
        if (context_c < 1) throw ConfigError("generation: context_c must be >= 1");
    }
};

struct Answer {
    std::string text;
    std::vector<std::string> cited_passage_refs;
    std::optional<std::string> draft_text;
    std::vector<std::pair<std::string, double>> evidence_used;  // (ref, final score)
};

inline constexpr const char* kNoEvidenceAnswer =
    "No supporting evidence was found in the corpus for this question; a grounded answer cannot "
    "be given.";

inline constexpr const char* kNoEvidenceMarker = "(no evidence available)";

struct ContextEntry {
    size_t k = 0;  // 1-based position, the citation number
    std::string passage_ref;
    std::string text;
};

/// Top-c evidence passages in final-score order, each block headed
/// `[k] (passage_ref)` and separated by blank lines. Passage texts are
/// whitespace-normalized, so blank lines occur only between blocks.
inline std::string assemble_context(const std::vector<EvidenceItem>& evidence, const Store& store,
                                    size_t c) {
    if (c < 1) throw ConfigError("assemble_context: c must be >= 1");
    std::string out;
    size_t n = std::min(c, evidence.size());
    for (size_t i = 0; i < n; ++i) {
        if (i) out += "\n\n";
        out += "[" + std::to_string(i + 1) + "] (" + evidence[i].passage_ref + ")\n";
        out += store.get(evidence[i].passage_ref).text;
    }
    return out;
}

inline std::vector<ContextEntry> parse_context(std::string_view block) {
    std::vector<ContextEntry> out;
    size_t pos = 0;
    while (pos < block.size()) {
        size_t end = block.find("\n\n", pos);
        if (end == std::string_view::npos) end = block.size();
        std::string_view entry = block.substr(pos, end - pos);
        size_t close = entry.find(']');
        size_t open_paren = entry.find('(');
        size_t close_paren = entry.find(')');
        size_t nl = entry.find('\n');
        if (entry.empty() || entry[0] != '[' || close == std::string_view::npos ||
            open_paren == std::string_view::npos || close_paren == std::string_view::npos ||
            nl == std::string_view::npos || close_paren > nl)
            throw DataError("parse_context: malformed entry header");
        ContextEntry e;
        e.k = std::stoul(std::string(entry.substr(1, close - 1)));
        e.passage_ref = std::string(entry.substr(open_paren + 1, close_paren - open_paren - 1));
        e.text = std::string(entry.substr(nl + 1));
        out.push_back(std::move(e));
        pos = end + 2;
    }
    return out;
}

namespace detail {

inline std::string run_draft(Gateway& gateway, const ProviderConfig& provider,
                             const std::string& question, const std::string& context) {
    ChatRequest req;
    req.system_text = prompts::kDraftSystem;
    req.user_text = std::string(prompts::kQuestionBegin) + question + prompts::kQuestionEnd + "\n" +
                    prompts::kEvidenceBegin + (context.empty() ? kNoEvidenceMarker : context) +
                    prompts::kEvidenceEnd;
    return gateway.chat(provider, req);
}

}  // namespace detail

inline std::string draft(Gateway& gateway, const std::string& question, const std::string& context,
                         const GenerationConfig& cfg) {
    return detail::run_draft(gateway, cfg.drafter, question, context);
}

inline std::string refine(Gateway& gateway, const std::string& question, const std::string& draft_text,
                          const std::string& context, const GenerationConfig& cfg) {
    ChatRequest req;
    req.system_text = prompts::kRefineSystem;
    req.user_text = std::string(prompts::kQuestionBegin) + question + prompts::kQuestionEnd + "\n" +
                    prompts::kDraftBegin + draft_text + prompts::kDraftEnd + "\n" +
                    prompts::kEvidenceBegin + (context.empty() ? kNoEvidenceMarker : context) +
                    prompts::kEvidenceEnd;
    return gateway.chat(cfg.refiner, req);
}

/// Bracket-integer citation scan: every `[k]` whose k names a context entry
/// counts as a citation of that entry's passage. First-appearance order,
/// deduplicated; out-of-range markers are ignored.
inline std::vector<std::string> extract_citations(std::string_view text,
                                                  const std::vector<ContextEntry>& context) {
    std::vector<std::string> out;
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[') continue;
        size_t j = i + 1;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i + 1 || j >= text.size() || text[j] != ']') continue;
        size_t k = std::stoul(std::string(text.substr(i + 1, j - i - 1)));
        for (const auto& e : context) {
            if (e.k == k) {
                if (std::find(out.begin(), out.end(), e.passage_ref) == out.end())
                    out.push_back(e.passage_ref);
                break;
            }
        }
        i = j;
    }
    return out;
}

/// Two-stage generation over already-filtered evidence. Empty evidence short-
/// circuits to a fixed disclaimer with no citations and no model calls.
inline Answer generate_answer(Gateway& gateway, const std::string& question,
                              const std::vector<EvidenceItem>& evidence, const Store& store,
                              const GenerationConfig& cfg) {
    cfg.validate();
    Answer ans;
    for (const auto& e : evidence) ans.evidence_used.emplace_back(e.passage_ref, e.final_score);
    if (evidence.empty()) {
        ans.text = kNoEvidenceAnswer;
        return ans;
    }
    std::string context = assemble_context(evidence, store, cfg.context_c);
    auto entries = parse_context(context);
    if (cfg.single_stage) {
        ans.text = detail::run_draft(gateway, cfg.refiner, question, context);
    } else {
        std::string d = draft(gateway, question, context, cfg);
        ans.draft_text = d;
        ans.text = refine(gateway, question, d, context, cfg);
    }
    ans.cited_passage_refs = extract_citations(ans.text, entries);
    return ans;
}

}  // namespace ypath

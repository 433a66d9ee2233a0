#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ypath/benchmark.hpp"
#include "ypath/common.hpp"
#include "ypath/detail/parallel.hpp"
#include "ypath/detail/text.hpp"
#include "ypath/fusion.hpp"
#include "ypath/gateway.hpp"
#include "ypath/prompts.hpp"

namespace ypath {

struct SupportJudgment {
    std::string passage_ref;
    double support_score = 0.0;  // [0,1]
    std::optional<Level> level;  // absent when unparseable or inconsistent with score
    std::string rationale;
};

struct SedConfig {
    double threshold = 0.5;
    double alpha = 0.5;  // weight of the retrieval (fused) score in the final blend
    ProviderConfig judge_provider;

    void validate() const {
        if (threshold < 0.0 || threshold > 1.0) throw ConfigError("sed: threshold must be in [0,1]");
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("sed: alpha must be in [0,1]");
    }
};

namespace detail {

/// Parses a strict `LEVEL|SCORE|RATIONALE` line. The rationale may itself
/// contain '|'. Returns nullopt when the shape or score is invalid.
inline std::optional<SupportJudgment> parse_support_verdict(std::string_view reply) {
    std::string line = trim(reply);
    size_t nl = line.find('\n');
    if (nl != std::string::npos) line = trim(line.substr(0, nl));
    size_t p1 = line.find('|');
    if (p1 == std::string::npos) return std::nullopt;
    size_t p2 = line.find('|', p1 + 1);
    if (p2 == std::string::npos) return std::nullopt;
    std::string level_tok = trim(line.substr(0, p1));
    std::string score_tok = trim(line.substr(p1 + 1, p2 - p1 - 1));
    std::string rationale = trim(line.substr(p2 + 1));
    char* end = nullptr;
    double score = std::strtod(score_tok.c_str(), &end);
    if (end == score_tok.c_str() || *end != '\0') return std::nullopt;
    if (score < 0.0 || score > 1.0) return std::nullopt;
    SupportJudgment j;
    j.support_score = score;
    j.rationale = rationale;
    j.level = level_from_string(level_tok);
    // A level token only stands if the score is near its canonical value.
    if (j.level && std::abs(score - canonical_score(*j.level)) > 0.10 + 1e-12) j.level.reset();
    return j;
}

}  // namespace detail

/// Pointwise support judgment of one (question, passage) pair. Retries once
/// with a stricter instruction on parse failure; a second failure yields
/// score 0 with no level. Transport failures propagate.
inline SupportJudgment judge(Gateway& gateway, const std::string& question,
                             const std::string& passage_text, const std::string& passage_ref,
                             const SedConfig& cfg) {
    cfg.validate();
    ChatRequest req;
    req.system_text = prompts::kSedJudgeSystem;
    req.user_text = std::string(prompts::kQuestionBegin) + question + prompts::kQuestionEnd +
                    "\n" + prompts::kPassageBegin + passage_text + prompts::kPassageEnd;
    req.max_tokens = 128;
    std::string reply = gateway.chat(cfg.judge_provider, req);
    auto parsed = detail::parse_support_verdict(reply);
    if (!parsed) {
        ChatRequest strict = req;
        strict.user_text += "\nReply with exactly one line: LEVEL|SCORE|RATIONALE";
        parsed = detail::parse_support_verdict(gateway.chat(cfg.judge_provider, strict));
    }
    SupportJudgment j;
    if (parsed) {
        j = *parsed;
    } else {
        j.support_score = 0.0;
        j.rationale = "unparseable judge output";
    }
    j.passage_ref = passage_ref;
    return j;
}

struct PoolJudgments {
    std::map<std::string, SupportJudgment> judged;  // by passage_ref
    std::vector<std::string> unjudged;              // transport failure after retries
};

/// Judges a whole candidate pool with bounded parallelism (the gateway's
/// per-provider bound applies). Candidates whose judge call dies on
/// transport are recorded as unjudged and excluded downstream.
inline PoolJudgments judge_pool(Gateway& gateway, const std::string& question,
                                const std::vector<Candidate>& pool,
                                const std::vector<std::string>& texts, const SedConfig& cfg,
                                unsigned workers = 4) {
    if (texts.size() != pool.size()) throw DataError("judge_pool: texts/pool size mismatch");
    std::vector<std::optional<SupportJudgment>> results(pool.size());
    std::vector<char> failed(pool.size(), 0);
    detail::parallel_for(pool.size(), workers, [&](size_t i) {
        try {
            results[i] = judge(gateway, question, texts[i], pool[i].passage_ref, cfg);
        } catch (const TransportError&) {
            failed[i] = 1;
        }
    });
    PoolJudgments out;
    for (size_t i = 0; i < pool.size(); ++i) {
        if (failed[i])
            out.unjudged.push_back(pool[i].passage_ref);
        else if (results[i])
            out.judged[pool[i].passage_ref] = std::move(*results[i]);
    }
    return out;
}

struct EvidenceItem {
    std::string passage_ref;
    double fused = 0.0;
    double support_score = 0.0;
    double final_score = 0.0;  // alpha*fused + (1-alpha)*support
};

/// Drops unjudged and low-support candidates, blends support with the fused
/// retrieval score, and re-ranks. An empty result is a valid "no supporting
/// evidence" outcome.
inline std::vector<EvidenceItem> filter_and_rerank(const std::vector<Candidate>& pool,
                                                   const std::map<std::string, SupportJudgment>& judgments,
                                                   const SedConfig& cfg) {
    cfg.validate();
    std::vector<EvidenceItem> out;
    for (const auto& c : pool) {
        auto it = judgments.find(c.passage_ref);
        if (it == judgments.end()) continue;  // unjudged
        if (it->second.support_score < cfg.threshold) continue;
        EvidenceItem e;
        e.passage_ref = c.passage_ref;
        e.fused = c.fused;
        e.support_score = it->second.support_score;
        e.final_score = cfg.alpha * c.fused + (1.0 - cfg.alpha) * e.support_score;
        out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const EvidenceItem& a, const EvidenceItem& b) {
        if (a.final_score != b.final_score) return a.final_score > b.final_score;
        return a.passage_ref < b.passage_ref;
    });
    return out;
}

/// Binary relevance training data: one record per (question, candidate),
/// P* labeled 1, A* labeled 0. JSON-lines with fields question, passage,
/// label, level, rank_score.
inline size_t export_training_pairs(const std::vector<BenchmarkItem>& items,
                                    const std::filesystem::path& path) {
    std::string body;
    size_t count = 0;
    for (const auto& item : items) {
        validate_item(item);
        for (const auto& c : item.candidates) {
            nlohmann::json j{{"question", item.question},
                             {"passage", c.text},
                             {"label", is_positive(c.level) ? 1 : 0},
                             {"level", to_string(c.level)},
                             {"rank_score", c.rank_score}};
            body += j.dump();
            body.push_back('\n');
            ++count;
        }
    }
    Store::write_file(path, body);
    return count;
}

}  // namespace ypath

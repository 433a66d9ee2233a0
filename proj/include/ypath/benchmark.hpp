#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ypath/common.hpp"
#include "ypath/store.hpp"

namespace ypath {

/// Candidate support levels: three positive grades (direct, partial, weak
/// support) and four negative grades (topic mismatch, vagueness,
/// contradiction, non-informative).
enum class Level { P1, P2, P3, A1, A2, A3, A4 };

inline constexpr std::array<Level, 7> kAllLevels = {Level::P1, Level::P2, Level::P3, Level::A1,
                                                    Level::A2, Level::A3, Level::A4};

inline std::string to_string(Level l) {
    switch (l) {
        case Level::P1: return "P1";
        case Level::P2: return "P2";
        case Level::P3: return "P3";
        case Level::A1: return "A1";
        case Level::A2: return "A2";
        case Level::A3: return "A3";
        default: return "A4";
    }
}

inline std::optional<Level> level_from_string(std::string_view s) {
    for (Level l : kAllLevels)
        if (to_string(l) == s) return l;
    return std::nullopt;
}

inline bool is_positive(Level l) {
    return l == Level::P1 || l == Level::P2 || l == Level::P3;
}

/// Canonical level -> score map. Positives sit above the 0.5 support
/// threshold, negatives below; endpoints pinned at 0.95 and 0.10.
inline double canonical_score(Level l) {
    switch (l) {
        case Level::P1: return 0.95;
        case Level::P2: return 0.75;
        case Level::P3: return 0.55;
        case Level::A1: return 0.25;
        case Level::A2: return 0.20;
        case Level::A3: return 0.15;
        default: return 0.10;
    }
}

inline constexpr double kRankScoreMin = 0.10;
inline constexpr double kRankScoreMax = 0.95;
inline constexpr size_t kCandidatesPerItem = 14;

struct CandidateRecord {
    std::string text;
    Level level = Level::A4;
    double rank_score = kRankScoreMin;
    std::string justification;
    bool unverified = false;  // judge verdict unparseable; level/score are the intended defaults
};

struct BenchmarkItem {
    std::string question_id;
    std::string question;
    std::string reference_answer;
    std::vector<std::string> keywords;
    double difficulty = 0.0;
    std::vector<CandidateRecord> candidates;  // exactly 14 for retrieval benchmarks; empty in QA-only files
};

inline void validate_item(const BenchmarkItem& item, bool require_candidates = true) {
    if (item.question_id.empty()) throw DataError("benchmark: missing question_id");
    if (item.question.empty())
        throw DataError("benchmark: empty question in " + item.question_id);
    if (item.difficulty < 0.0 || item.difficulty > 1.0)
        throw DataError("benchmark: difficulty out of [0,1] in " + item.question_id);
    if (!require_candidates && item.candidates.empty()) return;
    if (item.candidates.size() != kCandidatesPerItem)
        throw DataError("benchmark: " + item.question_id + " has " +
                        std::to_string(item.candidates.size()) + " candidates, want 14");
    bool has_p = false, has_a = false;
    for (const auto& c : item.candidates) {
        if (c.text.empty()) throw DataError("benchmark: empty candidate text in " + item.question_id);
        if (c.rank_score < kRankScoreMin - 1e-9 || c.rank_score > kRankScoreMax + 1e-9)
            throw DataError("benchmark: rank_score out of [0.10,0.95] in " + item.question_id);
        (is_positive(c.level) ? has_p : has_a) = true;
    }
    if (!has_p || !has_a)
        throw DataError("benchmark: " + item.question_id + " needs at least one P and one A level");
}

inline nlohmann::json item_to_json(const BenchmarkItem& item, bool with_candidates) {
    nlohmann::json j{{"question_id", item.question_id},
                     {"question", item.question},
                     {"reference_answer", item.reference_answer},
                     {"keywords", item.keywords},
                     {"difficulty", item.difficulty}};
    if (with_candidates) {
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : item.candidates) {
            nlohmann::json cj{{"text", c.text},
                              {"level", to_string(c.level)},
                              {"rank_score", c.rank_score},
                              {"justification", c.justification}};
            if (c.unverified) cj["unverified"] = true;
            cands.push_back(std::move(cj));
        }
        j["candidates"] = std::move(cands);
    }
    return j;
}

inline BenchmarkItem item_from_json(const nlohmann::json& j) {
    BenchmarkItem item;
    item.question_id = j.at("question_id").get<std::string>();
    item.question = j.at("question").get<std::string>();
    item.reference_answer = j.at("reference_answer").get<std::string>();
    item.keywords = j.at("keywords").get<std::vector<std::string>>();
    item.difficulty = j.at("difficulty").get<double>();
    if (j.contains("candidates")) {
        for (const auto& cj : j.at("candidates")) {
            CandidateRecord c;
            c.text = cj.at("text").get<std::string>();
            auto level = level_from_string(cj.at("level").get<std::string>());
            if (!level) throw DataError("benchmark: unknown level " +
                                        cj.at("level").get<std::string>());
            c.level = *level;
            c.rank_score = cj.at("rank_score").get<double>();
            c.justification = cj.value("justification", std::string());
            c.unverified = cj.value("unverified", false);
            item.candidates.push_back(std::move(c));
        }
    }
    return item;
}

/// One item per line; `with_candidates=false` writes the QA-only shape.
inline void save_benchmark(const std::vector<BenchmarkItem>& items,
                           const std::filesystem::path& path, bool with_candidates = true) {
    std::string body;
    for (const auto& item : items) {
        body += item_to_json(item, with_candidates).dump();
        body.push_back('\n');
    }
    Store::write_file(path, body);
}

inline std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path& path,
                                                 bool require_candidates = true) {
    std::string body = Store::read_file(path);
    std::vector<BenchmarkItem> items;
    size_t lineno = 0;
    Store::for_each_line(body, [&](const std::string& line) {
        ++lineno;
        try {
            items.push_back(item_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("benchmark: line " + std::to_string(lineno) + " of " + path.string() +
                            ": " + e.what());
        }
        validate_item(items.back(), require_candidates);
    });
    if (items.empty()) throw DataError("benchmark: no items in " + path.string());
    return items;
}

}  // namespace ypath

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ypath/benchmark.hpp"
#include "ypath/common.hpp"
#include "ypath/dense.hpp"
#include "ypath/detail/hash.hpp"
#include "ypath/detail/text.hpp"
#include "ypath/gateway.hpp"
#include "ypath/prompts.hpp"
#include "ypath/store.hpp"

namespace ypath {

/// Per-level candidate counts; must total 14 with every level represented.
struct LevelPlan {
    std::map<Level, size_t> counts = {{Level::P1, 2}, {Level::P2, 2}, {Level::P3, 2},
                                      {Level::A1, 2}, {Level::A2, 2}, {Level::A3, 2},
                                      {Level::A4, 2}};

    void validate() const {
        size_t total = 0;
        for (Level l : kAllLevels) {
            auto it = counts.find(l);
            if (it == counts.end() || it->second < 1)
                throw ConfigError("level plan: every level needs count >= 1");
            total += it->second;
        }
        if (total != kCandidatesPerItem)
            throw ConfigError("level plan: counts must total 14, got " + std::to_string(total));
    }

    size_t at(Level l) const { return counts.at(l); }
};

struct QuestionSeed {
    std::string question;
    std::string reference_answer;
    std::string source_passage_ref;
    std::vector<std::string> keywords;
};

struct BenchProviders {
    ProviderConfig qgen;       // question synthesis
    ProviderConfig transform;  // vague paraphrase + contradiction mutation
    ProviderConfig judge;      // level confirmation + rank scoring
};

namespace detail {

struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(seed * 0x9e3779b97f4a7c15ull + 1) {}
    uint64_t next() { return splitmix64(state); }
    size_t below(size_t n) { return n ? size_t(next() % n) : 0; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }
};

inline std::optional<QuestionSeed> parse_qgen_reply(std::string_view reply) {
    std::string q, a, kw;
    size_t pos = 0;
    std::string text(reply);
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.rfind("QUESTION:", 0) == 0) q = trim(line.substr(9));
        else if (line.rfind("ANSWER:", 0) == 0) a = trim(line.substr(7));
        else if (line.rfind("KEYWORDS:", 0) == 0) kw = trim(line.substr(9));
    }
    if (q.empty() || a.empty() || kw.empty()) return std::nullopt;
    QuestionSeed seed;
    seed.question = q;
    seed.reference_answer = a;
    size_t p = 0;
    while (p <= kw.size()) {
        size_t semi = kw.find(';', p);
        std::string piece = trim(semi == std::string::npos ? kw.substr(p) : kw.substr(p, semi - p));
        if (!piece.empty() &&
            std::find(seed.keywords.begin(), seed.keywords.end(), piece) == seed.keywords.end())
            seed.keywords.push_back(piece);
        if (semi == std::string::npos) break;
        p = semi + 1;
    }
    if (seed.keywords.size() < 3 || seed.keywords.size() > 8) return std::nullopt;
    return seed;
}

}  // namespace detail

struct QuestionGenStats {
    size_t attempted = 0;
    size_t parse_failures = 0;
    size_t guard_rejections = 0;
};

/// Samples passages (order fixed by `seed`) and asks the provider for a
/// question/answer/keyword triple per passage. Items whose answer shares no
/// keyword with the source passage are rejected as ungrounded. Fewer than
/// n/2 successes is a build failure.
inline std::vector<QuestionSeed> generate_questions(const Store& store, Gateway& gateway,
                                                    const ProviderConfig& provider, size_t n,
                                                    uint64_t seed,
                                                    QuestionGenStats* stats = nullptr) {
    if (store.empty()) throw DataError("generate_questions: store is empty");
    if (n < 1) throw ConfigError("generate_questions: n must be >= 1");
    std::vector<size_t> order(store.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    detail::Rng rng(seed);
    rng.shuffle(order);

    QuestionGenStats local;
    std::vector<QuestionSeed> out;
    for (size_t idx : order) {
        if (out.size() >= n) break;
        const Passage& p = store.scan()[idx];
        ++local.attempted;
        ChatRequest req;
        req.system_text = prompts::kQgenSystem;
        req.user_text = std::string(prompts::kPassageBegin) + p.text + prompts::kPassageEnd;
        auto parsed = detail::parse_qgen_reply(gateway.chat(provider, req));
        if (!parsed) {
            ++local.parse_failures;
            continue;
        }
        bool grounded = false;
        for (const auto& kw : parsed->keywords) {
            if (detail::contains_normalized(p.text, kw) &&
                detail::contains_normalized(parsed->reference_answer, kw)) {
                grounded = true;
                break;
            }
        }
        if (!grounded) {
            ++local.guard_rejections;
            continue;
        }
        parsed->source_passage_ref = p.passage_id;
        out.push_back(std::move(*parsed));
    }
    if (stats) *stats = local;
    if (out.size() * 2 < n)
        throw DataError("generate_questions: only " + std::to_string(out.size()) + " of " +
                        std::to_string(n) + " questions survived parsing and grounding");
    return out;
}

namespace detail {

inline std::string half_text(const std::string& text, bool prefix) {
    auto sentences = split_sentences(text);
    if (sentences.size() >= 2) {
        size_t k = (sentences.size() + 1) / 2;
        size_t cut_begin = prefix ? sentences[0].begin : sentences[k].begin;
        size_t cut_end = prefix ? sentences[k - 1].end : sentences.back().end;
        return trim(text.substr(cut_begin, cut_end - cut_begin));
    }
    auto units = segment_unit_spans(text);
    if (units.size() < 2) return {};
    size_t mid = units.size() / 2;
    if (prefix) return trim(text.substr(0, units[mid].begin));
    return trim(text.substr(units[mid].begin));
}

inline std::string transform_passage(Gateway& gateway, const ProviderConfig& provider,
                                     const char* system, const std::string& text) {
    ChatRequest req;
    req.system_text = system;
    req.user_text = std::string(prompts::kPassageBegin) + text + prompts::kPassageEnd;
    return ypath::detail::normalize_text(gateway.chat(provider, req));
}

}  // namespace detail

/// Builds the 14-candidate set for one question. P1 = source passage plus
/// dense-nearest neighbors; P2 = sentence-boundary halves of P1 texts;
/// P3 = passages adjacent to the source; A1 = random other-subfield
/// passages; A2/A3 = model-produced vague and contradicted variants of P1;
/// A4 = passages from boilerplate-subfield documents. All 14 must be
/// distinct by content hash.
inline std::vector<CandidateRecord> build_candidates(const QuestionSeed& seed, const Store& store,
                                                     const DenseIndex& dense,
                                                     const LevelPlan& plan, Gateway& gateway,
                                                     const BenchProviders& providers,
                                                     detail::Rng& rng) {
    plan.validate();
    const Passage& source = store.get(seed.source_passage_ref);
    const Document& source_doc = store.document(source.doc_id);

    std::set<uint64_t> used_hashes;
    std::vector<CandidateRecord> out;
    auto push = [&](Level level, std::string text, bool derived) {
        std::string norm = detail::normalize_text(text);
        uint64_t h = detail::fnv1a64(norm);
        if (norm.empty() || used_hashes.count(h)) {
            if (derived)
                throw DataError("build_candidates: duplicate or empty " + to_string(level) +
                                " candidate for " + seed.source_passage_ref);
            return false;
        }
        used_hashes.insert(h);
        CandidateRecord c;
        c.text = std::move(norm);
        c.level = level;
        c.rank_score = canonical_score(level);
        out.push_back(std::move(c));
        return true;
    };

    // P1: the source, then its nearest dense neighbors (excluding the
    // adjacent passages reserved for P3).
    std::vector<std::string> p1_texts;
    push(Level::P1, source.text, true);
    p1_texts.push_back(source.text);
    {
        auto row_idx = dense.index_of(source.passage_id);
        if (!row_idx)
            throw DataError("build_candidates: source passage missing from dense index: " +
                            seed.source_passage_ref);
        std::set<std::string> excluded{source.passage_id,
                                       source.doc_id + ":" + std::to_string(source.seq_no + 1)};
        if (source.seq_no > 0)
            excluded.insert(source.doc_id + ":" + std::to_string(source.seq_no - 1));
        auto ranked = dense.top_k(dense.row_copy(*row_idx), plan.at(Level::P1) + 8);
        size_t needed = plan.at(Level::P1) - 1;
        for (const auto& [ref, _] : ranked) {
            if (needed == 0) break;
            if (excluded.count(ref)) continue;
            const Passage& nn = store.get(ref);
            if (push(Level::P1, nn.text, false)) {
                p1_texts.push_back(nn.text);
                --needed;
            }
        }
        if (needed > 0)
            throw DataError("build_candidates: corpus too small for P1 neighbors (" +
                            seed.source_passage_ref + ")");
    }

    // P2: prefix/suffix halves of the P1 texts, alternating.
    for (size_t i = 0; i < plan.at(Level::P2); ++i) {
        const std::string& base = p1_texts[(i / 2) % p1_texts.size()];
        std::string half = detail::half_text(base, i % 2 == 0);
        if (half.empty())
            throw DataError("build_candidates: P1 text too short to halve for " +
                            seed.source_passage_ref);
        push(Level::P2, half, true);
    }

    // P3: passages adjacent to the source in its document.
    {
        std::vector<std::string> adjacent;
        if (source.seq_no > 0)
            adjacent.push_back(source.doc_id + ":" + std::to_string(source.seq_no - 1));
        adjacent.push_back(source.doc_id + ":" + std::to_string(source.seq_no + 1));
        size_t added = 0;
        for (const auto& ref : adjacent) {
            if (added >= plan.at(Level::P3)) break;
            if (!store.contains(ref)) continue;
            if (push(Level::P3, store.get(ref).text, false)) ++added;
        }
        if (added < plan.at(Level::P3))
            throw DataError("build_candidates: not enough adjacent passages for P3 (" +
                            seed.source_passage_ref + ")");
    }

    // A1: random passages from a different subfield.
    {
        std::vector<const Passage*> pool;
        for (const auto& p : store.scan()) {
            if (store.document(p.doc_id).subfield != source_doc.subfield) pool.push_back(&p);
        }
        if (pool.empty())
            throw DataError("build_candidates: corpus has a single subfield, cannot build A1 (" +
                            seed.source_passage_ref + ")");
        size_t added = 0, attempts = 0;
        while (added < plan.at(Level::A1) && attempts < pool.size() * 4 + 16) {
            ++attempts;
            const Passage* pick = pool[rng.below(pool.size())];
            if (push(Level::A1, pick->text, false)) ++added;
        }
        if (added < plan.at(Level::A1))
            throw DataError("build_candidates: not enough distinct other-subfield passages for A1 (" +
                            seed.source_passage_ref + ")");
    }

    // A2/A3: provider-transformed variants of the P1 texts.
    for (size_t i = 0; i < plan.at(Level::A2); ++i) {
        const std::string& base = p1_texts[i % p1_texts.size()];
        push(Level::A2,
             detail::transform_passage(gateway, providers.transform, prompts::kVagueSystem, base),
             true);
    }
    for (size_t i = 0; i < plan.at(Level::A3); ++i) {
        const std::string& base = p1_texts[i % p1_texts.size()];
        push(Level::A3,
             detail::transform_passage(gateway, providers.transform, prompts::kContradictSystem,
                                       base),
             true);
    }

    // A4: non-informative boilerplate drawn from the dedicated subfield.
    {
        std::vector<const Passage*> pool;
        for (const auto& p : store.scan()) {
            if (store.document(p.doc_id).subfield == "boilerplate") pool.push_back(&p);
        }
        if (pool.empty())
            throw DataError("build_candidates: corpus has no boilerplate subfield for A4 (" +
                            seed.source_passage_ref + ")");
        size_t added = 0, attempts = 0;
        while (added < plan.at(Level::A4) && attempts < pool.size() * 4 + 16) {
            ++attempts;
            const Passage* pick = pool[rng.below(pool.size())];
            if (push(Level::A4, pick->text, false)) ++added;
        }
        if (added < plan.at(Level::A4))
            throw DataError("build_candidates: not enough distinct boilerplate passages for A4 (" +
                            seed.source_passage_ref + ")");
    }

    if (out.size() != kCandidatesPerItem)
        throw DataError("build_candidates: built " + std::to_string(out.size()) +
                        " candidates, want 14");
    return out;
}

/// Judge pass: confirm or override each intended level, assign a rank score
/// in [0.10,0.95] plus a justification. Unparseable verdicts keep the
/// intended level at its canonical score and are flagged unverified.
/// Difficulty = 1 - mean positive rank score.
inline void score_support(BenchmarkItem& item, Gateway& gateway, const ProviderConfig& judge) {
    for (auto& c : item.candidates) {
        ChatRequest req;
        req.system_text = prompts::kBenchScoreSystem;
        req.user_text = std::string(prompts::kQuestionBegin) + item.question +
                        prompts::kQuestionEnd + "\n" + prompts::kPassageBegin + c.text +
                        prompts::kPassageEnd + "\n" + prompts::kIntendedLevelPrefix +
                        to_string(c.level);
        req.max_tokens = 128;
        std::string reply = detail::trim(gateway.chat(judge, req));
        size_t nl = reply.find('\n');
        if (nl != std::string::npos) reply = detail::trim(reply.substr(0, nl));
        size_t p1 = reply.find('|');
        size_t p2 = p1 == std::string::npos ? std::string::npos : reply.find('|', p1 + 1);
        std::optional<Level> level;
        double score = 0.0;
        bool parsed = false;
        if (p2 != std::string::npos) {
            level = level_from_string(detail::trim(reply.substr(0, p1)));
            std::string score_tok = detail::trim(reply.substr(p1 + 1, p2 - p1 - 1));
            char* end = nullptr;
            score = std::strtod(score_tok.c_str(), &end);
            parsed = level.has_value() && end != score_tok.c_str() && *end == '\0';
        }
        if (parsed) {
            c.level = *level;
            c.rank_score = std::clamp(score, kRankScoreMin, kRankScoreMax);
            c.justification = detail::trim(reply.substr(p2 + 1));
            c.unverified = false;
        } else {
            c.rank_score = canonical_score(c.level);
            c.justification = "unverified";
            c.unverified = true;
        }
    }
    double sum = 0;
    size_t n = 0;
    for (const auto& c : item.candidates) {
        if (is_positive(c.level)) {
            sum += c.rank_score;
            ++n;
        }
    }
    item.difficulty = n ? std::clamp(1.0 - sum / double(n), 0.0, 1.0) : 1.0;
}

/// Full three-stage build: question generation, candidate synthesis, judge
/// scoring. Candidate order within each item is shuffled (seeded) so level
/// never correlates with position.
inline std::vector<BenchmarkItem> build_benchmark(const Store& store, const DenseIndex& dense,
                                                  Gateway& gateway,
                                                  const BenchProviders& providers, size_t n,
                                                  uint64_t seed, const LevelPlan& plan = {},
                                                  QuestionGenStats* stats = nullptr) {
    plan.validate();
    auto seeds = generate_questions(store, gateway, providers.qgen, n, seed, stats);
    std::vector<BenchmarkItem> items;
    items.reserve(seeds.size());
    for (size_t i = 0; i < seeds.size(); ++i) {
        BenchmarkItem item;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "q%03zu", i);
        item.question_id = idbuf;
        item.question = seeds[i].question;
        item.reference_answer = seeds[i].reference_answer;
        item.keywords = seeds[i].keywords;
        detail::Rng rng(seed ^ detail::fnv1a64(item.question_id));
        item.candidates = build_candidates(seeds[i], store, dense, plan, gateway, providers, rng);
        score_support(item, gateway, providers.judge);
        rng.shuffle(item.candidates);
        validate_item(item);
        items.push_back(std::move(item));
    }
    return items;
}

/// Top-m hardest questions, QA-only shape. Asking for more items than exist
/// returns everything and sets the warning flag.
inline std::vector<BenchmarkItem> select_hardest(std::vector<BenchmarkItem> items, size_t m,
                                                 bool* fewer_than_m = nullptr) {
    std::sort(items.begin(), items.end(), [](const BenchmarkItem& a, const BenchmarkItem& b) {
        if (a.difficulty != b.difficulty) return a.difficulty > b.difficulty;
        return a.question_id < b.question_id;
    });
    if (fewer_than_m) *fewer_than_m = m > items.size();
    if (items.size() > m) items.resize(m);
    for (auto& item : items) item.candidates.clear();
    return items;
}

// ---------------------------------------------------------------------------
// Human review round trip
// ---------------------------------------------------------------------------

/// TSV for manual inspection; the human_level column is blank on export and
/// honored on re-import.
inline void export_review(const std::vector<BenchmarkItem>& items,
                          const std::filesystem::path& path) {
    std::string body = "question_id\tcandidate\tlevel\trank_score\thuman_level\ttext\n";
    for (const auto& item : items) {
        for (size_t i = 0; i < item.candidates.size(); ++i) {
            const auto& c = item.candidates[i];
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", c.rank_score);
            body += item.question_id + "\t" + std::to_string(i) + "\t" + to_string(c.level) +
                    "\t" + buf + "\t\t" + c.text + "\n";
        }
    }
    Store::write_file(path, body);
}

inline size_t apply_review(std::vector<BenchmarkItem>& items, const std::filesystem::path& path) {
    std::string body = Store::read_file(path);
    std::map<std::string, BenchmarkItem*> by_id;
    for (auto& item : items) by_id[item.question_id] = &item;
    size_t applied = 0;
    bool header = true;
    Store::for_each_line(body, [&](const std::string& line) {
        if (header) {
            header = false;
            return;
        }
        std::vector<std::string> cols;
        size_t pos = 0;
        while (cols.size() < 5) {
            size_t tab = line.find('\t', pos);
            if (tab == std::string::npos) {
                cols.push_back(line.substr(pos));
                break;
            }
            cols.push_back(line.substr(pos, tab - pos));
            pos = tab + 1;
        }
        if (cols.size() < 5) return;
        std::string human = detail::trim(cols[4]);
        if (human.empty()) return;
        auto level = level_from_string(human);
        if (!level) throw DataError("apply_review: unknown level '" + human + "'");
        auto it = by_id.find(cols[0]);
        if (it == by_id.end()) return;
        size_t idx = std::stoul(cols[1]);
        if (idx >= it->second->candidates.size()) return;
        it->second->candidates[idx].level = *level;
        ++applied;
    });
    return applied;
}

}  // namespace ypath

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ypath/benchmark.hpp"
#include "ypath/common.hpp"
#include "ypath/detail/parallel.hpp"
#include "ypath/detail/text.hpp"
#include "ypath/fusion.hpp"
#include "ypath/gateway.hpp"
#include "ypath/lexicon.hpp"
#include "ypath/prompts.hpp"
#include "ypath/sed.hpp"
#include "ypath/sparse.hpp"
#include "ypath/store.hpp"

namespace ypath {

// ---------------------------------------------------------------------------
// Retrieval metrics
// ---------------------------------------------------------------------------

struct RetrievalRecord {
    std::string question_id;
    double precision_at_5 = 0.0;
    double hit_at_6 = 0.0;   // count in [0,6]
    double mean_rank = 0.0;  // 1-based, [1,14]
    double ior_global = 0.0;
    double ior_positive = 0.0;
};

struct RetrievalReport {
    std::vector<RetrievalRecord> records;
    RetrievalRecord mean;  // question_id = "mean"
    size_t failures = 0;
};

/// ranking[r] = candidate index placed at rank r (0-based front = best).
/// Must be a permutation of the item's candidates.
inline RetrievalRecord retrieval_metrics(const std::vector<size_t>& ranking,
                                         const BenchmarkItem& item) {
    validate_item(item);
    const auto& cands = item.candidates;
    if (ranking.size() != cands.size())
        throw DataError("retrieval_metrics: ranking size != candidate count");
    std::vector<char> seen(cands.size(), 0);
    for (size_t idx : ranking) {
        if (idx >= cands.size() || seen[idx])
            throw DataError("retrieval_metrics: ranking is not a permutation");
        seen[idx] = 1;
    }

    std::vector<size_t> rank_of(cands.size());  // candidate index -> 1-based rank
    for (size_t r = 0; r < ranking.size(); ++r) rank_of[ranking[r]] = r + 1;

    RetrievalRecord rec;
    rec.question_id = item.question_id;

    size_t pos_in_5 = 0, pos_in_6 = 0, pos_total = 0;
    double rank_sum = 0;
    for (size_t i = 0; i < cands.size(); ++i) {
        if (!is_positive(cands[i].level)) continue;
        ++pos_total;
        rank_sum += double(rank_of[i]);
        if (rank_of[i] <= 5) ++pos_in_5;
        if (rank_of[i] <= 6) ++pos_in_6;
    }
    rec.precision_at_5 = double(pos_in_5) / 5.0;
    rec.hit_at_6 = double(pos_in_6);
    rec.mean_rank = pos_total ? rank_sum / double(pos_total) : 0.0;

    // In-order ratio: over unordered pairs with distinct gold rank_scores,
    // the fraction whose predicted order matches gold order. Degenerate
    // denominators count as fully ordered.
    size_t g_total = 0, g_ok = 0, p_total = 0, p_ok = 0;
    for (size_t i = 0; i < cands.size(); ++i) {
        for (size_t j = i + 1; j < cands.size(); ++j) {
            if (cands[i].rank_score == cands[j].rank_score) continue;
            bool gold_i_first = cands[i].rank_score > cands[j].rank_score;
            bool pred_i_first = rank_of[i] < rank_of[j];
            bool match = gold_i_first == pred_i_first;
            ++g_total;
            if (match) ++g_ok;
            if (is_positive(cands[i].level) && is_positive(cands[j].level)) {
                ++p_total;
                if (match) ++p_ok;
            }
        }
    }
    rec.ior_global = g_total ? double(g_ok) / double(g_total) : 1.0;
    rec.ior_positive = p_total ? double(p_ok) / double(p_total) : 1.0;
    return rec;
}

// ---------------------------------------------------------------------------
// QA metrics
// ---------------------------------------------------------------------------

inline double keyword_score(const std::string& answer, const std::vector<std::string>& keywords) {
    if (keywords.empty()) throw DataError("keyword_score: keywords must be non-empty");
    size_t matched = 0;
    for (const auto& kw : keywords)
        if (detail::contains_normalized(answer, kw)) ++matched;
    return double(matched) / double(keywords.size());
}

inline double semantic_similarity(Gateway& gateway, const ProviderConfig& embedder,
                                  const std::string& answer, const std::string& reference) {
    auto batch = gateway.embed(embedder, {answer, reference}, 2);
    double dot = 0;
    for (size_t i = 0; i < batch.dim; ++i)
        dot += double(batch.vectors[0][i]) * double(batch.vectors[1][i]);
    return std::clamp(dot, 0.0, 1.0);
}

namespace detail {

inline std::optional<double> parse_ratio(std::string_view reply) {
    std::string line = trim(reply);
    size_t nl = line.find('\n');
    if (nl != std::string::npos) line = trim(line.substr(0, nl));
    size_t slash = line.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 >= line.size()) return std::nullopt;
    for (size_t i = 0; i < line.size(); ++i) {
        if (i == slash) continue;
        if (!std::isdigit(static_cast<unsigned char>(line[i]))) return std::nullopt;
    }
    double num = std::stod(line.substr(0, slash));
    double den = std::stod(line.substr(slash + 1));
    if (den <= 0) return std::nullopt;
    if (num > den) return std::nullopt;
    return num / den;
}

inline std::optional<double> judged_ratio(Gateway& gateway, const ProviderConfig& judge,
                                          const char* system, const std::string& block_a,
                                          const std::string& block_b) {
    ChatRequest req;
    req.system_text = system;
    req.user_text = block_a + "\n" + block_b;
    req.max_tokens = 32;
    auto v = parse_ratio(gateway.chat(judge, req));
    if (v) return v;
    ChatRequest strict = req;
    strict.user_text += "\nReply with exactly COVERED/TOTAL as two integers, e.g. 3/4";
    return parse_ratio(gateway.chat(judge, strict));
}

}  // namespace detail

/// Fraction of the reference's atomic points covered by the answer, judged
/// by the provider as `COVERED/TOTAL`. nullopt = unparseable after retry.
inline std::optional<double> judged_coverage(Gateway& gateway, const ProviderConfig& judge,
                                             const std::string& answer,
                                             const std::string& reference) {
    return detail::judged_ratio(gateway, judge, prompts::kCoverageSystem,
                                std::string(prompts::kReferenceBegin) + reference +
                                    prompts::kReferenceEnd,
                                std::string(prompts::kAnswerBegin) + answer + prompts::kAnswerEnd);
}

/// Fraction of the answer's claims supported by the evidence block.
inline std::optional<double> judged_faithfulness(Gateway& gateway, const ProviderConfig& judge,
                                                 const std::string& answer,
                                                 const std::string& evidence_block) {
    return detail::judged_ratio(gateway, judge, prompts::kFaithfulnessSystem,
                                std::string(prompts::kEvidenceBegin) + evidence_block +
                                    prompts::kEvidenceEnd,
                                std::string(prompts::kAnswerBegin) + answer + prompts::kAnswerEnd);
}

// ---------------------------------------------------------------------------
// Benchmark-level runs
// ---------------------------------------------------------------------------

/// Orders an item's candidate indices, best first.
using Ranker = std::function<std::vector<size_t>(const BenchmarkItem&)>;

inline RetrievalReport run_retrieval_eval(const std::vector<BenchmarkItem>& items,
                                          const Ranker& ranker, unsigned workers = 4) {
    RetrievalReport report;
    report.records.resize(items.size());
    std::vector<char> ok(items.size(), 0);
    detail::parallel_for(items.size(), workers, [&](size_t i) {
        try {
            report.records[i] = retrieval_metrics(ranker(items[i]), items[i]);
            ok[i] = 1;
        } catch (const TransportError&) {
            ok[i] = 0;
        } catch (const Error&) {
            ok[i] = 0;
        }
    });
    std::vector<RetrievalRecord> kept;
    for (size_t i = 0; i < items.size(); ++i) {
        if (ok[i])
            kept.push_back(std::move(report.records[i]));
        else
            ++report.failures;
    }
    report.records = std::move(kept);
    report.mean.question_id = "mean";
    if (!report.records.empty()) {
        for (const auto& r : report.records) {
            report.mean.precision_at_5 += r.precision_at_5;
            report.mean.hit_at_6 += r.hit_at_6;
            report.mean.mean_rank += r.mean_rank;
            report.mean.ior_global += r.ior_global;
            report.mean.ior_positive += r.ior_positive;
        }
        double n = double(report.records.size());
        report.mean.precision_at_5 /= n;
        report.mean.hit_at_6 /= n;
        report.mean.mean_rank /= n;
        report.mean.ior_global /= n;
        report.mean.ior_positive /= n;
    }
    return report;
}

struct QaOutput {
    std::string answer_text;
    std::string evidence_block;  // what the answer was grounded on
};

inline constexpr const char* kNoRecordedEvidence = "(no evidence was recorded for this answer)";

using QaPipeline = std::function<QaOutput(const BenchmarkItem&)>;

struct QaRecord {
    std::string question_id;
    double keyword = 0.0;
    std::optional<double> coverage;
    std::optional<double> faithfulness;
    double semantic = 0.0;
};

struct QaReport {
    std::vector<QaRecord> records;
    double mean_keyword = 0.0;
    double mean_coverage = 0.0;      // over non-missing
    double mean_faithfulness = 0.0;  // over non-missing
    double mean_semantic = 0.0;
    size_t missing_coverage = 0;
    size_t missing_faithfulness = 0;
    size_t failures = 0;
};

inline QaReport run_qa_eval(const std::vector<BenchmarkItem>& items, const QaPipeline& pipeline,
                            Gateway& gateway, const ProviderConfig& embedder,
                            const ProviderConfig& judge, unsigned workers = 4) {
    QaReport report;
    report.records.resize(items.size());
    std::vector<char> ok(items.size(), 0);
    detail::parallel_for(items.size(), workers, [&](size_t i) {
        try {
            QaOutput out = pipeline(items[i]);
            QaRecord rec;
            rec.question_id = items[i].question_id;
            rec.keyword = keyword_score(out.answer_text, items[i].keywords);
            rec.semantic = semantic_similarity(gateway, embedder, out.answer_text,
                                               items[i].reference_answer);
            rec.coverage =
                judged_coverage(gateway, judge, out.answer_text, items[i].reference_answer);
            rec.faithfulness = judged_faithfulness(
                gateway, judge, out.answer_text,
                out.evidence_block.empty() ? std::string(kNoRecordedEvidence) : out.evidence_block);
            report.records[i] = std::move(rec);
            ok[i] = 1;
        } catch (const Error&) {
            ok[i] = 0;
        }
    });
    std::vector<QaRecord> kept;
    for (size_t i = 0; i < items.size(); ++i) {
        if (ok[i])
            kept.push_back(std::move(report.records[i]));
        else
            ++report.failures;
    }
    report.records = std::move(kept);
    size_t n_cov = 0, n_fai = 0;
    for (const auto& r : report.records) {
        report.mean_keyword += r.keyword;
        report.mean_semantic += r.semantic;
        if (r.coverage) {
            report.mean_coverage += *r.coverage;
            ++n_cov;
        } else {
            ++report.missing_coverage;
        }
        if (r.faithfulness) {
            report.mean_faithfulness += *r.faithfulness;
            ++n_fai;
        } else {
            ++report.missing_faithfulness;
        }
    }
    if (!report.records.empty()) {
        report.mean_keyword /= double(report.records.size());
        report.mean_semantic /= double(report.records.size());
    }
    if (n_cov) report.mean_coverage /= double(n_cov);
    if (n_fai) report.mean_faithfulness /= double(n_fai);
    return report;
}

// ---------------------------------------------------------------------------
// Report formatting
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace detail

inline std::string retrieval_report_tsv(const RetrievalReport& report) {
    std::string out =
        "question_id\tprecision_at_5\thit_at_6\tmean_rank\tior_global\tior_positive\n";
    auto row = [&](const RetrievalRecord& r) {
        out += r.question_id + "\t" + detail::fmt_metric(r.precision_at_5) + "\t" +
               detail::fmt_metric(r.hit_at_6) + "\t" + detail::fmt_metric(r.mean_rank) + "\t" +
               detail::fmt_metric(r.ior_global) + "\t" + detail::fmt_metric(r.ior_positive) + "\n";
    };
    for (const auto& r : report.records) row(r);
    row(report.mean);
    return out;
}

inline std::string qa_report_tsv(const QaReport& report) {
    std::string out = "question_id\tkeyword\tcoverage\tfaithfulness\tsemantic\n";
    auto cell = [](const std::optional<double>& v) {
        return v ? detail::fmt_metric(*v) : std::string("missing");
    };
    for (const auto& r : report.records) {
        out += r.question_id + "\t" + detail::fmt_metric(r.keyword) + "\t" + cell(r.coverage) +
               "\t" + cell(r.faithfulness) + "\t" + detail::fmt_metric(r.semantic) + "\n";
    }
    out += "mean\t" + detail::fmt_metric(report.mean_keyword) + "\t" +
           detail::fmt_metric(report.mean_coverage) + "\t" +
           detail::fmt_metric(report.mean_faithfulness) + "\t" +
           detail::fmt_metric(report.mean_semantic) + "\n";
    out += "missing\t0\t" + std::to_string(report.missing_coverage) + "\t" +
           std::to_string(report.missing_faithfulness) + "\t0\n";
    return out;
}

/// One CSV row per swept value: param,value,keyword,coverage,faithfulness,semantic
inline std::string sweep_csv(const std::string& param, const std::vector<size_t>& values,
                             const std::function<QaReport(size_t)>& run_at) {
    std::string out = "param,value,keyword,coverage,faithfulness,semantic\n";
    for (size_t v : values) {
        QaReport r = run_at(v);
        out += param + "," + std::to_string(v) + "," + detail::fmt_metric(r.mean_keyword) + "," +
               detail::fmt_metric(r.mean_coverage) + "," +
               detail::fmt_metric(r.mean_faithfulness) + "," +
               detail::fmt_metric(r.mean_semantic) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rankers over benchmark candidates
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<size_t> order_by_score_desc(const std::vector<double>& scores) {
    std::vector<size_t> idx(scores.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    return idx;
}

/// Stable ref naming so fusion's passage_ref tie-break equals index order.
inline std::string cand_ref(size_t i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "c%02zu", i);
    return buf;
}

}  // namespace detail

inline std::vector<size_t> oracle_ranking(const BenchmarkItem& item) {
    std::vector<double> s;
    s.reserve(item.candidates.size());
    for (const auto& c : item.candidates) s.push_back(c.rank_score);
    return detail::order_by_score_desc(s);
}

inline std::vector<size_t> reverse_oracle_ranking(const BenchmarkItem& item) {
    std::vector<double> s;
    for (const auto& c : item.candidates) s.push_back(-c.rank_score);
    return detail::order_by_score_desc(s);
}

/// Dense scores for one item: cosine of the question embedding against each
/// candidate embedding (one batched call; cached by the gateway).
inline std::vector<double> dense_candidate_scores(const BenchmarkItem& item, Gateway& gateway,
                                                  const ProviderConfig& embedder) {
    std::vector<std::string> texts;
    texts.reserve(item.candidates.size() + 1);
    texts.push_back(item.question);
    for (const auto& c : item.candidates) texts.push_back(c.text);
    auto batch = gateway.embed(embedder, texts, texts.size());
    std::vector<double> scores;
    scores.reserve(item.candidates.size());
    for (size_t i = 1; i < batch.vectors.size(); ++i) {
        double dot = 0;
        for (size_t d = 0; d < batch.dim; ++d)
            dot += double(batch.vectors[0][d]) * double(batch.vectors[i][d]);
        scores.push_back(dot);
    }
    return scores;
}

/// Sparse scores for one item: BM25 with collection statistics computed over
/// the item's own 14 candidate texts. No-match candidates score 0.
inline std::vector<double> sparse_candidate_scores(const BenchmarkItem& item,
                                                   const Lexicon& lexicon, Bm25Params params = {}) {
    const auto& cands = item.candidates;
    std::vector<std::vector<std::string>> docs;
    docs.reserve(cands.size());
    double total_len = 0;
    for (const auto& c : cands) {
        docs.push_back(tokenize_words(c.text, lexicon));
        total_len += double(docs.back().size());
    }
    double avgdl = cands.empty() ? 0.0 : total_len / double(cands.size());
    std::map<std::string, size_t> df;
    for (const auto& d : docs) {
        std::set<std::string> uniq(d.begin(), d.end());
        for (const auto& t : uniq) ++df[t];
    }
    std::vector<double> scores(cands.size(), 0.0);
    for (const auto& term : tokenize_words(item.question, lexicon)) {
        auto it = df.find(term);
        if (it == df.end()) continue;
        double idf = std::log(1.0 + (double(cands.size()) - double(it->second) + 0.5) /
                                        (double(it->second) + 0.5));
        for (size_t d = 0; d < docs.size(); ++d) {
            double tf = 0;
            for (const auto& t : docs[d])
                if (t == term) ++tf;
            if (tf == 0) continue;
            double denom = tf + params.k1 * (1.0 - params.b + params.b * double(docs[d].size()) / avgdl);
            scores[d] += idf * (tf * (params.k1 + 1.0)) / denom;
        }
    }
    return scores;
}

/// Hybrid fusion of the two per-item channels, returning the fused pool in
/// candidate-index space (every index present).
inline std::vector<Candidate> fuse_candidate_channels(const std::vector<double>& dense,
                                                      const std::vector<double>& sparse,
                                                      const RetrievalConfig& cfg) {
    std::vector<std::pair<std::string, double>> dlist, slist;
    for (size_t i = 0; i < dense.size(); ++i) dlist.emplace_back(detail::cand_ref(i), dense[i]);
    for (size_t i = 0; i < sparse.size(); ++i)
        if (sparse[i] > 0) slist.emplace_back(detail::cand_ref(i), sparse[i]);
    RetrievalConfig full = cfg;
    full.pool_k = dense.size();  // keep every candidate; eval needs a full permutation
    return fuse(dlist, slist, full);
}

inline size_t parse_cand_ref(const std::string& ref) { return std::stoul(ref.substr(1)); }

/// Rankings used by `eval retrieval --ranker ...`. The judge-backed variants
/// place filtered-out candidates after survivors, ordered by fused score.
struct RankerSet {
    Gateway* gateway = nullptr;
    ProviderConfig embedder;
    SedConfig sed;
    RetrievalConfig retrieval;
    std::shared_ptr<const Lexicon> lexicon;  // may be empty lexicon

    Ranker make(const std::string& name) const {
        if (name == "oracle") return [](const BenchmarkItem& it) { return oracle_ranking(it); };
        if (name == "reverse-oracle")
            return [](const BenchmarkItem& it) { return reverse_oracle_ranking(it); };
        if (name == "sparse") {
            auto lex = lexicon;
            return [lex](const BenchmarkItem& it) {
                static const Lexicon empty;
                return detail::order_by_score_desc(
                    sparse_candidate_scores(it, lex ? *lex : empty));
            };
        }
        if (name == "dense") {
            require_gateway(name);
            Gateway* gw = gateway;
            ProviderConfig emb = embedder;
            return [gw, emb](const BenchmarkItem& it) {
                return detail::order_by_score_desc(dense_candidate_scores(it, *gw, emb));
            };
        }
        if (name == "hybrid" || name == "hybrid-sed" || name == "hybrid-oracle-sed") {
            require_gateway(name);
            Gateway* gw = gateway;
            ProviderConfig emb = embedder;
            SedConfig sed_cfg = sed;
            RetrievalConfig ret_cfg = retrieval;
            auto lex = lexicon;
            bool with_judge = name == "hybrid-sed";
            bool with_oracle = name == "hybrid-oracle-sed";
            return [gw, emb, sed_cfg, ret_cfg, lex, with_judge,
                    with_oracle](const BenchmarkItem& it) {
                static const Lexicon empty;
                auto dense = dense_candidate_scores(it, *gw, emb);
                auto sparse = sparse_candidate_scores(it, lex ? *lex : empty);
                auto pool = fuse_candidate_channels(dense, sparse, ret_cfg);
                if (!with_judge && !with_oracle) {
                    std::vector<size_t> out;
                    for (const auto& c : pool) out.push_back(parse_cand_ref(c.passage_ref));
                    return out;
                }
                std::map<std::string, SupportJudgment> judgments;
                if (with_oracle) {
                    for (const auto& c : pool) {
                        size_t idx = parse_cand_ref(c.passage_ref);
                        SupportJudgment j;
                        j.passage_ref = c.passage_ref;
                        j.level = it.candidates[idx].level;
                        j.support_score = canonical_score(it.candidates[idx].level);
                        j.rationale = "gold level";
                        judgments[c.passage_ref] = std::move(j);
                    }
                } else {
                    std::vector<std::string> texts;
                    for (const auto& c : pool)
                        texts.push_back(it.candidates[parse_cand_ref(c.passage_ref)].text);
                    auto pj = judge_pool(*gw, it.question, pool, texts, sed_cfg);
                    judgments = std::move(pj.judged);
                }
                auto evidence = filter_and_rerank(pool, judgments, sed_cfg);
                std::vector<size_t> out;
                std::set<size_t> placed;
                for (const auto& e : evidence) {
                    size_t idx = parse_cand_ref(e.passage_ref);
                    out.push_back(idx);
                    placed.insert(idx);
                }
                for (const auto& c : pool) {
                    size_t idx = parse_cand_ref(c.passage_ref);
                    if (!placed.count(idx)) out.push_back(idx);
                }
                return out;
            };
        }
        throw ConfigError("unknown ranker: " + name);
    }

private:
    void require_gateway(const std::string& name) const {
        if (!gateway) throw ConfigError("ranker " + name + " needs a provider gateway");
    }
};

}  // namespace ypath

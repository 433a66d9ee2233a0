#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ypath/common.hpp"
#include "ypath/config.hpp"
#include "ypath/dense.hpp"
#include "ypath/eval.hpp"
#include "ypath/fusion.hpp"
#include "ypath/gateway.hpp"
#include "ypath/generate.hpp"
#include "ypath/lexicon.hpp"
#include "ypath/sed.hpp"
#include "ypath/sparse.hpp"
#include "ypath/store.hpp"

namespace ypath {

namespace detail {

inline std::string fmt_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string fmt_opt_score(const std::optional<double>& v) {
    return v ? fmt_score(*v) : std::string("-");
}

}  // namespace detail

struct SearchRow {
    size_t rank = 0;
    std::string passage_ref;
    std::string doc_id;
    uint32_t seq_no = 0;
    std::optional<double> dense_raw;
    std::optional<double> sparse_raw;
    double dense_norm = 0.0;
    double sparse_norm = 0.0;
    double fused = 0.0;
    std::optional<double> support;
    std::optional<double> final_score;
    std::optional<Level> level;
    std::string judged = "-";  // "-" (judge off), "yes", "failed"
    std::string text;
};

struct SearchResult {
    std::string query;
    bool judge = false;
    std::vector<SearchRow> rows;
};

inline constexpr const char* kSearchTsvHeader =
    "rank\tpassage_ref\tdoc_id\tseq_no\tdense_raw\tsparse_raw\tdense_norm\tsparse_norm"
    "\tfused\tsupport\tfinal\tlevel\tjudged\ttext";

inline std::string search_result_tsv(const SearchResult& res) {
    std::string out = kSearchTsvHeader;
    out += '\n';
    for (const auto& r : res.rows) {
        out += std::to_string(r.rank) + "\t" + r.passage_ref + "\t" + r.doc_id + "\t" +
               std::to_string(r.seq_no) + "\t" + detail::fmt_opt_score(r.dense_raw) + "\t" +
               detail::fmt_opt_score(r.sparse_raw) + "\t" + detail::fmt_score(r.dense_norm) +
               "\t" + detail::fmt_score(r.sparse_norm) + "\t" + detail::fmt_score(r.fused) +
               "\t" + detail::fmt_opt_score(r.support) + "\t" +
               detail::fmt_opt_score(r.final_score) + "\t" +
               (r.level ? to_string(*r.level) : std::string("-")) + "\t" + r.judged + "\t" +
               r.text + "\n";
    }
    return out;
}

inline nlohmann::json search_result_json(const SearchResult& res) {
    nlohmann::json rows = nlohmann::json::array();
    auto opt = [](const std::optional<double>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    for (const auto& r : res.rows) {
        rows.push_back({{"rank", r.rank},
                        {"passage_ref", r.passage_ref},
                        {"doc_id", r.doc_id},
                        {"seq_no", r.seq_no},
                        {"dense_raw", opt(r.dense_raw)},
                        {"sparse_raw", opt(r.sparse_raw)},
                        {"dense_norm", r.dense_norm},
                        {"sparse_norm", r.sparse_norm},
                        {"fused", r.fused},
                        {"support", opt(r.support)},
                        {"final", opt(r.final_score)},
                        {"level", r.level ? nlohmann::json(to_string(*r.level))
                                          : nlohmann::json(nullptr)},
                        {"judged", r.judged},
                        {"text", r.text}});
    }
    return {{"query", res.query}, {"judge", res.judge}, {"results", rows}};
}

struct AskResult {
    std::string question;
    Answer answer;
    std::vector<EvidenceItem> evidence;
    std::vector<std::string> unjudged;
    size_t pool_size = 0;
};

inline nlohmann::json ask_result_json(const AskResult& res) {
    nlohmann::json evidence = nlohmann::json::array();
    for (const auto& e : res.evidence)
        evidence.push_back({{"passage_ref", e.passage_ref},
                            {"fused", e.fused},
                            {"support", e.support_score},
                            {"final", e.final_score}});
    return {{"question", res.question},
            {"answer", res.answer.text},
            {"draft", res.answer.draft_text ? nlohmann::json(*res.answer.draft_text)
                                            : nlohmann::json(nullptr)},
            {"citations", res.answer.cited_passage_refs},
            {"evidence", evidence},
            {"pool_size", res.pool_size},
            {"unjudged", res.unjudged}};
}

/// Owns the loaded corpus artifacts and runs the retrieve-judge-generate
/// pipeline against them. Everything is loaded lazily so cheap commands do
/// not pay for indexes they never touch.
class Engine {
public:
    Engine(Config cfg, std::shared_ptr<Backend> backend)
        : cfg_(std::move(cfg)),
          gateway_(std::make_shared<Gateway>(cfg_.cache_dir(), std::move(backend))) {}

    const Config& config() const { return cfg_; }
    Gateway& gateway() { return *gateway_; }
    std::shared_ptr<Gateway> gateway_ptr() { return gateway_; }
    void set_workers(unsigned n) { workers_ = n < 1 ? 1 : n; }
    unsigned workers() const { return workers_; }

    Store& store() {
        if (!store_) {
            auto dir = cfg_.store_dir();
            if (!std::filesystem::exists(dir / "manifest.json"))
                throw DataError("store not found at " + dir.string() + "; run ingest first");
            store_.emplace(dir);
            if (lexicon_) store_->set_token_counter(make_token_counter(lexicon_));
        }
        return *store_;
    }

    std::shared_ptr<const Lexicon> lexicon() {
        if (!lexicon_) {
            auto file = cfg_.lexicon_file();
            if (!std::filesystem::exists(file))
                throw DataError("lexicon not found at " + file.string() +
                                "; run lexicon validate first");
            auto lex = std::make_shared<Lexicon>(Lexicon::load(file));
            lexicon_ = std::move(lex);
            if (store_) store_->set_token_counter(make_token_counter(lexicon_));
        }
        return lexicon_;
    }

    SparseIndex& sparse() {
        if (!sparse_) {
            auto file = cfg_.sparse_index();
            if (!std::filesystem::exists(file))
                throw IndexError("sparse index not found at " + file.string() +
                                 "; run index sparse first");
            sparse_ = SparseIndex::load(file, lexicon());
        }
        return *sparse_;
    }

    DenseIndex& dense() {
        if (!dense_) {
            auto dir = cfg_.dense_dir();
            if (!std::filesystem::exists(dir / "manifest.tsv"))
                throw IndexError("dense index not found at " + dir.string() +
                                 "; run index dense first");
            dense_ = DenseIndex::load(dir);
        }
        return *dense_;
    }

    /// Retrieves the fused candidate pool for a query. `k` overrides the
    /// configured pool size when nonzero. With `judge` set, every pool member
    /// is judged for support and the blended score is shown alongside.
    SearchResult search(const std::string& query, size_t k = 0, bool judge = false) {
        if (detail::normalize_text(query).empty()) throw DataError("search: empty query");
        RetrievalConfig rcfg = cfg_.retrieval();
        if (k > 0) rcfg.pool_k = k;
        auto pool = retrieve_pool(query, rcfg);

        SearchResult res;
        res.query = query;
        res.judge = judge;

        std::map<std::string, SupportJudgment> judgments;
        std::map<std::string, bool> failed;
        if (judge) {
            SedConfig scfg = cfg_.sed();
            std::vector<std::string> texts;
            texts.reserve(pool.size());
            for (const auto& c : pool) texts.push_back(store().get(c.passage_ref).text);
            PoolJudgments pj = judge_pool(*gateway_, query, pool, texts, scfg, workers_);
            judgments = std::move(pj.judged);
            for (const auto& ref : pj.unjudged) failed[ref] = true;
        }

        SedConfig scfg = cfg_.sed();
        for (size_t i = 0; i < pool.size(); ++i) {
            const Candidate& c = pool[i];
            const Passage& p = store().get(c.passage_ref);
            SearchRow row;
            row.rank = i + 1;
            row.passage_ref = c.passage_ref;
            row.doc_id = p.doc_id;
            row.seq_no = p.seq_no;
            row.dense_raw = c.dense_raw;
            row.sparse_raw = c.sparse_raw;
            row.dense_norm = c.dense_norm;
            row.sparse_norm = c.sparse_norm;
            row.fused = c.fused;
            if (judge) {
                auto it = judgments.find(c.passage_ref);
                if (it != judgments.end()) {
                    row.support = it->second.support_score;
                    row.final_score =
                        scfg.alpha * c.fused + (1.0 - scfg.alpha) * it->second.support_score;
                    row.level = it->second.level;
                    row.judged = "yes";
                } else {
                    row.judged = failed.count(c.passage_ref) ? "failed" : "-";
                }
            }
            row.text = p.text;
            res.rows.push_back(std::move(row));
        }
        return res;
    }

    /// Full pipeline: retrieve, judge, filter, generate.
    AskResult ask(const std::string& question) {
        return ask_with(question, cfg_.retrieval(), cfg_.generation());
    }

    AskResult ask_with(const std::string& question, const RetrievalConfig& rcfg,
                       const GenerationConfig& gcfg) {
        if (detail::normalize_text(question).empty()) throw DataError("ask: empty question");
        SedConfig scfg = cfg_.sed();
        auto pool = retrieve_pool(question, rcfg);
        std::vector<std::string> texts;
        texts.reserve(pool.size());
        for (const auto& c : pool) texts.push_back(store().get(c.passage_ref).text);
        PoolJudgments pj = judge_pool(*gateway_, question, pool, texts, scfg, workers_);
        AskResult res;
        res.question = question;
        res.pool_size = pool.size();
        res.unjudged = pj.unjudged;
        res.evidence = filter_and_rerank(pool, pj.judged, scfg);
        res.answer = generate_answer(*gateway_, question, res.evidence, store(), gcfg);
        return res;
    }

    /// Pipeline closure for the evaluation harness. Zero overrides keep the
    /// configured values; the context block records what generation saw.
    QaPipeline qa_pipeline(size_t pool_k_override = 0, size_t context_c_override = 0) {
        RetrievalConfig rcfg = cfg_.retrieval();
        if (pool_k_override > 0) rcfg.pool_k = pool_k_override;
        GenerationConfig gcfg = cfg_.generation();
        if (context_c_override > 0) gcfg.context_c = context_c_override;
        return [this, rcfg, gcfg](const BenchmarkItem& item) {
            AskResult r = ask_with(item.question, rcfg, gcfg);
            QaOutput out;
            out.answer_text = r.answer.text;
            out.evidence_block = assemble_context(r.evidence, store(), gcfg.context_c);
            return out;
        };
    }

    RankerSet ranker_set() {
        RankerSet set;
        set.gateway = gateway_.get();
        set.embedder = cfg_.provider("embedder");
        set.sed = cfg_.sed();
        set.retrieval = cfg_.retrieval();
        set.lexicon = lexicon();
        return set;
    }

private:
    std::vector<Candidate> retrieve_pool(const std::string& query, const RetrievalConfig& rcfg) {
        auto qvec = embed_query(*gateway_, cfg_.provider("embedder"), query);
        auto dense_list = dense().top_k(qvec, rcfg.pool_k);
        auto sparse_list = sparse().top_k(query, rcfg.pool_k);
        return fuse(dense_list, sparse_list, rcfg);
    }

    Config cfg_;
    std::shared_ptr<Gateway> gateway_;
    std::optional<Store> store_;
    std::shared_ptr<const Lexicon> lexicon_;
    std::optional<SparseIndex> sparse_;
    std::optional<DenseIndex> dense_;
    unsigned workers_ = 4;
};

}  // namespace ypath

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ypath/common.hpp"
#include "ypath/detail/hash.hpp"
#include "ypath/detail/text.hpp"
#include "ypath/gateway.hpp"
#include "ypath/prompts.hpp"

namespace ypath {

struct Document {
    std::string doc_id;
    std::string title;
    int year = 0;
    std::string subfield;
    std::string source_path;
    std::string raw_text;
};

struct Passage {
    std::string passage_id;  // doc_id + ":" + seq_no
    std::string doc_id;
    uint32_t seq_no = 0;
    std::string text;  // normalized (whitespace-collapsed, trimmed)
    size_t span_begin = 0;  // byte span into the source raw_text; (0,0) when
    size_t span_end = 0;    // the text was produced by model-assisted chunking
    uint64_t content_hash = 0;
};

struct ChunkingPolicy {
    enum class Mode { Rule, LlmAssisted };
    Mode mode = Mode::Rule;
    size_t min_tokens = 64;
    size_t max_tokens = 512;
    size_t overlap_tokens = 0;

    void validate() const {
        if (min_tokens >= max_tokens) throw ConfigError("chunking: min_tokens must be < max_tokens");
        if (max_tokens == 0) throw ConfigError("chunking: max_tokens must be positive");
    }
};

struct StoreStats {
    size_t docs = 0;
    size_t passages = 0;
    size_t duplicates_dropped = 0;
};

using TokenCounter = std::function<size_t(std::string_view)>;

inline uint64_t passage_content_hash(std::string_view text) {
    return detail::fnv1a64(detail::normalize_text(text));
}

/// Splits a document into passages. Rule mode packs whole sentences greedily
/// up to max_tokens; a sentence is split mid-way only when it alone exceeds
/// the limit. Model-assisted mode asks a provider for segment boundaries and
/// accepts the result only if every segment is traceable to the source text,
/// otherwise it falls back to rule mode.
inline std::vector<Passage> chunk(const Document& doc, const ChunkingPolicy& policy,
                                  Gateway* gateway = nullptr,
                                  const ProviderConfig* chat_provider = nullptr,
                                  bool* fell_back = nullptr,
                                  const TokenCounter& counter = detail::fallback_token_count) {
    policy.validate();
    if (doc.raw_text.empty()) throw DataError("chunk: document text is empty: " + doc.doc_id);
    if (fell_back) *fell_back = false;

    auto make_passage = [&](uint32_t seq, std::string text, size_t b, size_t e) {
        Passage p;
        p.doc_id = doc.doc_id;
        p.seq_no = seq;
        p.passage_id = doc.doc_id + ":" + std::to_string(seq);
        p.text = std::move(text);
        p.span_begin = b;
        p.span_end = e;
        p.content_hash = detail::fnv1a64(p.text);
        return p;
    };

    if (policy.mode == ChunkingPolicy::Mode::LlmAssisted) {
        if (!gateway || !chat_provider)
            throw ConfigError("chunk: llm_assisted mode requires a gateway and chat provider");
        std::string ntext = detail::normalize_text(doc.raw_text);
        ChatRequest req;
        req.system_text = prompts::kChunkSystem;
        req.user_text = std::string(prompts::kDocumentBegin) + ntext + prompts::kDocumentEnd;
        std::string reply = gateway->chat(*chat_provider, req);

        std::vector<std::string> segments;
        size_t pos = 0;
        const std::string sep = prompts::kSegmentSeparator;
        while (pos <= reply.size()) {
            size_t next = reply.find(sep, pos);
            std::string piece = detail::normalize_text(
                next == std::string::npos ? reply.substr(pos) : reply.substr(pos, next - pos));
            if (!piece.empty()) segments.push_back(piece);
            if (next == std::string::npos) break;
            pos = next + sep.size();
        }

        // A segment is accepted if it appears verbatim in the source, or
        // appears once its first word (a resolved pronoun) is ignored.
        auto traceable = [&](const std::string& seg) {
            if (ntext.find(seg) != std::string::npos) return true;
            size_t sp = seg.find(' ');
            if (sp == std::string::npos) return false;
            std::string rest = seg.substr(sp + 1);
            return !rest.empty() && ntext.find(rest) != std::string::npos;
        };
        bool ok = !segments.empty();
        for (const auto& seg : segments) {
            if (!traceable(seg)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            std::vector<Passage> out;
            out.reserve(segments.size());
            for (auto& seg : segments)
                out.push_back(make_passage(static_cast<uint32_t>(out.size()), std::move(seg), 0, 0));
            return out;
        }
        if (fell_back) *fell_back = true;
        ChunkingPolicy rule = policy;
        rule.mode = ChunkingPolicy::Mode::Rule;
        return chunk(doc, rule, nullptr, nullptr, nullptr, counter);
    }

    std::string_view raw{doc.raw_text};
    auto sentences = detail::split_sentences(raw);
    if (sentences.empty()) throw DataError("chunk: no sentences found: " + doc.doc_id);

    // Pre-split any sentence that alone exceeds the limit, cutting at unit
    // starts so consecutive pieces tile the original byte range.
    struct Piece {
        size_t begin, end, tokens;
    };
    std::vector<Piece> pieces;
    for (const auto& s : sentences) {
        std::string_view stext = raw.substr(s.begin, s.end - s.begin);
        size_t tok = counter(stext);
        if (tok <= policy.max_tokens) {
            pieces.push_back({s.begin, s.end, tok});
            continue;
        }
        auto units = detail::segment_unit_spans(stext);
        size_t piece_start = 0;
        size_t words = 0;
        for (size_t i = 0; i < units.size(); ++i) {
            if (units[i].is_word) ++words;
            if (words == policy.max_tokens) {
                size_t cut = (i + 1 < units.size()) ? units[i + 1].begin : stext.size();
                pieces.push_back({s.begin + piece_start, s.begin + cut, words});
                piece_start = cut;
                words = 0;
            }
        }
        if (piece_start < stext.size() && words > 0)
            pieces.push_back({s.begin + piece_start, s.begin + stext.size(), words});
    }

    std::vector<Passage> out;
    size_t i = 0;
    while (i < pieces.size()) {
        size_t begin = i;
        size_t tokens = 0;
        while (i < pieces.size() && (i == begin || tokens + pieces[i].tokens <= policy.max_tokens)) {
            tokens += pieces[i].tokens;
            ++i;
        }
        size_t span_b = pieces[begin].begin;
        size_t span_e = pieces[i - 1].end;
        std::string text = detail::normalize_text(raw.substr(span_b, span_e - span_b));
        if (!text.empty())
            out.push_back(make_passage(static_cast<uint32_t>(out.size()), std::move(text), span_b,
                                       span_e));
        if (policy.overlap_tokens > 0 && i < pieces.size()) {
            // walk back whole sentences whose combined size fits the overlap
            size_t carry = 0;
            size_t j = i;
            while (j > begin + 1 && carry + pieces[j - 1].tokens <= policy.overlap_tokens) {
                carry += pieces[j - 1].tokens;
                --j;
            }
            if (j < i) i = j;
        }
    }
    if (out.empty()) throw DataError("chunk: produced no passages: " + doc.doc_id);
    return out;
}

/// Drops later passages whose content_hash collides with an earlier one.
inline std::vector<Passage> dedup(const std::vector<Passage>& passages) {
    std::vector<Passage> out;
    std::unordered_set<uint64_t> seen;
    out.reserve(passages.size());
    for (const auto& p : passages) {
        if (seen.insert(p.content_hash).second) out.push_back(p);
    }
    return out;
}

/// Passage collection with single-writer ingestion and immutable reads.
/// Directory layout: passages.jsonl + documents.jsonl + manifest.json
/// (counts and SHA-256 of both files).
class Store {
public:
    Store() = default;

    explicit Store(std::filesystem::path dir, bool load_existing = true) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
        if (load_existing && std::filesystem::exists(dir_ / "manifest.json")) load();
    }

    void set_token_counter(TokenCounter counter) { counter_ = std::move(counter); }

    void set_subfield_registry(std::vector<std::string> subfields) {
        registry_ = std::move(subfields);
    }

    StoreStats ingest(const std::vector<Document>& docs, const ChunkingPolicy& policy,
                      Gateway* gateway = nullptr, const ProviderConfig* chat_provider = nullptr) {
        policy.validate();
        std::set<std::string> batch_ids;
        for (const auto& d : docs) {
            if (d.doc_id.empty()) throw DataError("ingest: empty doc_id");
            if (d.raw_text.empty()) throw DataError("ingest: empty document: " + d.doc_id);
            if (!batch_ids.insert(d.doc_id).second)
                throw DataError("ingest: duplicate doc_id in batch: " + d.doc_id);
            if (!registry_.empty() &&
                std::find(registry_.begin(), registry_.end(), d.subfield) == registry_.end())
                throw DataError("ingest: subfield not in registry: " + d.subfield);
        }

        StoreStats stats;
        for (const auto& d : docs) {
            uint64_t raw_hash = detail::fnv1a64(detail::normalize_text(d.raw_text));
            auto known = doc_hash_.find(d.doc_id);
            if (known != doc_hash_.end() && known->second != raw_hash)
                throw DataError("ingest: doc_id already stored with different content: " +
                                d.doc_id);
            if (known == doc_hash_.end()) {
                Document meta = d;
                meta.raw_text.clear();
                documents_.push_back(std::move(meta));
                doc_hash_[d.doc_id] = raw_hash;
                ++stats.docs;
            }
            TokenCounter counter = counter_ ? counter_ : TokenCounter(detail::fallback_token_count);
            auto chunks = chunk(d, policy, gateway, chat_provider, nullptr, counter);
            for (auto& p : chunks) {
                if (seen_hashes_.count(p.content_hash)) {
                    ++stats.duplicates_dropped;
                    continue;
                }
                if (by_id_.count(p.passage_id))
                    throw DataError("ingest: passage_id collision with different content: " +
                                    p.passage_id);
                seen_hashes_.insert(p.content_hash);
                by_id_[p.passage_id] = passages_.size();
                passages_.push_back(std::move(p));
                ++stats.passages;
            }
        }
        persist();
        return stats;
    }

    const Passage& get(const std::string& passage_id) const {
        auto it = by_id_.find(passage_id);
        if (it == by_id_.end()) throw DataError("store: unknown passage: " + passage_id);
        return passages_[it->second];
    }

    bool contains(const std::string& passage_id) const { return by_id_.count(passage_id) > 0; }

    const std::vector<Passage>& scan() const { return passages_; }
    const std::vector<Document>& documents() const { return documents_; }

    const Document& document(const std::string& doc_id) const {
        for (const auto& d : documents_)
            if (d.doc_id == doc_id) return d;
        throw DataError("store: unknown document: " + doc_id);
    }

    size_t size() const { return passages_.size(); }
    bool empty() const { return passages_.empty(); }
    const std::filesystem::path& dir() const { return dir_; }

    void persist() const {
        if (dir_.empty()) return;
        std::string pbody;
        for (const auto& p : passages_) {
            nlohmann::json j{{"passage_id", p.passage_id}, {"doc_id", p.doc_id},
                             {"seq_no", p.seq_no},         {"text", p.text},
                             {"span", {p.span_begin, p.span_end}},
                             {"content_hash", detail::u64_hex(p.content_hash)}};
            pbody += j.dump();
            pbody.push_back('\n');
        }
        std::string dbody;
        for (const auto& d : documents_) {
            nlohmann::json j{{"doc_id", d.doc_id},   {"title", d.title},
                             {"year", d.year},       {"subfield", d.subfield},
                             {"source_path", d.source_path},
                             {"raw_hash", detail::u64_hex(doc_hash_.at(d.doc_id))}};
            dbody += j.dump();
            dbody.push_back('\n');
        }
        write_file(dir_ / "passages.jsonl", pbody);
        write_file(dir_ / "documents.jsonl", dbody);
        nlohmann::json manifest{{"format", 1},
                                {"docs", documents_.size()},
                                {"passages", passages_.size()},
                                {"passages_sha256", detail::sha256_hex(pbody)},
                                {"documents_sha256", detail::sha256_hex(dbody)}};
        write_file(dir_ / "manifest.json", manifest.dump(2) + "\n");
    }

    void load() {
        nlohmann::json manifest = read_json(dir_ / "manifest.json");
        std::string pbody = read_file(dir_ / "passages.jsonl");
        std::string dbody = read_file(dir_ / "documents.jsonl");
        if (manifest.value("passages_sha256", "") != detail::sha256_hex(pbody) ||
            manifest.value("documents_sha256", "") != detail::sha256_hex(dbody))
            throw DataError("store: manifest hash mismatch (corrupt store?): " + dir_.string());

        passages_.clear();
        documents_.clear();
        by_id_.clear();
        seen_hashes_.clear();
        doc_hash_.clear();

        for_each_line(pbody, [&](const std::string& line) {
            nlohmann::json j = nlohmann::json::parse(line);
            Passage p;
            p.passage_id = j.at("passage_id").get<std::string>();
            p.doc_id = j.at("doc_id").get<std::string>();
            p.seq_no = j.at("seq_no").get<uint32_t>();
            p.text = j.at("text").get<std::string>();
            p.span_begin = j.at("span").at(0).get<size_t>();
            p.span_end = j.at("span").at(1).get<size_t>();
            p.content_hash = detail::parse_u64_hex(j.at("content_hash").get<std::string>());
            by_id_[p.passage_id] = passages_.size();
            seen_hashes_.insert(p.content_hash);
            passages_.push_back(std::move(p));
        });
        for_each_line(dbody, [&](const std::string& line) {
            nlohmann::json j = nlohmann::json::parse(line);
            Document d;
            d.doc_id = j.at("doc_id").get<std::string>();
            d.title = j.at("title").get<std::string>();
            d.year = j.at("year").get<int>();
            d.subfield = j.at("subfield").get<std::string>();
            d.source_path = j.at("source_path").get<std::string>();
            doc_hash_[d.doc_id] = detail::parse_u64_hex(j.at("raw_hash").get<std::string>());
            documents_.push_back(std::move(d));
        });
        size_t want_p = manifest.value("passages", size_t(0));
        size_t want_d = manifest.value("docs", size_t(0));
        if (want_p != passages_.size() || want_d != documents_.size())
            throw DataError("store: manifest counts disagree with data files");
    }

    static void write_file(const std::filesystem::path& path, const std::string& body) {
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
            out << body;
            if (!out) throw DataError("store: write failed: " + path.string());
        }
        std::filesystem::rename(tmp, path);
    }

    static std::string read_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("store: missing file: " + path.string());
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return body;
    }

    static nlohmann::json read_json(const std::filesystem::path& path) {
        try {
            return nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("store: bad JSON in " + path.string() + ": " + e.what());
        }
    }

    template <typename Fn>
    static void for_each_line(const std::string& body, Fn&& fn) {
        size_t pos = 0;
        while (pos < body.size()) {
            size_t nl = body.find('\n', pos);
            if (nl == std::string::npos) nl = body.size();
            if (nl > pos) fn(body.substr(pos, nl - pos));
            pos = nl + 1;
        }
    }

private:
    std::filesystem::path dir_;
    TokenCounter counter_;
    std::vector<std::string> registry_;
    std::vector<Passage> passages_;
    std::vector<Document> documents_;
    std::unordered_map<std::string, size_t> by_id_;
    std::unordered_set<uint64_t> seen_hashes_;
    std::unordered_map<std::string, uint64_t> doc_hash_;
};

}  // namespace ypath

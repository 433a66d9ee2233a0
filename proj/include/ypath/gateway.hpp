#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ypath/common.hpp"
#include "ypath/detail/hash.hpp"
#include "ypath/detail/text.hpp"
#include "ypath/prompts.hpp"

namespace ypath {

/// One external model endpoint (chat or embeddings).
struct ProviderConfig {
    std::string base_url;      // e.g. http://localhost:8000/v1
    std::string model_id;
    std::string api_key_env;   // env var holding the bearer token; empty = no auth
    double timeout_s = 30.0;
    int max_retries = 2;
    int max_in_flight = 4;

    void validate() const {
        if (max_in_flight < 1) throw ConfigError("provider: max_in_flight must be >= 1");
        if (timeout_s <= 0) throw ConfigError("provider: timeout must be positive");
    }
};

struct ChatRequest {
    std::string system_text;
    std::string user_text;
    double temperature = 0.0;  // decoding defaults pinned for reproducibility
    int max_tokens = 1024;
    std::optional<int64_t> seed = 0;
};

struct EmbeddingBatch {
    std::vector<std::string> texts;
    std::vector<std::vector<float>> vectors;  // unit-normalized, uniform dim
    uint32_t dim = 0;
};

/// Transport layer behind the gateway: either a real HTTP provider or a mock.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string chat(const ProviderConfig& cfg, const ChatRequest& req) = 0;
    virtual std::vector<std::vector<float>> embed(const ProviderConfig& cfg,
                                                  const std::vector<std::string>& texts) = 0;
};

namespace detail {

inline double l2_norm(const std::vector<float>& v) {
    double s = 0;
    for (float x : v) s += double(x) * double(x);
    return std::sqrt(s);
}

inline void unit_normalize(std::vector<float>& v) {
    double n = l2_norm(v);
    if (n < 1e-12) throw ProtocolError("embedding has zero norm");
    for (float& x : v) x = static_cast<float>(x / n);
}

/// Extracts the payload between marker lines (see prompts.hpp); returns
/// empty string when the block is absent.
inline std::string extract_block(std::string_view text, std::string_view begin,
                                 std::string_view end) {
    size_t b = text.find(begin);
    if (b == std::string_view::npos) return {};
    b += begin.size();
    size_t e = text.find(end, b);
    if (e == std::string_view::npos) return std::string(text.substr(b));
    return std::string(text.substr(b, e - b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deterministic mock backend
// ---------------------------------------------------------------------------

/// Scripted, fully offline backend. Chat replies come from ordered match
/// rules; embeddings are a pure function of the input text. Instrumented so
/// tests can assert call counts and peak concurrency.
class MockBackend : public Backend {
public:
    struct ChatRule {
        std::vector<std::string> match;  // rule fires if any substring occurs
        std::string mode = "const";
        std::string text;
        int num = 3, den = 4;  // for mode "ratio"
    };

    MockBackend() = default;

    explicit MockBackend(const nlohmann::json& script) { configure(script); }

    static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("mock script not readable: " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("mock script parse error: ") + e.what());
        }
        return std::make_shared<MockBackend>(j);
    }

    void configure(const nlohmann::json& script) {
        if (script.contains("embed")) {
            const auto& e = script["embed"];
            embed_dim_ = e.value("dim", 384u);
            embed_mode_ = e.value("mode", std::string("trigram"));
            embed_unnormalized_ = e.value("unnormalized", false);
        }
        rules_.clear();
        for (const auto& r : script.value("chat_rules", nlohmann::json::array())) {
            ChatRule rule;
            for (const auto& m : r.value("match", nlohmann::json::array()))
                rule.match.push_back(m.get<std::string>());
            rule.mode = r.value("mode", std::string("const"));
            rule.text = r.value("text", std::string());
            rule.num = r.value("num", 3);
            rule.den = r.value("den", 4);
            rules_.push_back(std::move(rule));
        }
        if (script.contains("chat_default")) {
            const auto& d = script["chat_default"];
            default_rule_.mode = d.value("mode", std::string("const"));
            default_rule_.text = d.value("text", std::string("OK"));
            default_rule_.num = d.value("num", 3);
            default_rule_.den = d.value("den", 4);
        }
    }

    /// Unit tests may install a handler that bypasses the rule table.
    void set_chat_handler(std::function<std::string(const ChatRequest&)> fn) {
        handler_ = std::move(fn);
    }

    void set_delay_ms(int ms) { delay_ms_ = ms; }
    void set_embed_dim(uint32_t d) { embed_dim_ = d; }
    void set_embed_mode(std::string m) { embed_mode_ = std::move(m); }

    uint64_t chat_calls() const { return chat_calls_.load(); }
    uint64_t embed_calls() const { return embed_calls_.load(); }
    uint64_t embed_texts() const { return embed_texts_.load(); }
    int peak_in_flight() const { return peak_in_flight_.load(); }

    std::string chat(const ProviderConfig&, const ChatRequest& req) override {
        InFlight guard(*this);
        chat_calls_.fetch_add(1);
        if (handler_) return handler_(req);
        std::string haystack = req.system_text + "\n" + req.user_text;
        for (const auto& rule : rules_) {
            for (const auto& m : rule.match) {
                if (!m.empty() && haystack.find(m) != std::string::npos) return apply(rule, req);
            }
        }
        return apply(default_rule_, req);
    }

    std::vector<std::vector<float>> embed(const ProviderConfig&,
                                          const std::vector<std::string>& texts) override {
        InFlight guard(*this);
        embed_calls_.fetch_add(1);
        embed_texts_.fetch_add(texts.size());
        std::vector<std::vector<float>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(mock_embedding(t, embed_dim_, embed_mode_,
                                                                 embed_unnormalized_));
        return out;
    }

    /// Pure function of (text, dim, mode). "hash" derives the whole vector
    /// from one text hash; "trigram" feature-hashes byte trigrams so texts
    /// sharing substrings get similar vectors.
    static std::vector<float> mock_embedding(std::string_view text, uint32_t dim,
                                             const std::string& mode, bool unnormalized = false) {
        std::string norm = ypath::detail::normalize_casefold(text);
        std::vector<float> v(dim, 0.0f);
        if (mode == "trigram" && norm.size() >= 3) {
            for (size_t i = 0; i + 3 <= norm.size(); ++i) {
                uint64_t h = ypath::detail::fnv1a64(std::string_view(norm).substr(i, 3));
                v[h % dim] += (h >> 63) ? 1.0f : -1.0f;
            }
            if (ypath::detail::l2_norm(v) < 1e-12) v[ypath::detail::fnv1a64(norm) % dim] = 1.0f;
        } else {
            uint64_t state = ypath::detail::fnv1a64(norm);
            for (uint32_t i = 0; i < dim; ++i) {
                uint64_t r = ypath::detail::splitmix64(state);
                v[i] = static_cast<float>(double(r) / double(UINT64_MAX) * 2.0 - 1.0);
            }
        }
        if (!unnormalized) ypath::detail::unit_normalize(v);
        return v;
    }

private:
    struct InFlight {
        explicit InFlight(MockBackend& b) : backend(b) {
            int cur = backend.in_flight_.fetch_add(1) + 1;
            int peak = backend.peak_in_flight_.load();
            while (cur > peak && !backend.peak_in_flight_.compare_exchange_weak(peak, cur)) {
            }
            if (backend.delay_ms_ > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(backend.delay_ms_));
        }
        ~InFlight() { backend.in_flight_.fetch_sub(1); }
        MockBackend& backend;
    };

    std::string apply(const ChatRule& rule, const ChatRequest& req) const {
        using ypath::detail::extract_block;
        namespace P = prompts;
        if (rule.mode == "const") return rule.text;
        if (rule.mode == "echo_user") return req.user_text;
        if (rule.mode == "fail") throw TransportError("mock: scripted transport failure");
        if (rule.mode == "ratio")
            return std::to_string(rule.num) + "/" + std::to_string(rule.den);
        if (rule.mode == "extract_passage")
            return extract_block(req.user_text, P::kPassageBegin, P::kPassageEnd);
        if (rule.mode == "vague") {
            std::string p = extract_block(req.user_text, P::kPassageBegin, P::kPassageEnd);
            return first_words(p, 5) +
                   " related aspects are discussed in general terms without specific findings.";
        }
        if (rule.mode == "contradict") {
            std::string p = extract_block(req.user_text, P::kPassageBegin, P::kPassageEnd);
            return flip_condition(p);
        }
        if (rule.mode == "confirm_level") {
            std::string level = intended_level(req.user_text);
            if (level.empty()) return "P3|0.55|no intended level found";
            return level + "|" + canonical_score_text(level) + "|confirmed intended level";
        }
        if (rule.mode == "overlap_judge") return overlap_judgment(req.user_text);
        if (rule.mode == "qgen_term") return qgen_term(req.user_text);
        if (rule.mode == "qgen_inflect") return qgen_inflect(req.user_text);
        if (rule.mode == "draft_extract") return draft_extract(req.user_text);
        if (rule.mode == "echo_draft")
            return extract_block(req.user_text, P::kDraftBegin, P::kDraftEnd);
        return rule.text;
    }

    static std::string first_words(std::string_view text, int n) {
        std::string norm = ypath::detail::normalize_text(text);
        std::istringstream iss{norm};
        std::string w, out;
        int count = 0;
        while (count < n && iss >> w) {
            if (!out.empty()) out.push_back(' ');
            out += w;
            ++count;
        }
        return out;
    }

    static std::string flip_condition(std::string text) {
        for (char& c : text) {
            if (c >= '0' && c <= '9') {
                c = static_cast<char>('0' + (9 - (c - '0')));
                return text;
            }
        }
        size_t pos = text.find(" is ");
        if (pos != std::string::npos) return text.insert(pos + 4, "not ");
        return "Contrary to the established finding, " + text;
    }

    static std::string intended_level(std::string_view user) {
        size_t pos = user.find(prompts::kIntendedLevelPrefix);
        if (pos == std::string_view::npos) return {};
        pos += std::string_view(prompts::kIntendedLevelPrefix).size();
        std::string out;
        while (pos < user.size() && !std::isspace(static_cast<unsigned char>(user[pos])))
            out.push_back(user[pos++]);
        return out;
    }

    static std::string canonical_score_text(const std::string& level) {
        if (level == "P1") return "0.95";
        if (level == "P2") return "0.75";
        if (level == "P3") return "0.55";
        if (level == "A1") return "0.25";
        if (level == "A2") return "0.20";
        if (level == "A3") return "0.15";
        return "0.10";
    }

    static std::vector<std::string> content_words(std::string_view text, size_t min_len) {
        std::string norm = ypath::detail::normalize_casefold(text);
        std::vector<std::string> words;
        std::string cur;
        for (char c : norm) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                cur.push_back(c);
            } else if (!cur.empty()) {
                if (cur.size() >= min_len) words.push_back(cur);
                cur.clear();
            }
        }
        if (cur.size() >= min_len) words.push_back(cur);
        return words;
    }

    static std::string overlap_judgment(std::string_view user) {
        namespace P = prompts;
        std::string q = ypath::detail::extract_block(user, P::kQuestionBegin, P::kQuestionEnd);
        std::string p = ypath::detail::extract_block(user, P::kPassageBegin, P::kPassageEnd);
        auto qw = content_words(q, 4);
        auto pw = content_words(p, 4);
        std::sort(qw.begin(), qw.end());
        qw.erase(std::unique(qw.begin(), qw.end()), qw.end());
        std::sort(pw.begin(), pw.end());
        size_t hit = 0;
        for (const auto& w : qw) {
            if (std::binary_search(pw.begin(), pw.end(), w)) ++hit;
        }
        double score = qw.empty() ? 0.0 : double(hit) / double(qw.size());
        static const std::pair<const char*, double> levels[] = {
            {"P1", 0.95}, {"P2", 0.75}, {"P3", 0.55}, {"A1", 0.25},
            {"A2", 0.20}, {"A3", 0.15}, {"A4", 0.10}};
        const char* level = "A4";
        double best = 1e9;
        for (const auto& [name, canon] : levels) {
            if (std::abs(score - canon) < best) {
                best = std::abs(score - canon);
                level = name;
            }
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s|%.2f|lexical overlap", level, score);
        return buf;
    }

    // Question synthesis used by scripted benchmark builds. Two families:
    // qgen_term keeps a focus term verbatim inside a templated question;
    // qgen_inflect paraphrases the lead sentence by inflecting its words.
    static std::string qgen_term(std::string_view user) {
        namespace P = prompts;
        std::string passage = ypath::detail::extract_block(user, P::kPassageBegin, P::kPassageEnd);
        auto sentences = ypath::detail::split_sentences(passage);
        if (sentences.empty()) return "SKIP";
        std::string s1 = ypath::detail::trim(
            std::string(passage.substr(sentences[0].begin, sentences[0].end - sentences[0].begin)));
        size_t tf = passage.find("Term focus:");
        if (tf == std::string::npos) return "SKIP";
        tf += std::string("Term focus:").size();
        size_t te = passage.find('.', tf);
        if (te == std::string::npos) return "SKIP";
        std::string term = ypath::detail::trim(passage.substr(tf, te - tf));
        if (term.empty()) return "SKIP";
        std::string question = "In which clinical scenario does " + term +
                               " retain diagnostic weight under current guidance?";
        auto words = content_words(s1, 7);
        std::string keywords = term;
        int added = 0;
        for (const auto& w : words) {
            if (added >= 2) break;
            if (term.find(w) != std::string::npos) continue;
            keywords += "; " + w;
            ++added;
        }
        return "QUESTION: " + question + "\nANSWER: " + s1 + "\nKEYWORDS: " + keywords;
    }

    static std::string inflect_word(const std::string& w) {
        if (w.size() < 5) return w;
        if (w.back() == 's') return w.substr(0, w.size() - 1);
        return w + "s";
    }

    static std::string qgen_inflect(std::string_view user) {
        namespace P = prompts;
        std::string passage = ypath::detail::extract_block(user, P::kPassageBegin, P::kPassageEnd);
        auto sentences = ypath::detail::split_sentences(passage);
        if (sentences.empty()) return "SKIP";
        std::string s1 = ypath::detail::trim(
            std::string(passage.substr(sentences[0].begin, sentences[0].end - sentences[0].begin)));
        std::string question;
        std::string cur;
        for (char c : s1) {
            if (std::isalpha(static_cast<unsigned char>(c))) {
                cur.push_back(c);
            } else {
                if (!cur.empty()) question += inflect_word(cur);
                cur.clear();
                if (c != '.') question.push_back(c);
            }
        }
        if (!cur.empty()) question += inflect_word(cur);
        question = ypath::detail::trim(question);
        question += "?";
        auto words = content_words(s1, 7);
        std::string keywords;
        int added = 0;
        for (const auto& w : words) {
            if (added >= 3) break;
            if (!keywords.empty()) keywords += "; ";
            keywords += w;
            ++added;
        }
        if (added < 3) return "SKIP";
        return "QUESTION: " + question + "\nANSWER: " + s1 + "\nKEYWORDS: " + keywords;
    }

    static std::string draft_extract(std::string_view user) {
        namespace P = prompts;
        std::string ev = ypath::detail::extract_block(user, P::kEvidenceBegin, P::kEvidenceEnd);
        if (ypath::detail::trim(ev).empty())
            return "The available evidence is insufficient to answer.";
        // entries look like "[k] (ref)\ntext", separated by blank lines
        std::string out;
        size_t pos = 0;
        int used = 0;
        while (used < 2 && pos < ev.size()) {
            size_t open = ev.find('[', pos);
            if (open == std::string_view::npos) break;
            size_t close = ev.find(']', open);
            size_t nl = ev.find('\n', open);
            if (close == std::string::npos || nl == std::string::npos) break;
            std::string k = ev.substr(open + 1, close - open - 1);
            size_t end = ev.find("\n\n", nl);
            if (end == std::string::npos) end = ev.size();
            std::string body = ev.substr(nl + 1, end - nl - 1);
            auto sents = ypath::detail::split_sentences(body);
            std::string first =
                sents.empty() ? ypath::detail::trim(body)
                              : ypath::detail::trim(std::string(
                                    body.substr(sents[0].begin, sents[0].end - sents[0].begin)));
            if (!first.empty()) {
                if (!out.empty()) out.push_back(' ');
                out += first + " [" + k + "]";
                ++used;
            }
            pos = end;
        }
        return out.empty() ? "The available evidence is insufficient to answer." : out;
    }

    std::vector<ChatRule> rules_;
    ChatRule default_rule_{{}, "const", "OK", 3, 4};
    std::function<std::string(const ChatRequest&)> handler_;
    uint32_t embed_dim_ = 384;
    std::string embed_mode_ = "hash";
    bool embed_unnormalized_ = false;
    int delay_ms_ = 0;
    std::atomic<uint64_t> chat_calls_{0};
    std::atomic<uint64_t> embed_calls_{0};
    std::atomic<uint64_t> embed_texts_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_in_flight_{0};
};

// ---------------------------------------------------------------------------
// Disk cache
// ---------------------------------------------------------------------------

/// Append-only directory of key -> JSON records. Writes go through a temp
/// file and an atomic rename so concurrent writers never expose partial
/// records. No eviction.
class DiskCache {
public:
    DiskCache() = default;

    explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }

    bool enabled() const { return !dir_.empty(); }

    std::optional<nlohmann::json> get(const std::string& key) const {
        if (!enabled()) return std::nullopt;
        std::ifstream in(record_path(key));
        if (!in) return std::nullopt;
        try {
            nlohmann::json j;
            in >> j;
            return j;
        } catch (const std::exception&) {
            return std::nullopt;  // unreadable record = miss; it will be rewritten
        }
    }

    void put(const std::string& key, const nlohmann::json& value) const {
        if (!enabled()) return;
        auto final_path = record_path(key);
        auto tmp = final_path;
        tmp += ".tmp" + std::to_string(
                   std::hash<std::thread::id>{}(std::this_thread::get_id()) & 0xffff);
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << value.dump();
            if (!out) throw DataError("cache write failed: " + tmp.string());
        }
        std::filesystem::rename(tmp, final_path);
    }

private:
    std::filesystem::path record_path(const std::string& key) const {
        return dir_ / (key + ".json");
    }

    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

/// Uniform client for chat + embedding providers: content-addressed response
/// cache, bounded retries with backoff, and a per-provider in-flight bound.
/// Thread-safe; share one instance per process.
class Gateway {
public:
    Gateway(std::filesystem::path cache_dir, std::shared_ptr<Backend> backend)
        : cache_(std::move(cache_dir)), backend_(std::move(backend)) {}

    /// Stable across processes; differs whenever model, prompt bytes,
    /// temperature, max_tokens, or seed differ. No whitespace canonicalization
    /// on purpose: prompts are cached byte-exactly.
    static std::string chat_cache_key(const ProviderConfig& cfg, const ChatRequest& req) {
        char tbuf[32];
        std::snprintf(tbuf, sizeof(tbuf), "%.17g", req.temperature);
        detail::Sha256 h;
        h.update("chat\x1f");
        h.update(cfg.model_id);
        h.update("\x1f");
        h.update(req.system_text);
        h.update("\x1f");
        h.update(req.user_text);
        h.update("\x1f");
        h.update(tbuf);
        h.update("\x1f");
        h.update(std::to_string(req.max_tokens));
        h.update("\x1f");
        h.update(req.seed ? std::to_string(*req.seed) : "none");
        auto d = h.digest();
        return detail::hex_encode(d.data(), d.size());
    }

    static std::string embed_cache_key(const ProviderConfig& cfg, const std::string& text) {
        detail::Sha256 h;
        h.update("embed\x1f");
        h.update(cfg.model_id);
        h.update("\x1f");
        h.update(text);
        auto d = h.digest();
        return detail::hex_encode(d.data(), d.size());
    }

    std::string chat(const ProviderConfig& cfg, const ChatRequest& req) {
        cfg.validate();
        if (req.user_text.empty()) throw DataError("chat: user_text must be non-empty");
        if (req.temperature < 0 || req.temperature > 2)
            throw DataError("chat: temperature out of [0,2]");
        std::string key = chat_cache_key(cfg, req);
        if (auto hit = cache_.get(key)) {
            if (hit->contains("response")) {
                cache_hits_.fetch_add(1);
                return (*hit)["response"].get<std::string>();
            }
        }
        cache_misses_.fetch_add(1);
        std::string response = with_retries(cfg, [&] {
            Slot slot(semaphore_for(cfg));
            return backend_->chat(cfg, req);
        });
        cache_.put(key, nlohmann::json{{"kind", "chat"}, {"response", response}});
        return response;
    }

    /// Embeds texts with per-text caching; only cache misses reach the
    /// backend, batched `batch_size` at a time. Vectors are unit-normalized
    /// locally regardless of what the provider returns.
    EmbeddingBatch embed(const ProviderConfig& cfg, const std::vector<std::string>& texts,
                         size_t batch_size = 64) {
        cfg.validate();
        if (texts.empty()) throw DataError("embed: texts must be non-empty");
        for (const auto& t : texts)
            if (t.empty()) throw DataError("embed: every text must be non-empty");
        if (batch_size == 0) batch_size = 1;

        EmbeddingBatch batch;
        batch.texts = texts;
        batch.vectors.resize(texts.size());
        std::vector<size_t> missing;
        for (size_t i = 0; i < texts.size(); ++i) {
            std::string key = embed_cache_key(cfg, texts[i]);
            if (auto hit = cache_.get(key)) {
                if (hit->contains("vector")) {
                    cache_hits_.fetch_add(1);
                    batch.vectors[i] = (*hit)["vector"].get<std::vector<float>>();
                    continue;
                }
            }
            missing.push_back(i);
        }
        cache_misses_.fetch_add(missing.size());
        for (size_t off = 0; off < missing.size(); off += batch_size) {
            size_t n = std::min(batch_size, missing.size() - off);
            std::vector<std::string> chunk;
            chunk.reserve(n);
            for (size_t j = 0; j < n; ++j) chunk.push_back(texts[missing[off + j]]);
            auto vectors = with_retries(cfg, [&] {
                Slot slot(semaphore_for(cfg));
                return backend_->embed(cfg, chunk);
            });
            if (vectors.size() != n)
                throw ProtocolError("embedding count mismatch: got " +
                                    std::to_string(vectors.size()) + " for " + std::to_string(n));
            for (size_t j = 0; j < n; ++j) {
                detail::unit_normalize(vectors[j]);
                batch.vectors[missing[off + j]] = vectors[j];
                cache_.put(embed_cache_key(cfg, chunk[j]),
                           nlohmann::json{{"kind", "embed"}, {"vector", vectors[j]}});
            }
        }
        for (const auto& v : batch.vectors) {
            if (batch.dim == 0) batch.dim = static_cast<uint32_t>(v.size());
            if (v.size() != batch.dim || v.empty())
                throw ProtocolError("embedding dimensions inconsistent across batch");
        }
        return batch;
    }

    uint64_t cache_hits() const { return cache_hits_.load(); }
    uint64_t cache_misses() const { return cache_misses_.load(); }
    Backend& backend() { return *backend_; }

private:
    struct Semaphore {
        explicit Semaphore(int slots) : available(slots) {}
        void acquire() {
            std::unique_lock<std::mutex> lock(mu);
            cv.wait(lock, [&] { return available > 0; });
            --available;
        }
        void release() {
            {
                std::lock_guard<std::mutex> lock(mu);
                ++available;
            }
            cv.notify_one();
        }
        std::mutex mu;
        std::condition_variable cv;
        int available;
    };

    struct Slot {
        explicit Slot(Semaphore& s) : sem(s) { sem.acquire(); }
        ~Slot() { sem.release(); }
        Semaphore& sem;
    };

    Semaphore& semaphore_for(const ProviderConfig& cfg) {
        std::lock_guard<std::mutex> lock(sem_mu_);
        std::string key = cfg.base_url + "\x1f" + cfg.model_id;
        auto it = semaphores_.find(key);
        if (it == semaphores_.end())
            it = semaphores_.emplace(key, std::make_unique<Semaphore>(cfg.max_in_flight)).first;
        return *it->second;
    }

    template <typename Fn>
    auto with_retries(const ProviderConfig& cfg, Fn&& fn) -> decltype(fn()) {
        for (int attempt = 0;; ++attempt) {
            try {
                return fn();
            } catch (const TransportError&) {
                if (attempt >= cfg.max_retries) throw;
                std::this_thread::sleep_for(std::chrono::milliseconds(10 * (attempt + 1)));
            }
        }
    }

    DiskCache cache_;
    std::shared_ptr<Backend> backend_;
    std::mutex sem_mu_;
    std::map<std::string, std::unique_ptr<Semaphore>> semaphores_;
    std::atomic<uint64_t> cache_hits_{0};
    std::atomic<uint64_t> cache_misses_{0};
};

}  // namespace ypath

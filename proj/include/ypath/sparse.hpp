#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ypath/common.hpp"
#include "ypath/detail/binio.hpp"
#include "ypath/lexicon.hpp"
#include "ypath/store.hpp"

namespace ypath {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
    double lexicon_term_boost = 1.0;  // multiplier for multi-unit lexicon terms
};

/// BM25 inverted index over lexicon tokens. Rows are ordered by passage_ref
/// (string order) so postings lists are monotone row sequences. Immutable
/// after build/load; concurrent scoring is safe.
class SparseIndex {
public:
    static constexpr char kMagic[4] = {'Y', 'P', 'S', 'I'};
    static constexpr uint32_t kFormatVersion = 1;

    SparseIndex() = default;

    static SparseIndex build(const Store& store, std::shared_ptr<const Lexicon> lexicon,
                             Bm25Params params = {}) {
        if (store.empty()) throw IndexError("sparse build: store is empty");
        if (!lexicon) throw ConfigError("sparse build: lexicon required");
        SparseIndex idx;
        idx.params_ = params;
        idx.lexicon_ = std::move(lexicon);
        idx.lexicon_version_ = idx.lexicon_->version();

        std::vector<const Passage*> order;
        order.reserve(store.size());
        for (const auto& p : store.scan()) order.push_back(&p);
        std::sort(order.begin(), order.end(),
                  [](const Passage* a, const Passage* b) { return a->passage_id < b->passage_id; });

        idx.ids_.reserve(order.size());
        idx.doc_lengths_.reserve(order.size());
        double total_len = 0;
        for (size_t row = 0; row < order.size(); ++row) {
            auto tokens = tokenize_words(order[row]->text, *idx.lexicon_);
            idx.ids_.push_back(order[row]->passage_id);
            idx.doc_lengths_.push_back(static_cast<uint32_t>(tokens.size()));
            total_len += double(tokens.size());
            std::map<std::string, uint32_t> tf;
            for (const auto& t : tokens) ++tf[t];
            for (const auto& [term, count] : tf)
                idx.postings_[term].push_back({static_cast<uint32_t>(row), count});
        }
        idx.avgdl_ = order.empty() ? 0.0 : total_len / double(order.size());
        return idx;
    }

    size_t doc_count() const { return ids_.size(); }
    size_t term_count() const { return postings_.size(); }
    double avgdl() const { return avgdl_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<uint32_t>& doc_lengths() const { return doc_lengths_; }
    const std::string& lexicon_version() const { return lexicon_version_; }
    const Bm25Params& params() const { return params_; }

    double idf(const std::string& term) const {
        auto it = postings_.find(term);
        size_t df = it == postings_.end() ? 0 : it->second.size();
        double n = double(ids_.size());
        return std::log(1.0 + (n - double(df) + 0.5) / (double(df) + 0.5));
    }

    /// BM25 over the query's word tokens; query-term multiplicity counts.
    /// Passages matching no query term are absent from the result.
    std::unordered_map<std::string, double> score(std::string_view query_text) const {
        require_lexicon();
        std::unordered_map<uint32_t, double> by_row;
        for (const auto& term : tokenize_words(query_text, *lexicon_)) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            double w = idf(term);
            if (params_.lexicon_term_boost != 1.0 && lexicon_->has_folded(term))
                w *= params_.lexicon_term_boost;
            for (const auto& [row, tf] : it->second) {
                double dl = double(doc_lengths_[row]);
                double denom = double(tf) + params_.k1 * (1.0 - params_.b + params_.b * dl / avgdl_);
                by_row[row] += w * (double(tf) * (params_.k1 + 1.0)) / denom;
            }
        }
        std::unordered_map<std::string, double> out;
        out.reserve(by_row.size());
        for (const auto& [row, s] : by_row) out[ids_[row]] = s;
        return out;
    }

    std::vector<std::pair<std::string, double>> top_k(std::string_view query_text, size_t k) const {
        if (k < 1) throw ConfigError("sparse top_k: k must be >= 1");
        auto scores = score(query_text);
        std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (ranked.size() > k) ranked.resize(k);
        return ranked;
    }

    void save(const std::filesystem::path& path) const {
        std::string buf;
        buf.append(kMagic, 4);
        detail::write_u32(buf, kFormatVersion);
        detail::write_str(buf, lexicon_version_);
        detail::write_f64(buf, params_.k1);
        detail::write_f64(buf, params_.b);
        detail::write_f64(buf, params_.lexicon_term_boost);
        detail::write_u64(buf, ids_.size());
        for (const auto& id : ids_) detail::write_str(buf, id);
        for (uint32_t dl : doc_lengths_) detail::write_u32(buf, dl);
        detail::write_u64(buf, postings_.size());
        for (const auto& [term, plist] : postings_) {
            detail::write_str(buf, term);
            detail::write_u64(buf, plist.size());
            uint32_t prev = 0;
            for (size_t i = 0; i < plist.size(); ++i) {
                uint32_t row = plist[i].first;
                detail::write_u32(buf, i == 0 ? row : row - prev);
                detail::write_u32(buf, plist[i].second);
                prev = row;
            }
        }
        Store::write_file(path, buf);
    }

    static SparseIndex load(const std::filesystem::path& path,
                            std::shared_ptr<const Lexicon> lexicon) {
        std::string buf = Store::read_file(path);
        size_t pos = 0;
        if (buf.size() < 8 || buf.compare(0, 4, kMagic, 4) != 0)
            throw IndexError("sparse load: bad magic in " + path.string());
        pos = 4;
        uint32_t version = detail::read_u32(buf, pos);
        if (version != kFormatVersion)
            throw IndexError("sparse load: unsupported format version " + std::to_string(version));
        SparseIndex idx;
        idx.lexicon_version_ = detail::read_str(buf, pos);
        if (lexicon && lexicon->version() != idx.lexicon_version_)
            throw IndexError("sparse load: index was built with a different lexicon (have " +
                             lexicon->version().substr(0, 12) + ", index has " +
                             idx.lexicon_version_.substr(0, 12) + ")");
        idx.lexicon_ = std::move(lexicon);
        idx.params_.k1 = detail::read_f64(buf, pos);
        idx.params_.b = detail::read_f64(buf, pos);
        idx.params_.lexicon_term_boost = detail::read_f64(buf, pos);
        uint64_t n = detail::read_u64(buf, pos);
        idx.ids_.reserve(n);
        for (uint64_t i = 0; i < n; ++i) idx.ids_.push_back(detail::read_str(buf, pos));
        idx.doc_lengths_.reserve(n);
        double total = 0;
        for (uint64_t i = 0; i < n; ++i) {
            idx.doc_lengths_.push_back(detail::read_u32(buf, pos));
            total += double(idx.doc_lengths_.back());
        }
        idx.avgdl_ = n == 0 ? 0.0 : total / double(n);
        uint64_t terms = detail::read_u64(buf, pos);
        for (uint64_t t = 0; t < terms; ++t) {
            std::string term = detail::read_str(buf, pos);
            uint64_t m = detail::read_u64(buf, pos);
            auto& plist = idx.postings_[term];
            plist.reserve(m);
            uint32_t row = 0;
            for (uint64_t i = 0; i < m; ++i) {
                uint32_t delta = detail::read_u32(buf, pos);
                uint32_t tf = detail::read_u32(buf, pos);
                row = (i == 0) ? delta : row + delta;
                if (row >= idx.ids_.size())
                    throw IndexError("sparse load: posting row out of range");
                plist.push_back({row, tf});
            }
        }
        if (pos != buf.size()) throw IndexError("sparse load: trailing bytes in " + path.string());
        return idx;
    }

private:
    void require_lexicon() const {
        if (!lexicon_) throw IndexError("sparse: no lexicon attached");
    }

    std::map<std::string, std::vector<std::pair<uint32_t, uint32_t>>> postings_;
    std::vector<std::string> ids_;
    std::vector<uint32_t> doc_lengths_;
    double avgdl_ = 0.0;
    Bm25Params params_;
    std::string lexicon_version_;
    std::shared_ptr<const Lexicon> lexicon_;
};

}  // namespace ypath

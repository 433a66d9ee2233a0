#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ypath/common.hpp"
#include "ypath/detail/hash.hpp"
#include "ypath/gateway.hpp"
#include "ypath/store.hpp"

namespace ypath {

/// Exact cosine-similarity index: unit-normalized rows, brute-force scoring.
/// Immutable after build/load; concurrent queries are safe.
class DenseIndex {
public:
    DenseIndex() = default;

    static DenseIndex build(const Store& store, Gateway& gateway, const ProviderConfig& provider,
                            size_t batch_size = 64) {
        if (store.empty()) throw IndexError("dense build: store is empty");
        DenseIndex idx;
        idx.provider_model_id_ = provider.model_id;
        std::vector<std::string> texts;
        texts.reserve(store.size());
        for (const auto& p : store.scan()) {
            idx.ids_.push_back(p.passage_id);
            texts.push_back(p.text);
        }
        EmbeddingBatch batch = gateway.embed(provider, texts, batch_size);
        idx.dim_ = batch.dim;
        idx.matrix_.reserve(size_t(idx.dim_) * idx.ids_.size());
        for (const auto& row : batch.vectors)
            idx.matrix_.insert(idx.matrix_.end(), row.begin(), row.end());
        return idx;
    }

    uint32_t dim() const { return dim_; }
    size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::string& provider_model_id() const { return provider_model_id_; }

    const float* row(size_t i) const { return matrix_.data() + size_t(dim_) * i; }

    std::optional<size_t> index_of(const std::string& passage_id) const {
        for (size_t i = 0; i < ids_.size(); ++i)
            if (ids_[i] == passage_id) return i;
        return std::nullopt;
    }

    std::vector<float> row_copy(size_t i) const {
        return std::vector<float>(row(i), row(i) + dim_);
    }

    std::vector<std::pair<std::string, double>> top_k(const std::vector<float>& query,
                                                      size_t k) const {
        if (k < 1) throw ConfigError("dense top_k: k must be >= 1");
        if (query.size() != dim_)
            throw IndexError("dense top_k: query dim " + std::to_string(query.size()) +
                             " != index dim " + std::to_string(dim_));
        std::vector<std::pair<std::string, double>> scored;
        scored.reserve(ids_.size());
        for (size_t i = 0; i < ids_.size(); ++i) {
            const float* r = row(i);
            double dot = 0;
            for (uint32_t d = 0; d < dim_; ++d) dot += double(r[d]) * double(query[d]);
            scored.emplace_back(ids_[i], dot);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (scored.size() > k) scored.resize(k);
        return scored;
    }

    /// Directory layout: vectors.f32 (raw little-endian floats, row-major)
    /// plus a manifest naming dim, count, provider, and the file's hash.
    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::string raw(reinterpret_cast<const char*>(matrix_.data()),
                        matrix_.size() * sizeof(float));
        Store::write_file(dir / "vectors.f32", raw);
        std::string manifest;
        manifest += "dim\t" + std::to_string(dim_) + "\n";
        manifest += "count\t" + std::to_string(ids_.size()) + "\n";
        manifest += "model\t" + provider_model_id_ + "\n";
        manifest += "vectors_sha256\t" + detail::sha256_hex(raw) + "\n";
        for (const auto& id : ids_) manifest += "id\t" + id + "\n";
        Store::write_file(dir / "manifest.tsv", manifest);
    }

    static DenseIndex load(const std::filesystem::path& dir) {
        std::string manifest = Store::read_file(dir / "manifest.tsv");
        DenseIndex idx;
        size_t count = 0;
        std::string want_hash;
        Store::for_each_line(manifest, [&](const std::string& line) {
            size_t tab = line.find('\t');
            if (tab == std::string::npos) throw IndexError("dense load: bad manifest line");
            std::string key = line.substr(0, tab);
            std::string val = line.substr(tab + 1);
            if (key == "dim")
                idx.dim_ = static_cast<uint32_t>(std::stoul(val));
            else if (key == "count")
                count = std::stoul(val);
            else if (key == "model")
                idx.provider_model_id_ = val;
            else if (key == "vectors_sha256")
                want_hash = val;
            else if (key == "id")
                idx.ids_.push_back(val);
        });
        if (idx.ids_.size() != count)
            throw IndexError("dense load: manifest count disagrees with id list");
        std::string raw = Store::read_file(dir / "vectors.f32");
        if (raw.size() != size_t(count) * idx.dim_ * sizeof(float))
            throw IndexError("dense load: vector file size mismatch (want " +
                             std::to_string(size_t(count) * idx.dim_ * sizeof(float)) + ", have " +
                             std::to_string(raw.size()) + ")");
        if (detail::sha256_hex(raw) != want_hash)
            throw IndexError("dense load: vector file hash mismatch");
        idx.matrix_.resize(size_t(count) * idx.dim_);
        std::memcpy(idx.matrix_.data(), raw.data(), raw.size());
        return idx;
    }

    /// Test/bench hook: adopt prebuilt rows directly.
    static DenseIndex from_rows(std::vector<std::string> ids, std::vector<std::vector<float>> rows,
                                std::string model_id = "inline") {
        DenseIndex idx;
        idx.ids_ = std::move(ids);
        idx.provider_model_id_ = std::move(model_id);
        if (!rows.empty()) idx.dim_ = static_cast<uint32_t>(rows[0].size());
        for (const auto& r : rows) {
            if (r.size() != idx.dim_) throw IndexError("from_rows: ragged rows");
            idx.matrix_.insert(idx.matrix_.end(), r.begin(), r.end());
        }
        return idx;
    }

private:
    uint32_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> matrix_;  // row-major, unit rows
    std::string provider_model_id_;
};

inline std::vector<float> embed_query(Gateway& gateway, const ProviderConfig& provider,
                                      const std::string& text) {
    auto batch = gateway.embed(provider, {text}, 1);
    return batch.vectors.at(0);
}

}  // namespace ypath

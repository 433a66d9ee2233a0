#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ypath/common.hpp"

namespace ypath {

struct RetrievalConfig {
    size_t pool_k = 20;
    double w_dense = 0.7;

    double w_sparse() const { return 1.0 - w_dense; }

    void validate() const {
        if (pool_k < 1) throw ConfigError("retrieval: pool_k must be >= 1");
        if (w_dense < 0.0 || w_dense > 1.0) throw ConfigError("retrieval: w_dense must be in [0,1]");
    }
};

struct Candidate {
    std::string passage_ref;
    std::optional<double> dense_raw;
    std::optional<double> sparse_raw;
    double dense_norm = 0.0;
    double sparse_norm = 0.0;
    double fused = 0.0;
};

/// (s - min) / (max - min); all equal -> 0.5 each; empty -> empty.
inline std::vector<double> normalize_minmax(const std::vector<double>& scores) {
    if (scores.empty()) return {};
    double lo = scores[0], hi = scores[0];
    for (double s : scores) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    std::vector<double> out;
    out.reserve(scores.size());
    if (hi == lo) {
        out.assign(scores.size(), 0.5);
        return out;
    }
    for (double s : scores) out.push_back((s - lo) / (hi - lo));
    return out;
}

/// Union of both channel lists, per-channel min-max over union members that
/// carry a score in that channel (absent -> 0), linear blend, rank by fused
/// score descending with passage_ref as the tie-break, truncated to pool_k.
inline std::vector<Candidate> fuse(const std::vector<std::pair<std::string, double>>& dense_list,
                                   const std::vector<std::pair<std::string, double>>& sparse_list,
                                   const RetrievalConfig& cfg = {}) {
    cfg.validate();
    std::map<std::string, Candidate> pool;
    for (const auto& [ref, s] : dense_list) {
        auto& c = pool[ref];
        c.passage_ref = ref;
        c.dense_raw = s;
    }
    for (const auto& [ref, s] : sparse_list) {
        auto& c = pool[ref];
        c.passage_ref = ref;
        c.sparse_raw = s;
    }

    auto normalize_channel = [&](auto raw_of, auto norm_of) {
        std::vector<Candidate*> present;
        std::vector<double> raws;
        for (auto& [_, c] : pool) {
            if (raw_of(c)) {
                present.push_back(&c);
                raws.push_back(*raw_of(c));
            }
        }
        auto norms = normalize_minmax(raws);
        for (size_t i = 0; i < present.size(); ++i) norm_of(*present[i]) = norms[i];
    };
    normalize_channel([](Candidate& c) { return c.dense_raw; },
                      [](Candidate& c) -> double& { return c.dense_norm; });
    normalize_channel([](Candidate& c) { return c.sparse_raw; },
                      [](Candidate& c) -> double& { return c.sparse_norm; });

    std::vector<Candidate> out;
    out.reserve(pool.size());
    for (auto& [_, c] : pool) {
        c.fused = cfg.w_dense * c.dense_norm + cfg.w_sparse() * c.sparse_norm;
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.fused != b.fused) return a.fused > b.fused;
        return a.passage_ref < b.passage_ref;
    });
    if (out.size() > cfg.pool_k) out.resize(cfg.pool_k);
    return out;
}

}  // namespace ypath

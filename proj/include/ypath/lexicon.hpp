#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ypath/common.hpp"
#include "ypath/detail/hash.hpp"
#include "ypath/detail/parallel.hpp"
#include "ypath/detail/text.hpp"
#include "ypath/gateway.hpp"
#include "ypath/prompts.hpp"
#include "ypath/store.hpp"

namespace ypath {

struct TermCandidate {
    std::string term;
    uint64_t frequency = 0;
    double cohesion_pmi = 0.0;   // bits, worst split point
    double left_entropy = 0.0;   // bits
    double right_entropy = 0.0;  // bits
};

enum class TermCategory { PathologySpecific, GenericMedical };
enum class TermOrigin { Seed, Mined };

inline std::string to_string(TermCategory c) {
    return c == TermCategory::PathologySpecific ? "pathology_specific" : "generic_medical";
}
inline std::string to_string(TermOrigin o) { return o == TermOrigin::Seed ? "seed" : "mined"; }

struct LexiconEntry {
    std::string term;  // normalized + casefolded
    TermCategory category = TermCategory::PathologySpecific;
    TermOrigin origin = TermOrigin::Mined;
    bool validated = false;
};

/// Immutable after construction/loading; safe to share across threads.
class Lexicon {
public:
    void add(LexiconEntry entry) {
        entry.term = detail::normalize_casefold(entry.term);
        if (entry.term.empty()) throw DataError("lexicon: empty term");
        auto [it, inserted] = index_.emplace(entry.term, entries_.size());
        if (inserted) {
            max_term_bytes_ = std::max(max_term_bytes_, entry.term.size());
            entries_.push_back(std::move(entry));
        } else {
            entries_[it->second] = std::move(entry);
        }
        version_.clear();
    }

    bool contains(std::string_view term) const {
        return index_.count(detail::normalize_casefold(term)) > 0;
    }

    const std::vector<LexiconEntry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    size_t max_term_bytes() const { return max_term_bytes_; }

    bool has_folded(std::string_view folded_term) const { return index_.count(std::string(folded_term)) > 0; }

    const std::string& version() const {
        if (version_.empty()) version_ = detail::sha256_hex(serialize());
        return version_;
    }

    std::string serialize() const {
        std::vector<const LexiconEntry*> sorted;
        sorted.reserve(entries_.size());
        for (const auto& e : entries_) sorted.push_back(&e);
        std::sort(sorted.begin(), sorted.end(),
                  [](const LexiconEntry* a, const LexiconEntry* b) { return a->term < b->term; });
        std::string out;
        for (const auto* e : sorted) {
            out += e->term;
            out.push_back('\t');
            out += to_string(e->category);
            out.push_back('\t');
            out += to_string(e->origin);
            out.push_back('\t');
            out += e->validated ? "true" : "false";
            out.push_back('\n');
        }
        return out;
    }

    void save(const std::filesystem::path& path) const {
        Store::write_file(path, serialize());
    }

    static Lexicon load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw DataError("lexicon: cannot read " + path.string());
        Lexicon lex;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::vector<std::string> cols;
            size_t pos = 0;
            while (pos <= line.size()) {
                size_t tab = line.find('\t', pos);
                if (tab == std::string::npos) {
                    cols.push_back(line.substr(pos));
                    break;
                }
                cols.push_back(line.substr(pos, tab - pos));
                pos = tab + 1;
            }
            if (cols.size() != 4)
                throw DataError("lexicon: bad line " + std::to_string(lineno) + " in " +
                                path.string());
            LexiconEntry e;
            e.term = cols[0];
            if (cols[1] == "pathology_specific")
                e.category = TermCategory::PathologySpecific;
            else if (cols[1] == "generic_medical")
                e.category = TermCategory::GenericMedical;
            else
                throw DataError("lexicon: unknown category: " + cols[1]);
            if (cols[2] == "seed")
                e.origin = TermOrigin::Seed;
            else if (cols[2] == "mined")
                e.origin = TermOrigin::Mined;
            else
                throw DataError("lexicon: unknown origin: " + cols[2]);
            e.validated = (cols[3] == "true");
            lex.add(std::move(e));
        }
        return lex;
    }

private:
    std::vector<LexiconEntry> entries_;
    std::unordered_map<std::string, size_t> index_;
    size_t max_term_bytes_ = 0;
    mutable std::string version_;
};

// ---------------------------------------------------------------------------
// New-word mining
// ---------------------------------------------------------------------------

namespace detail {

inline std::string join_units(const std::vector<std::string>& units, size_t begin, size_t len) {
    std::string out;
    for (size_t i = 0; i < len; ++i) {
        if (i) out.push_back(' ');
        out += units[begin + i];
    }
    return out;
}

inline double entropy_bits(const std::map<std::string, uint64_t>& counts) {
    uint64_t total = 0;
    for (const auto& [_, c] : counts) total += c;
    if (total == 0) return 0.0;
    double h = 0.0;
    for (const auto& [_, c] : counts) {
        double p = double(c) / double(total);
        h -= p * std::log2(p);
    }
    return h < 0 ? 0.0 : h;
}

}  // namespace detail

/// Finds multi-unit terms by frequency, internal cohesion, and boundary
/// freedom. Units are casefolded words (alphabetic) or single characters
/// (CJK); n-grams never cross passage boundaries. Probabilities are
/// occurrence counts over the total unit count.
inline std::vector<TermCandidate> mine_candidates(const Store& store, size_t max_ngram = 6,
                                                  uint64_t min_freq = 5, unsigned workers = 4) {
    if (store.empty()) throw DataError("mine_candidates: store is empty");
    if (max_ngram < 2) throw ConfigError("mine_candidates: max_ngram must be >= 2");

    const auto& passages = store.scan();
    std::vector<std::vector<std::string>> unit_lists(passages.size());
    detail::parallel_for(passages.size(), workers, [&](size_t i) {
        unit_lists[i] = detail::segment_units(passages[i].text);
    });

    uint64_t total_units = 0;
    for (const auto& u : unit_lists) total_units += u.size();
    if (total_units == 0) throw DataError("mine_candidates: corpus has no units");

    // Pass 1: frequency of every n-gram, n = 1..max_ngram.
    unsigned shards = std::max(1u, workers);
    std::vector<std::unordered_map<std::string, uint64_t>> shard_counts(shards);
    detail::parallel_for(shards, shards, [&](size_t shard) {
        auto& counts = shard_counts[shard];
        for (size_t pi = shard; pi < unit_lists.size(); pi += shards) {
            const auto& units = unit_lists[pi];
            for (size_t i = 0; i < units.size(); ++i) {
                for (size_t n = 1; n <= max_ngram && i + n <= units.size(); ++n)
                    ++counts[detail::join_units(units, i, n)];
            }
        }
    });
    std::unordered_map<std::string, uint64_t> counts;
    for (auto& sc : shard_counts) {
        for (auto& [k, v] : sc) counts[k] += v;
        sc.clear();
    }

    // Candidates: n >= 2 grams meeting min_freq.
    struct Work {
        std::string gram;
        std::vector<std::string> units;
        uint64_t freq;
    };
    std::vector<Work> work;
    for (const auto& [gram, freq] : counts) {
        if (freq < min_freq) continue;
        std::vector<std::string> units;
        size_t pos = 0;
        while (pos <= gram.size()) {
            size_t sp = gram.find(' ', pos);
            if (sp == std::string::npos) {
                units.push_back(gram.substr(pos));
                break;
            }
            units.push_back(gram.substr(pos, sp - pos));
            pos = sp + 1;
        }
        if (units.size() >= 2) work.push_back({gram, std::move(units), freq});
    }
    std::sort(work.begin(), work.end(), [](const Work& a, const Work& b) { return a.gram < b.gram; });

    // Pass 2: neighbor distributions for surviving candidates.
    std::unordered_map<std::string, size_t> cand_index;
    for (size_t i = 0; i < work.size(); ++i) cand_index[work[i].gram] = i;
    std::vector<std::map<std::string, uint64_t>> left(work.size()), right(work.size());
    std::mutex merge_mu;
    detail::parallel_for(shards, shards, [&](size_t shard) {
        std::unordered_map<size_t, std::map<std::string, uint64_t>> l, r;
        for (size_t pi = shard; pi < unit_lists.size(); pi += shards) {
            const auto& units = unit_lists[pi];
            for (size_t i = 0; i < units.size(); ++i) {
                for (size_t n = 2; n <= max_ngram && i + n <= units.size(); ++n) {
                    auto it = cand_index.find(detail::join_units(units, i, n));
                    if (it == cand_index.end()) continue;
                    if (i > 0) ++l[it->second][units[i - 1]];
                    if (i + n < units.size()) ++r[it->second][units[i + n]];
                }
            }
        }
        std::lock_guard<std::mutex> lock(merge_mu);
        for (auto& [idx, m] : l)
            for (auto& [u, c] : m) left[idx][u] += c;
        for (auto& [idx, m] : r)
            for (auto& [u, c] : m) right[idx][u] += c;
    });

    std::vector<TermCandidate> out;
    out.reserve(work.size());
    double log_total = std::log2(double(total_units));
    for (size_t i = 0; i < work.size(); ++i) {
        const auto& w = work[i];
        // worst split: max over s of p(prefix)·p(suffix)
        double best_split = -1.0;
        for (size_t s = 1; s < w.units.size(); ++s) {
            uint64_t lc = counts.at(detail::join_units(w.units, 0, s));
            uint64_t rc = counts.at(detail::join_units(w.units, s, w.units.size() - s));
            double v = double(lc) * double(rc);
            best_split = std::max(best_split, v);
        }
        TermCandidate c;
        c.term = w.gram;
        c.frequency = w.freq;
        // log2( (f/T) / (lc/T · rc/T) ) computed in log space
        c.cohesion_pmi = std::log2(double(w.freq)) - std::log2(best_split) + log_total;
        c.left_entropy = detail::entropy_bits(left[i]);
        c.right_entropy = detail::entropy_bits(right[i]);
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const TermCandidate& a, const TermCandidate& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return a.term < b.term;
    });
    return out;
}

struct FilterThresholds {
    double min_pmi = 3.0;
    double min_entropy = 1.0;
    uint64_t min_freq = 5;
};

inline std::vector<TermCandidate> filter_candidates(const std::vector<TermCandidate>& cands,
                                                    const FilterThresholds& t,
                                                    const Lexicon* seed = nullptr) {
    std::vector<TermCandidate> out;
    for (const auto& c : cands) {
        if (c.frequency < t.min_freq) continue;
        if (c.cohesion_pmi < t.min_pmi) continue;
        if (c.left_entropy < t.min_entropy || c.right_entropy < t.min_entropy) continue;
        if (seed && seed->contains(c.term)) continue;
        out.push_back(c);
    }
    return out;
}

/// Classifies each candidate with the judge provider. Verdicts other than
/// the three allowed labels are dropped; if nothing parses, that is a
/// protocol failure, not an empty lexicon.
inline std::vector<LexiconEntry> llm_validate(const std::vector<TermCandidate>& cands,
                                              Gateway& gateway, const ProviderConfig& provider) {
    std::vector<LexiconEntry> out;
    size_t unparseable = 0;
    for (const auto& c : cands) {
        ChatRequest req;
        req.system_text = prompts::kLexiconValidateSystem;
        req.user_text = std::string(prompts::kTermPrefix) + c.term;
        req.max_tokens = 16;
        std::string verdict = detail::trim(gateway.chat(provider, req));
        size_t ws = verdict.find_first_of(" \t\n|");
        if (ws != std::string::npos) verdict = verdict.substr(0, ws);
        std::transform(verdict.begin(), verdict.end(), verdict.begin(),
                       [](unsigned char ch) { return char(std::toupper(ch)); });
        if (verdict == "PATHOLOGY") {
            out.push_back({c.term, TermCategory::PathologySpecific, TermOrigin::Mined, true});
        } else if (verdict == "GENERIC_MEDICAL") {
            out.push_back({c.term, TermCategory::GenericMedical, TermOrigin::Mined, true});
        } else if (verdict != "REJECT") {
            ++unparseable;
        }
    }
    if (!cands.empty() && unparseable == cands.size())
        throw ProtocolError("llm_validate: no verdict was parseable");
    return out;
}

inline void save_candidates(const std::vector<TermCandidate>& cands,
                            const std::filesystem::path& path) {
    std::string body = "term\tfrequency\tcohesion_pmi\tleft_entropy\tright_entropy\n";
    char buf[64];
    for (const auto& c : cands) {
        std::snprintf(buf, sizeof(buf), "%llu\t%.6f\t%.6f\t%.6f",
                      static_cast<unsigned long long>(c.frequency), c.cohesion_pmi,
                      c.left_entropy, c.right_entropy);
        body += c.term + "\t" + buf + "\n";
    }
    Store::write_file(path, body);
}

inline std::vector<TermCandidate> load_candidates(const std::filesystem::path& path) {
    std::string body = Store::read_file(path);
    std::vector<TermCandidate> out;
    bool header = true;
    Store::for_each_line(body, [&](const std::string& line) {
        if (header) {
            header = false;
            return;
        }
        if (line.empty()) return;
        std::vector<std::string> cols;
        size_t start = 0;
        while (true) {
            size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() != 5) throw DataError("candidates: bad row in " + path.string());
        TermCandidate c;
        c.term = cols[0];
        c.frequency = std::strtoull(cols[1].c_str(), nullptr, 10);
        c.cohesion_pmi = std::strtod(cols[2].c_str(), nullptr);
        c.left_entropy = std::strtod(cols[3].c_str(), nullptr);
        c.right_entropy = std::strtod(cols[4].c_str(), nullptr);
        out.push_back(std::move(c));
    });
    return out;
}

// ---------------------------------------------------------------------------
// Lexicon-aware tokenization
// ---------------------------------------------------------------------------

struct Token {
    std::string text;
    bool is_word = true;  // false for punctuation
};

/// Forward maximum matching over the casefolded text: at each unit start,
/// emit the longest lexicon term beginning there (term boundaries must align
/// with unit boundaries); otherwise fall back to the unit itself. Total and
/// deterministic; punctuation comes through as single-character tokens.
inline std::vector<Token> tokenize_ex(std::string_view text, const Lexicon& lexicon) {
    std::string folded = detail::normalize_casefold(text);
    auto units = detail::segment_unit_spans(folded);
    std::vector<Token> out;
    out.reserve(units.size());
    size_t i = 0;
    while (i < units.size()) {
        if (!units[i].is_word) {
            out.push_back({folded.substr(units[i].begin, units[i].end - units[i].begin), false});
            ++i;
            continue;
        }
        size_t best_end_unit = 0;  // exclusive unit index of longest match
        if (!lexicon.empty()) {
            for (size_t j = i; j < units.size() && units[j].is_word; ++j) {
                size_t bytes = units[j].end - units[i].begin;
                if (bytes > lexicon.max_term_bytes()) break;
                std::string_view span{folded.data() + units[i].begin, bytes};
                if (lexicon.has_folded(span)) best_end_unit = j + 1;
            }
        }
        if (best_end_unit > 0) {
            out.push_back({folded.substr(units[i].begin, units[best_end_unit - 1].end - units[i].begin),
                           true});
            i = best_end_unit;
        } else {
            out.push_back({folded.substr(units[i].begin, units[i].end - units[i].begin), true});
            ++i;
        }
    }
    return out;
}

inline std::vector<std::string> tokenize(std::string_view text, const Lexicon& lexicon) {
    std::vector<std::string> out;
    for (auto& t : tokenize_ex(text, lexicon)) out.push_back(std::move(t.text));
    return out;
}

/// Word tokens only (what the sparse index consumes).
inline std::vector<std::string> tokenize_words(std::string_view text, const Lexicon& lexicon) {
    std::vector<std::string> out;
    for (auto& t : tokenize_ex(text, lexicon)) {
        if (t.is_word) out.push_back(std::move(t.text));
    }
    return out;
}

inline TokenCounter make_token_counter(std::shared_ptr<const Lexicon> lexicon) {
    return [lexicon](std::string_view text) { return tokenize_words(text, *lexicon).size(); };
}

}  // namespace ypath

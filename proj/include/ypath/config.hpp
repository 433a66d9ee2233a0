#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "ypath/common.hpp"
#include "ypath/detail/text.hpp"
#include "ypath/fusion.hpp"
#include "ypath/gateway.hpp"
#include "ypath/generate.hpp"
#include "ypath/sed.hpp"

namespace ypath {

/// Flat `key = value` file with dotted section keys, `#` comments, blank
/// lines ignored. Environment variables override file values: key
/// `retrieval.pool_k` maps to `YPRAG_RETRIEVAL_POOL_K`.
class Config {
public:
    Config() = default;

    static Config from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot read " + path.string());
        Config cfg;
        cfg.path_ = path;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: line " + std::to_string(lineno) +
                                  " is not key = value: " + t);
            std::string key = detail::trim(t.substr(0, eq));
            std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config: empty key on line " + std::to_string(lineno));
            cfg.values_[key] = value;
        }
        return cfg;
    }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::optional<std::string> get(const std::string& key) const {
        std::string env_name = "YPRAG_";
        for (char c : key) env_name += (c == '.') ? '_' : char(std::toupper(uc(c)));
        if (const char* env = std::getenv(env_name.c_str())) return std::string(env);
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        auto v = get(key);
        return v ? *v : fallback;
    }

    std::string require(const std::string& key) const {
        auto v = get(key);
        if (!v || v->empty()) throw ConfigError("config: missing required key '" + key + "'");
        return *v;
    }

    double get_double(const std::string& key, double fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        try {
            return std::stod(*v);
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not a number: " + *v);
        }
    }

    size_t get_size(const std::string& key, size_t fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        try {
            return std::stoul(*v);
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not a count: " + *v);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError("config: key '" + key + "' is not a boolean: " + *v);
    }

    // Paths. Only cache_dir has a default; the rest are data the user owns.
    std::filesystem::path store_dir() const { return require("paths.store_dir"); }
    std::filesystem::path lexicon_file() const { return require("paths.lexicon_file"); }
    std::filesystem::path sparse_index() const { return require("paths.sparse_index"); }
    std::filesystem::path dense_dir() const { return require("paths.dense_dir"); }
    std::filesystem::path cache_dir() const { return get_or("paths.cache_dir", ".ypath-cache"); }

    /// providers.<name>.{base_url,model_id,api_key_env,timeout_s,max_retries,max_in_flight}
    ProviderConfig provider(const std::string& name) const {
        std::string prefix = "providers." + name + ".";
        ProviderConfig p;
        p.base_url = get_or(prefix + "base_url", "");
        p.model_id = get_or(prefix + "model_id", name);
        p.api_key_env = get_or(prefix + "api_key_env", "");
        p.timeout_s = get_double(prefix + "timeout_s", 30.0);
        p.max_retries = static_cast<int>(get_size(prefix + "max_retries", 2));
        p.max_in_flight = static_cast<int>(get_size(prefix + "max_in_flight", 4));
        p.validate();
        return p;
    }

    RetrievalConfig retrieval() const {
        RetrievalConfig r;
        r.pool_k = get_size("retrieval.pool_k", 20);
        r.w_dense = get_double("retrieval.w_dense", 0.7);
        r.validate();
        return r;
    }

    SedConfig sed() const {
        SedConfig s;
        s.threshold = get_double("sed.threshold", 0.5);
        s.alpha = get_double("sed.alpha", 0.5);
        s.judge_provider = provider("judge");
        s.validate();
        return s;
    }

    GenerationConfig generation() const {
        GenerationConfig g;
        g.context_c = get_size("generation.context_c", 3);
        g.single_stage = get_bool("generation.single_stage", false);
        g.drafter = provider("drafter");
        g.refiner = provider("refiner");
        g.validate();
        return g;
    }

    const std::filesystem::path& source_path() const { return path_; }

private:
    static unsigned char uc(char c) { return static_cast<unsigned char>(c); }

    std::map<std::string, std::string> values_;
    std::filesystem::path path_;
};

}  // namespace ypath

#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ypath/gateway.hpp"

namespace ypath {

/// Chat + embeddings over the common REST wire protocol:
///   POST {base}/chat/completions   -> choices[0].message.content
///   POST {base}/embeddings         -> data[*].embedding
/// Connection failures, timeouts, 429 and 5xx raise TransportError (retried
/// by the gateway); malformed bodies and other 4xx raise ProtocolError.
class HttpBackend : public Backend {
public:
    std::string chat(const ProviderConfig& cfg, const ChatRequest& req) override {
        nlohmann::json body{
            {"model", cfg.model_id},
            {"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", req.system_text}},
                                    {{"role", "user"}, {"content", req.user_text}}})},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens},
        };
        if (req.seed) body["seed"] = *req.seed;
        nlohmann::json resp = post_json(cfg, "/chat/completions", body);
        try {
            return resp.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("chat response malformed: ") + e.what());
        }
    }

    std::vector<std::vector<float>> embed(const ProviderConfig& cfg,
                                          const std::vector<std::string>& texts) override {
        nlohmann::json body{{"model", cfg.model_id}, {"input", texts}};
        nlohmann::json resp = post_json(cfg, "/embeddings", body);
        try {
            const auto& data = resp.at("data");
            std::vector<std::vector<float>> out(data.size());
            for (size_t i = 0; i < data.size(); ++i) {
                const auto& item = data.at(i);
                size_t slot = item.contains("index") ? item["index"].get<size_t>() : i;
                if (slot >= out.size()) throw ProtocolError("embedding index out of range");
                out[slot] = item.at("embedding").get<std::vector<float>>();
            }
            return out;
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("embeddings response malformed: ") + e.what());
        }
    }

private:
    struct Endpoint {
        std::string origin;  // scheme://host:port
        std::string prefix;  // path part of base_url, possibly empty
    };

    static Endpoint split_base_url(const std::string& base_url) {
        auto scheme_end = base_url.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("base_url must include a scheme: " + base_url);
        auto path_start = base_url.find('/', scheme_end + 3);
        Endpoint ep;
        if (path_start == std::string::npos) {
            ep.origin = base_url;
        } else {
            ep.origin = base_url.substr(0, path_start);
            ep.prefix = base_url.substr(path_start);
            while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
        }
        return ep;
    }

    nlohmann::json post_json(const ProviderConfig& cfg, const std::string& route,
                             const nlohmann::json& body) {
        Endpoint ep = split_base_url(cfg.base_url);
        httplib::Client client(ep.origin);
        client.set_connection_timeout(std::chrono::milliseconds(
            static_cast<int64_t>(cfg.timeout_s * 1000)));
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<int64_t>(cfg.timeout_s * 1000)));
        httplib::Headers headers;
        if (!cfg.api_key_env.empty()) {
            const char* key = std::getenv(cfg.api_key_env.c_str());
            if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto res = client.Post(ep.prefix + route, headers, body.dump(), "application/json");
        if (!res)
            throw TransportError("request to " + ep.origin + route + " failed: " +
                                 httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw TransportError("provider returned status " + std::to_string(res->status));
        if (res->status != 200)
            throw ProtocolError("provider returned status " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 200));
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("provider response is not JSON: ") + e.what());
        }
    }
};

}  // namespace ypath

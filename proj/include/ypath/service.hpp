#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ypath/common.hpp"
#include "ypath/pipeline.hpp"

namespace ypath {

/// JSON-over-HTTP front end with the same schemas as the CLI's --json output.
/// GET  /v1/health            -> {"status":"ok","version":...}
/// POST /v1/search {query,k?,judge?} -> search payload
/// POST /v1/answer {question}        -> answer payload
class Service {
public:
    explicit Service(Engine& engine) : engine_(engine) { wire(); }

    /// Blocks until stop() is called from another thread.
    void run(const std::string& host, int port) {
        if (!server_.listen(host, port))
            throw TransportError("service: cannot listen on " + host + ":" +
                                 std::to_string(port));
    }

    /// Binds an OS-assigned port and serves from a background thread.
    int start(const std::string& host) {
        int port = server_.bind_to_any_port(host);
        if (port <= 0) throw TransportError("service: cannot bind on " + host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ~Service() { stop(); }

private:
    void wire() {
        server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
            nlohmann::json body = {{"status", "ok"}, {"version", kVersion}};
            res.set_content(body.dump(), "application/json");
        });
        server_.Post("/v1/search", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                nlohmann::json body = parse_body(req);
                std::string query = body.value("query", "");
                size_t k = body.value("k", size_t(0));
                bool judge = body.value("judge", false);
                return search_result_json(engine_.search(query, k, judge));
            });
        });
        server_.Post("/v1/answer", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                nlohmann::json body = parse_body(req);
                return ask_result_json(engine_.ask(body.value("question", "")));
            });
        });
    }

    static nlohmann::json parse_body(const httplib::Request& req) {
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("request body is not valid JSON: ") + e.what());
        }
    }

    template <typename Fn>
    void handle(httplib::Response& res, Fn&& fn) {
        std::lock_guard<std::mutex> lock(mutex_);
        try {
            res.set_content(fn().dump(), "application/json");
        } catch (const ConfigError& e) {
            fail(res, 400, e.what());
        } catch (const DataError& e) {
            fail(res, 400, e.what());
        } catch (const IndexError& e) {
            fail(res, 400, e.what());
        } catch (const TransportError& e) {
            fail(res, 502, e.what());
        } catch (const std::exception& e) {
            fail(res, 500, e.what());
        }
    }

    static void fail(httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        nlohmann::json body = {{"error", message}};
        res.set_content(body.dump(), "application/json");
    }

    Engine& engine_;
    httplib::Server server_;
    std::thread thread_;
    std::mutex mutex_;  // Engine lazy loading is not thread safe; serialize requests
};

}  // namespace ypath

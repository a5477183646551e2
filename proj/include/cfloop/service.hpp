#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfloop/bench.hpp"
#include "cfloop/session.hpp"

namespace cfloop {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    long ttl_seconds = 30 * 60;
    std::string cors_origin = "*";
};

struct HttpResponse {
    int status = 200;
    nlohmann::json body;
};

/// {"feature name": value, ...}; categorical values by category name.
[[nodiscard]] nlohmann::json instance_to_json(const Instance& x, const FeatureSchema& schema);
/// Inverse of instance_to_json. Throws InvalidArgument / UnknownFeature.
[[nodiscard]] Instance instance_from_json(const nlohmann::json& j, const FeatureSchema& schema);

/// JSON API over in-memory sessions. Routing lives in handle(), which is
/// transport independent; listen() serves it over HTTP. handle() may be
/// called concurrently: operations on one session are serialized by a
/// per-session mutex, distinct sessions proceed in parallel.
class Service {
public:
    using Clock = std::chrono::steady_clock;

    Service(std::vector<Workspace> workspaces, ServiceOptions opts = {});
    Service(Workspace workspace, ServiceOptions opts = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    [[nodiscard]] HttpResponse handle(std::string_view method, std::string_view path, std::string_view body);

    /// Blocking. Returns a process exit code.
    int listen();
    /// Binds to opts.host on an ephemeral port and serves on a background
    /// thread; returns the port. stop() shuts it down.
    int start_background();
    void stop();

    /// Closes and drops sessions idle for longer than the TTL.
    std::size_t sweep_expired();
    [[nodiscard]] std::size_t session_count() const;

    /// Test hook for the idle clock.
    void set_clock(std::function<Clock::time_point()> now);

private:
    struct Entry {
        std::mutex mutex;
        SessionState state;
        std::string dataset;
        Clock::time_point last_used;
    };

    HttpResponse route(std::string_view method, const std::vector<std::string>& parts, std::string_view body);
    HttpResponse list_datasets() const;
    HttpResponse get_instance(const std::string& dataset, const std::string& id) const;
    HttpResponse create_session(const nlohmann::json& body);
    HttpResponse propose_session(const std::string& id);
    HttpResponse update_session(const std::string& id, const nlohmann::json& body);
    HttpResponse accept_session(const std::string& id);
    HttpResponse session_history(const std::string& id);
    HttpResponse delete_session(const std::string& id);

    std::shared_ptr<Entry> find(const std::string& id);
    const Workspace& workspace(const std::string& name) const;
    std::string new_id();

    std::map<std::string, Workspace> workspaces_;
    ServiceOptions opts_;
    mutable std::mutex store_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::function<Clock::time_point()> now_;

    struct Http;
    std::unique_ptr<Http> http_;
};

}  // namespace cfloop

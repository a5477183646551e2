#include "cfloop/service.hpp"

#include <cmath>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "cfloop/error.hpp"

namespace cfloop {

using nlohmann::json;

namespace {

struct NotFound : std::runtime_error {
    NotFound(std::string c, const std::string& msg) : std::runtime_error(msg), code(std::move(c)) {}
    std::string code;
};

HttpResponse error_response(int status, std::string_view code, std::string_view message) {
    return {status, json{{"error", {{"code", code}, {"message", message}}}}};
}

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidState: return 409;
        case ErrorCode::DuplicateConstraint:
        case ErrorCode::MissingConstraint:
        case ErrorCode::IncompatibleConstraint:
        case ErrorCode::UnknownFeature:
        case ErrorCode::UnknownCategory:
        case ErrorCode::InvalidArgument:
        case ErrorCode::SchemaMismatch:
        case ErrorCode::FavorableInstance:
        case ErrorCode::NoOppositeClass: return 422;
        default: return 500;
    }
}

json value_to_json(const FeatureSpec& spec, double v) {
    if (spec.is_categorical()) return spec.categories.at(static_cast<std::size_t>(v));
    return v;
}

std::size_t parse_index(const std::string& s, const char* what) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::logic_error&) {
        pos = 0;
    }
    if (pos != s.size() || s.empty() || s.front() == '-')
        throw NotFound(fmt::format("unknown_{}", what), fmt::format("no {} '{}'", what, s));
    return static_cast<std::size_t>(v);
}

json diff_json(const Instance& x, const Instance& cand, const FeatureSchema& schema, double epsilon) {
    const auto xn = normalize(x, schema), cn = normalize(cand, schema);
    json out = json::array();
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const double d = schema[i].is_categorical() ? (x[i] == cand[i] ? 0.0 : 1.0) : std::abs(xn[i] - cn[i]);
        out.push_back({{"feature", schema[i].name},
                       {"from", value_to_json(schema[i], x[i])},
                       {"to", value_to_json(schema[i], cand[i])},
                       {"normalized_change", d},
                       {"changed", d > epsilon}});
    }
    return out;
}

json candidate_json(const ExplainContext& ctx, const Instance& x, const std::optional<Candidate>& best,
                    const GaParams& params) {
    json j;
    if (!best) {
        j["candidate"] = nullptr;
        j["diff"] = json::array();
        j["proximity"] = nullptr;
        j["sparsity"] = nullptr;
        j["fitness"] = nullptr;
        return j;
    }
    const auto& schema = ctx.schema();
    const auto xn = normalize(x, schema), cn = normalize(best->genome, schema);
    j["candidate"] = instance_to_json(best->genome, schema);
    j["diff"] = diff_json(x, best->genome, schema, params.epsilon);
    j["proximity"] = proximity(xn, cn, ctx.weights(), schema);
    j["sparsity"] = sparsity(xn, cn, params.epsilon, schema);
    j["fitness"] = best->fitness;
    j["prediction"] = ctx.model().predict(best->genome);
    return j;
}

json result_json(const SessionState& s, const SearchResult& r, std::size_t iteration) {
    json j = candidate_json(*s.context, s.instance, r.best, s.params);
    j["success"] = r.success;
    j["generations"] = r.generations_run;
    j["elapsed_ms"] = std::chrono::duration<double, std::milli>(r.elapsed).count();
    j["iteration"] = iteration;
    return j;
}

}  // namespace

json instance_to_json(const Instance& x, const FeatureSchema& schema) {
    schema.validate(x);
    json out = json::object();
    for (std::size_t i = 0; i < schema.size(); ++i) out[schema[i].name] = value_to_json(schema[i], x[i]);
    return out;
}

Instance instance_from_json(const json& j, const FeatureSchema& schema) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "instance must be a JSON object");
    Instance x{std::vector<double>(schema.size())};
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& spec = schema[i];
        if (!j.contains(spec.name)) throw Error(ErrorCode::InvalidArgument, fmt::format("missing feature '{}'", spec.name));
        const auto& v = j.at(spec.name);
        if (spec.is_categorical()) {
            if (!v.is_string()) throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' must be a category name", spec.name));
            const auto idx = spec.category_index(v.get<std::string>());
            if (!idx)
                throw Error(ErrorCode::UnknownCategory,
                            fmt::format("'{}' is not a category of '{}'", v.get<std::string>(), spec.name));
            x[i] = static_cast<double>(*idx);
        } else {
            if (!v.is_number()) throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' must be a number", spec.name));
            x[i] = v.get<double>();
        }
    }
    for (const auto& [key, _] : j.items())
        if (!schema.index_of(key)) throw Error(ErrorCode::UnknownFeature, fmt::format("unknown feature '{}'", key));
    schema.validate(x);
    return x;
}

struct Service::Http {
    httplib::Server server;
    std::thread thread;
};

Service::Service(std::vector<Workspace> workspaces, ServiceOptions opts)
    : opts_(std::move(opts)), now_([] { return Clock::now(); }), http_(std::make_unique<Http>()) {
    if (workspaces.empty()) throw Error(ErrorCode::InvalidArgument, "service needs at least one dataset");
    for (auto& ws : workspaces) {
        const auto name = ws.name();
        if (!workspaces_.emplace(name, std::move(ws)).second)
            throw Error(ErrorCode::InvalidArgument, fmt::format("dataset '{}' given twice", name));
    }
}

Service::Service(Workspace workspace, ServiceOptions opts) : Service(std::vector<Workspace>{std::move(workspace)}, std::move(opts)) {}

Service::~Service() { stop(); }

void Service::set_clock(std::function<Clock::time_point()> now) { now_ = std::move(now); }

std::size_t Service::session_count() const {
    std::lock_guard lock(store_mutex_);
    return sessions_.size();
}

std::size_t Service::sweep_expired() {
    const auto now = now_();
    const auto ttl = std::chrono::seconds(opts_.ttl_seconds);
    std::lock_guard lock(store_mutex_);
    std::size_t removed = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        auto& e = *it->second;
        std::unique_lock entry_lock(e.mutex, std::try_to_lock);
        if (entry_lock.owns_lock() && now - e.last_used > ttl) {
            if (e.state.status == SessionStatus::Active) e.state = close_session(e.state);
            it = sessions_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    return removed;
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) {
    std::lock_guard lock(store_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown_session", fmt::format("no session '{}'", id));
    return it->second;
}

const Workspace& Service::workspace(const std::string& name) const {
    auto it = workspaces_.find(name);
    if (it == workspaces_.end()) throw NotFound("unknown_dataset", fmt::format("no dataset '{}'", name));
    return it->second;
}

std::string Service::new_id() {
    static thread_local std::mt19937_64 gen{std::random_device{}()};
    return fmt::format("{:016x}{:016x}", gen(), gen());
}

HttpResponse Service::handle(std::string_view method, std::string_view path, std::string_view body) {
    sweep_expired();
    if (const auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
    std::vector<std::string> parts;
    for (std::size_t start = 0; start <= path.size();) {
        const auto slash = path.find('/', start);
        const auto end = slash == std::string_view::npos ? path.size() : slash;
        if (end > start) parts.emplace_back(path.substr(start, end - start));
        start = end + 1;
    }
    try {
        return route(method, parts, body);
    } catch (const NotFound& e) {
        return error_response(404, e.code, e.what());
    } catch (const Error& e) {
        return error_response(status_for(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
        return error_response(400, "malformed_request", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

HttpResponse Service::route(std::string_view method, const std::vector<std::string>& parts, std::string_view body) {
    auto payload = [&]() -> json {
        if (body.empty()) return json::object();
        try {
            return json::parse(body);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("request body is not valid JSON: {}", e.what()));
        }
    };
    auto wrong_method = [&] {
        return error_response(405, "method_not_allowed", fmt::format("{} not allowed here", method));
    };
    const std::size_t n = parts.size();
    if (n >= 1 && parts[0] == "datasets") {
        if (n == 1) return method == "GET" ? list_datasets() : wrong_method();
        if (n == 4 && parts[2] == "instances") return method == "GET" ? get_instance(parts[1], parts[3]) : wrong_method();
    }
    if (n >= 1 && parts[0] == "sessions") {
        if (n == 1) return method == "POST" ? create_session(payload()) : wrong_method();
        if (n == 2) return method == "DELETE" ? delete_session(parts[1]) : wrong_method();
        if (n == 3) {
            const auto& op = parts[2];
            if (op == "propose") return method == "POST" ? propose_session(parts[1]) : wrong_method();
            if (op == "constraints") return method == "POST" ? update_session(parts[1], payload()) : wrong_method();
            if (op == "accept") return method == "POST" ? accept_session(parts[1]) : wrong_method();
            if (op == "history") return method == "GET" ? session_history(parts[1]) : wrong_method();
        }
    }
    throw NotFound("unknown_route", "no such endpoint");
}

HttpResponse Service::list_datasets() const {
    json list = json::array();
    for (const auto& [name, ws] : workspaces_) {
        list.push_back({{"name", name},
                        {"schema", ws.full.schema.to_json()},
                        {"favorable_class", kFavorableClass},
                        {"test_size", ws.test.size()},
                        {"negatives", ws.negatives}});
    }
    return {200, json{{"datasets", std::move(list)}}};
}

HttpResponse Service::get_instance(const std::string& dataset, const std::string& id) const {
    const auto& ws = workspace(dataset);
    const auto i = parse_index(id, "instance");
    if (i >= ws.test.size()) throw NotFound("unknown_instance", fmt::format("no instance {} in '{}'", i, dataset));
    const auto& x = ws.test.rows[i];
    return {200, json{{"dataset", dataset},
                      {"instance_id", i},
                      {"values", instance_to_json(x, ws.full.schema)},
                      {"prediction", ws.model->predict(x)},
                      {"label", ws.test.labels[i]}}};
}

HttpResponse Service::create_session(const json& body) {
    if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "session request must be a JSON object");
    std::string dataset;
    if (body.contains("dataset")) dataset = body.at("dataset").get<std::string>();
    else if (workspaces_.size() == 1) dataset = workspaces_.begin()->first;
    else throw Error(ErrorCode::InvalidArgument, "dataset is required");
    const auto& ws = workspace(dataset);
    if (!body.contains("instance_id")) throw Error(ErrorCode::InvalidArgument, "instance_id is required");
    const auto& jid = body.at("instance_id");
    if (!jid.is_number_unsigned()) throw Error(ErrorCode::InvalidArgument, "instance_id must be a non-negative integer");
    const auto i = jid.get<std::size_t>();
    if (i >= ws.test.size()) throw NotFound("unknown_instance", fmt::format("no instance {} in '{}'", i, dataset));

    const auto init = parse_init_method(body.value("init", std::string{"knn"}));
    const auto strategy = parse_strategy(body.value("strategy", std::string{"fix"}));
    GaParams params = body.contains("params") ? params_from_json(body.at("params")) : GaParams{};
    ConstraintSet c0 = body.contains("constraints") ? constraints_from_json(body.at("constraints"), ws.full.schema)
                                                    : ConstraintSet{};

    auto entry = std::make_shared<Entry>();
    entry->state = start_session(ws.context, ws.test.rows[i], std::move(c0), params, init, strategy);
    entry->dataset = dataset;
    entry->last_used = now_();
    const auto& s = entry->state;
    json out{{"session_id", ""},
             {"dataset", dataset},
             {"instance_id", i},
             {"instance", instance_to_json(s.instance, ws.full.schema)},
             {"prediction", ws.model->predict(s.instance)},
             {"status", to_string(s.status)},
             {"iteration", s.iteration},
             {"constraints", constraints_to_json(s.constraints, ws.full.schema)},
             {"epsilon", s.params.epsilon},
             {"params", params_to_json(s.params)}};
    std::string id;
    {
        std::lock_guard lock(store_mutex_);
        do id = new_id();
        while (sessions_.count(id));
        sessions_.emplace(id, entry);
    }
    out["session_id"] = id;
    return {201, std::move(out)};
}

HttpResponse Service::propose_session(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    e->last_used = now_();
    auto [result, next] = propose(e->state);
    e->state = std::move(next);
    json out = result_json(e->state, result, e->state.iteration);
    out["session_id"] = id;
    out["status"] = to_string(e->state.status);
    return {200, std::move(out)};
}

HttpResponse Service::update_session(const std::string& id, const json& body) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    e->last_used = now_();
    const auto& schema = e->state.context->schema();
    if (!body.is_object() || !body.contains("updates"))
        throw Error(ErrorCode::InvalidArgument, "expected {\"updates\": [...]}");
    if (e->state.status != SessionStatus::Active)
        throw Error(ErrorCode::InvalidState,
                    fmt::format("cannot update constraints of a session that is {}", to_string(e->state.status)));
    const auto batch = batch_from_json(body.at("updates"), schema);
    e->state = update_constraints(e->state, batch);
    return {200, json{{"session_id", id},
                      {"iteration", e->state.iteration},
                      {"constraints", constraints_to_json(e->state.constraints, schema)}}};
}

HttpResponse Service::accept_session(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    e->last_used = now_();
    e->state = accept(e->state);
    json out = candidate_json(*e->state.context, e->state.instance, e->state.accepted, e->state.params);
    out["counterfactual"] = out["candidate"];
    out.erase("candidate");
    out["session_id"] = id;
    out["status"] = to_string(e->state.status);
    out["iteration"] = e->state.iteration;
    return {200, std::move(out)};
}

HttpResponse Service::session_history(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    e->last_used = now_();
    const auto& s = e->state;
    const auto& schema = s.context->schema();
    json list = json::array();
    for (const auto& h : s.history) {
        json item = result_json(s, h.result, h.iteration);
        item["constraints"] = constraints_to_json(h.constraints, schema);
        list.push_back(std::move(item));
    }
    return {200, json{{"session_id", id},
                      {"status", to_string(s.status)},
                      {"iteration", s.iteration},
                      {"constraints", constraints_to_json(s.constraints, schema)},
                      {"history", std::move(list)}}};
}

HttpResponse Service::delete_session(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    if (e->state.status == SessionStatus::Active) e->state = close_session(e->state);
    {
        std::lock_guard store(store_mutex_);
        sessions_.erase(id);
    }
    return {200, json{{"session_id", id}, {"status", to_string(e->state.status)}}};
}

namespace {

void install_routes(httplib::Server& svr, Service& service, const std::string& origin) {
    auto handler = [&service, origin](const httplib::Request& req, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        auto r = service.handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    svr.Get(R"(/.*)", handler);
    svr.Post(R"(/.*)", handler);
    svr.Delete(R"(/.*)", handler);
    svr.Options(R"(/.*)", [origin](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
}

}  // namespace

int Service::listen() {
    install_routes(http_->server, *this, opts_.cors_origin);
    fmt::print("listening on http://{}:{}\n", opts_.host, opts_.port);
    std::fflush(stdout);
    if (!http_->server.listen(opts_.host, opts_.port)) {
        fmt::print(stderr, "cannot bind {}:{}\n", opts_.host, opts_.port);
        return 1;
    }
    return 0;
}

int Service::start_background() {
    install_routes(http_->server, *this, opts_.cors_origin);
    const int port = http_->server.bind_to_any_port(opts_.host);
    if (port < 0) throw Error(ErrorCode::Io, fmt::format("cannot bind {}", opts_.host));
    http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
    http_->server.wait_until_ready();
    return port;
}

void Service::stop() {
    if (!http_) return;
    if (http_->server.is_running()) http_->server.stop();
    if (http_->thread.joinable()) http_->thread.join();
}

}  // namespace cfloop

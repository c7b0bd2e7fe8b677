#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "msstream/engine.hpp"
#include "msstream/fpca/pipeline.hpp"
#include "msstream/ingest/csv.hpp"
#include "msstream/ingest/events.hpp"
#include "msstream/service/json.hpp"
#include "msstream/service/push.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro that clashes with Eigen parameter names.
#include <httplib.h>

namespace msstream::service {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;                          ///< 0 picks a free port
    std::optional<std::string> static_dir;    ///< UI assets mounted at /
    std::optional<std::string> layout_path;   ///< sensor grid JSON served at /layout
    std::chrono::milliseconds heartbeat{15000};
    std::size_t subscriber_buffer = 256;
    std::size_t history = 1024;
    std::size_t http_threads = 16;
    std::size_t fpca_workers = 2;
};

/// Port from the flag unless FDA_STREAM_PORT is set.
inline int resolve_port(int flag_port) {
    if (const char* env = std::getenv("FDA_STREAM_PORT"); env && *env) {
        try {
            std::size_t used = 0;
            const int p = std::stoi(env, &used);
            if (used == std::char_traits<char>::length(env) && p >= 0 && p <= 65535) return p;
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("FDA_STREAM_PORT is not a valid port: '") + env + "'");
    }
    return flag_port;
}

namespace detail {

inline std::vector<std::string> split_ids(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        const auto a = cur.find_first_not_of(' '), b = cur.find_last_not_of(' ');
        if (a != std::string::npos) out.push_back(cur.substr(a, b - a + 1));
    }
    return out;
}

inline std::vector<std::string> ids_from_json(const json& j) {
    if (!j.is_array()) throw DataError("'ids' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw DataError("'ids' must be an array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

/// Selection rows, copied under the engine lock so the caller can work without it.
struct SelectionData {
    std::uint64_t epoch = 0;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    std::vector<double> timestamps;
    std::vector<std::string> unknown;
};

inline SelectionData select_rows(const Engine& engine, const std::vector<std::string>& ids) {
    return engine.with_model([&](const MsModel& m) {
        SelectionData d;
        d.epoch = m.state().epoch;
        d.timestamps = m.panel().timestamps();
        std::unordered_set<std::string> seen;
        for (const auto& id : ids) {
            if (!seen.insert(id).second) continue;
            const auto idx = m.panel().index_of(id);
            if (!idx) {
                d.unknown.push_back(id);
                continue;
            }
            d.ids.push_back(id);
            d.rows.push_back(m.panel().row(*idx));
        }
        return d;
    });
}

inline void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message, json extra = json::object()) {
    extra["error"] = message;
    send_json(res, status, extra);
}

inline json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("invalid JSON body: ") + e.what());
    }
}

inline std::optional<std::uint64_t> parse_u64(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

/// HTTP/SSE front end over an Engine.
///
///   GET  /msplot            current snapshot (404 when empty)
///   GET  /series            raw rows + mean curve of a selection
///   POST /fpca              smoothing + FPCA on a selection
///   GET  /fpca/topk         ranked ids by FPC score
///   POST /ingest            JSON event (or JSON lines) into the engine
///   POST /panel             replace the panel from a wide CSV body
///   POST /recompute         schedule a full recompute
///   GET|PUT /config         push policy, classify bands, drift, FPCA defaults
///   GET  /events            server-sent events
///   GET  /layout            optional sensor grid layout
///   GET  /health
class Service {
public:
    Service(Engine& engine, ServiceOptions opts = {}, fpca::FpcaConfig fpca_defaults = {}, PushPolicy push = {})
        : engine_(engine),
          opts_(std::move(opts)),
          fpca_defaults_(std::move(fpca_defaults)),
          hub_(push, opts_.subscriber_buffer, opts_.history),
          fpca_slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, opts_.fpca_workers))) {
        if (opts_.layout_path) {
            std::ifstream in(*opts_.layout_path);
            if (!in) throw ConfigError("cannot open layout file '" + *opts_.layout_path + "'");
            try {
                layout_ = json::parse(in);
            } catch (const json::parse_error& e) {
                throw ConfigError(std::string("layout file is not JSON: ") + e.what());
            }
        }
        listener_ = engine_.subscribe([this](const EngineNotice& n) { hub_.on_notice(n, *engine_.snapshot()); });
        const auto threads = std::max<std::size_t>(4, opts_.http_threads);
        server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
        routes();
        ticker_ = std::thread([this] { tick_loop(); });
    }

    ~Service() {
        stop();
        engine_.unsubscribe(listener_);
        {
            std::lock_guard lock(tick_mu_);
            tick_stop_ = true;
        }
        tick_cv_.notify_all();
        if (ticker_.joinable()) ticker_.join();
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket; returns the bound port.
    int bind() {
        if (opts_.port == 0) {
            port_ = server_.bind_to_any_port(opts_.host);
        } else {
            port_ = server_.bind_to_port(opts_.host, opts_.port) ? opts_.port : -1;
        }
        if (port_ < 0) throw Error("cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
        return port_;
    }

    /// Serves until stop(). Requires bind().
    void serve() { server_.listen_after_bind(); }

    /// bind() and serve on a background thread.
    int start() {
        bind();
        thread_ = std::thread([this] { serve(); });
        server_.wait_until_ready();
        return port_;
    }

    void stop() {
        hub_.close();
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }
    PushHub& hub() { return hub_; }
    httplib::Server& http() { return server_; }

    json config_json() const {
        std::lock_guard lock(cfg_mu_);
        return {{"push", push_policy_to_json(hub_.policy())},
                {"bands", bands_to_json(engine_.bands())},
                {"drift", drift_to_json(engine_.drift())},
                {"fpca", fpca_config_to_json(fpca_defaults_)}};
    }

    /// Partial update. Every section is validated before anything is applied.
    json apply_config(const json& j) {
        detail::object(j, "config");
        for (const auto& [key, _] : j.items()) {
            if (key != "push" && key != "bands" && key != "drift" && key != "fpca") {
                throw ConfigError("unknown config section '" + key + "'");
            }
        }
        std::unique_lock lock(cfg_mu_);
        const auto push = j.contains("push") ? push_policy_from_json(j["push"], hub_.policy()) : hub_.policy();
        const auto bands = j.contains("bands") ? bands_from_json(j["bands"], engine_.bands()) : engine_.bands();
        const auto drift = j.contains("drift") ? drift_from_json(j["drift"], engine_.drift()) : engine_.drift();
        const auto fp = j.contains("fpca") ? fpca_config_from_json(j["fpca"], fpca_defaults_) : fpca_defaults_;
        hub_.set_policy(push);
        engine_.set_bands(bands);
        engine_.set_drift(drift);
        fpca_defaults_ = fp;
        lock.unlock();
        return config_json();
    }

private:
    template <class F>
    static httplib::Server::Handler guarded(F f) {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const ParseError& e) {
                json extra = json::object();
                if (e.line() != 0) extra["line"] = e.line();
                detail::send_error(res, 400, e.what(), extra);
            } catch (const DataError& e) {
                detail::send_error(res, 400, e.what());
            } catch (const ConfigError& e) {
                detail::send_error(res, 422, e.what());
            } catch (const json::exception& e) {
                detail::send_error(res, 400, e.what());
            } catch (const std::exception& e) {
                detail::send_error(res, 500, e.what());
            }
        };
    }

    void routes() {
        auto& s = server_;
        s.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
                  detail::send_json(res, 200, {{"ok", true}});
              }));
        s.Get("/msplot", guarded([this](const auto&, auto& res) { get_msplot(res); }));
        s.Get("/series", guarded([this](const auto& req, auto& res) { get_series(req, res); }));
        s.Post("/fpca", guarded([this](const auto& req, auto& res) { post_fpca(req, res); }));
        s.Get("/fpca/topk", guarded([this](const auto& req, auto& res) { get_topk(req, res); }));
        s.Post("/ingest", guarded([this](const auto& req, auto& res) { post_ingest(req, res); }));
        s.Post("/panel", guarded([this](const auto& req, auto& res) { post_panel(req, res); }));
        s.Post("/recompute", guarded([this](const auto&, auto& res) {
                   const bool started = engine_.request_recompute();
                   detail::send_json(res, 202, {{"started", started}});
               }));
        s.Get("/config", guarded([this](const auto&, auto& res) { detail::send_json(res, 200, config_json()); }));
        s.Put("/config", guarded([this](const auto& req, auto& res) {
                  detail::send_json(res, 200, apply_config(detail::parse_body(req)));
              }));
        s.Get("/layout", guarded([this](const auto&, auto& res) {
                  if (layout_) {
                      detail::send_json(res, 200, *layout_);
                  } else {
                      detail::send_error(res, 404, "no layout");
                  }
              }));
        s.Get("/events", [this](const httplib::Request& req, httplib::Response& res) { get_events(req, res); });
        if (opts_.static_dir && !s.set_mount_point("/", *opts_.static_dir)) {
            throw ConfigError("static directory '" + *opts_.static_dir + "' does not exist");
        }
    }

    void get_msplot(httplib::Response& res) {
        const auto snap = engine_.snapshot();
        if (snap->empty()) return detail::send_error(res, 404, "no data");
        detail::send_json(res, 200, snapshot_to_json(*snap));
    }

    /// ?ids=a,b[&from=i][&to=j] with [from, to) a column index window.
    void get_series(const httplib::Request& req, httplib::Response& res) {
        const auto ids = detail::split_ids(req.get_param_value("ids"));
        if (ids.empty()) return detail::send_error(res, 400, "'ids' must name at least one series");
        auto sel = detail::select_rows(engine_, ids);
        if (!sel.unknown.empty()) return detail::send_error(res, 404, "unknown series ids", {{"unknown_ids", sel.unknown}});
        const std::size_t t_count = sel.timestamps.size();
        std::size_t from = 0, to = t_count;
        if (req.has_param("from")) {
            const auto v = detail::parse_u64(req.get_param_value("from"));
            if (!v) throw DataError("'from' must be a non-negative integer");
            from = *v;
        }
        if (req.has_param("to")) {
            const auto v = detail::parse_u64(req.get_param_value("to"));
            if (!v) throw DataError("'to' must be a non-negative integer");
            to = *v;
        }
        if (from > to || to > t_count) throw DataError("window out of range for t_count=" + std::to_string(t_count));
        const auto first = static_cast<std::ptrdiff_t>(from), last = static_cast<std::ptrdiff_t>(to);
        std::vector<double> mean(to - from, 0.0);
        json series = json::array();
        for (std::size_t i = 0; i < sel.ids.size(); ++i) {
            std::vector<double> v(sel.rows[i].begin() + first, sel.rows[i].begin() + last);
            for (std::size_t t = 0; t < v.size(); ++t) mean[t] += v[t];
            series.push_back({{"id", sel.ids[i]}, {"values", std::move(v)}});
        }
        for (double& m : mean) m /= static_cast<double>(sel.ids.size());
        detail::send_json(res, 200,
                          {{"epoch", sel.epoch},
                           {"t_count", t_count},
                           {"from", from},
                           {"to", to},
                           {"timestamps", std::vector<double>(sel.timestamps.begin() + first, sel.timestamps.begin() + last)},
                           {"series", series},
                           {"mean", mean}});
    }

    fpca::FpcaConfig fpca_defaults() const {
        std::lock_guard lock(cfg_mu_);
        return fpca_defaults_;
    }

    /// Runs FPCA on a copied selection, bounded by the worker slots.
    std::optional<std::pair<detail::SelectionData, fpca::FpcaRun>> run_selection(const std::vector<std::string>& ids,
                                                                                  const fpca::FpcaConfig& cfg,
                                                                                  httplib::Response& res) {
        auto sel = detail::select_rows(engine_, ids);
        if (!sel.unknown.empty()) {
            detail::send_error(res, 404, "unknown series ids", {{"unknown_ids", sel.unknown}});
            return std::nullopt;
        }
        if (sel.ids.size() < 2) {
            detail::send_error(res, 422, "FPCA needs a selection of at least 2 series");
            return std::nullopt;
        }
        fpca_slots_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{fpca_slots_};
        auto run = fpca::run_fpca(sel.ids, sel.rows, sel.timestamps, cfg);
        return std::pair{std::move(sel), std::move(run)};
    }

    /// Body `{ids:[...], config:{...}}`; config fields override the server defaults for this call only.
    void post_fpca(const httplib::Request& req, httplib::Response& res) {
        const auto body = detail::parse_body(req);
        if (!body.is_object() || !body.contains("ids")) throw DataError("body must be an object with 'ids'");
        const auto ids = detail::ids_from_json(body["ids"]);
        auto cfg = fpca_defaults();
        if (body.contains("config") && !body["config"].is_null()) cfg = fpca_config_from_json(body["config"], cfg);
        auto out = run_selection(ids, cfg, res);
        if (!out) return;
        detail::send_json(res, 200, fpca_run_to_json(out->second, out->first.epoch, cfg.shown_components));
    }

    /// ?ids=a,b,c&component=1&k=10&mode=top|bottom[&threshold=x]. component is 1-based.
    void get_topk(const httplib::Request& req, httplib::Response& res) {
        const auto ids = detail::split_ids(req.get_param_value("ids"));
        if (ids.empty()) return detail::send_error(res, 400, "'ids' must name at least one series");
        auto param_u64 = [&](const char* key, std::uint64_t dflt) {
            if (!req.has_param(key)) return dflt;
            const auto v = detail::parse_u64(req.get_param_value(key));
            if (!v) throw DataError(std::string("'") + key + "' must be a non-negative integer");
            return *v;
        };
        const auto component = param_u64("component", 1);
        const auto k = param_u64("k", 10);
        if (k < 1) return detail::send_error(res, 400, "k must be >= 1");
        if (component < 1) return detail::send_error(res, 400, "component is 1-based");
        fpca::RankMode mode = fpca::RankMode::top;
        if (req.has_param("mode")) {
            const auto m = req.get_param_value("mode");
            if (m == "bottom") {
                mode = fpca::RankMode::bottom;
            } else if (m != "top") {
                return detail::send_error(res, 400, "mode must be 'top' or 'bottom'");
            }
        }
        std::optional<double> threshold;
        if (req.has_param("threshold")) {
            const auto& t = req.get_param_value("threshold");
            double v = 0;
            const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
            if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v)) {
                throw DataError("'threshold' must be a number");
            }
            threshold = v;
        }
        auto out = run_selection(ids, fpca_defaults(), res);
        if (!out) return;
        const auto& model = out->second.model;
        if (component > model.n_components()) {
            return detail::send_error(res, 422, "component " + std::to_string(component) + " not available; selection has " +
                                                    std::to_string(model.n_components()));
        }
        const Eigen::VectorXd col = model.scores.col(static_cast<Eigen::Index>(component - 1));
        const auto ranked = fpca::top_k_series(model.series_ids, col, k, mode, threshold);
        json scores = json::object();
        for (std::size_t i = 0; i < model.series_ids.size(); ++i) scores[model.series_ids[i]] = col(static_cast<Eigen::Index>(i));
        detail::send_json(res, 200,
                          {{"epoch", out->first.epoch},
                           {"component", component},
                           {"k", k},
                           {"mode", mode == fpca::RankMode::top ? "top" : "bottom"},
                           {"ids", ranked},
                           {"scores", scores}});
    }

    /// One JSON event, or JSON lines applied in order; the first bad line stops the batch.
    void post_ingest(const httplib::Request& req, httplib::Response& res) {
        std::istringstream in(req.body);
        std::string line;
        std::size_t line_no = 0, accepted = 0;
        json outcomes = json::array();
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const auto ev = ingest::parse_event_jsonl(line, line_no);
                const auto out = engine_.apply(ev);
                json o{{"queued", out.queued}, {"recompute_triggered", out.recompute_triggered}};
                if (out.admitted) o["admitted"] = point_to_json(*out.admitted);
                if (out.drift) o["drift"] = {{"kl", out.drift->kl}, {"low_confidence", out.drift->low_confidence}};
                outcomes.push_back(std::move(o));
                ++accepted;
            } catch (const ParseError& e) {
                return detail::send_error(res, 400, e.what(), {{"line", line_no}, {"accepted", accepted}});
            } catch (const DataError& e) {
                return detail::send_error(res, 400, e.what(), {{"line", line_no}, {"accepted", accepted}});
            } catch (const ConfigError& e) {
                return detail::send_error(res, 409, e.what(), {{"line", line_no}, {"accepted", accepted}});
            }
        }
        if (line_no == 0 || accepted == 0) return detail::send_error(res, 400, "empty ingest body");
        const auto snap = engine_.snapshot();
        detail::send_json(res, 200,
                          {{"accepted", accepted}, {"outcomes", outcomes}, {"epoch", snap->epoch}, {"t_count", snap->t_count}});
    }

    void post_panel(const httplib::Request& req, httplib::Response& res) {
        auto panel = ingest::parse_wide_csv_text(req.body);
        engine_.load(std::move(panel));
        const auto snap = engine_.snapshot();
        detail::send_json(res, 200, {{"epoch", snap->epoch}, {"t_count", snap->t_count}, {"n_series", snap->points.size()}});
    }

    /// SSE. Resume with the Last-Event-ID header (or ?last_event_id=) or ?since_epoch=.
    void get_events(const httplib::Request& req, httplib::Response& res) {
        std::optional<std::uint64_t> last_id, since;
        if (req.has_header("Last-Event-ID")) last_id = detail::parse_u64(req.get_header_value("Last-Event-ID"));
        if (req.has_param("last_event_id")) last_id = detail::parse_u64(req.get_param_value("last_event_id"));
        if (req.has_param("since_epoch")) {
            since = detail::parse_u64(req.get_param_value("since_epoch"));
            if (!since) return detail::send_error(res, 400, "'since_epoch' must be a non-negative integer");
        }
        const auto current = engine_.snapshot();
        auto sub = hub_.subscribe(last_id, since, current.get());
        const auto heartbeat = opts_.heartbeat;
        res.set_header("Cache-Control", "no-cache");
        res.set_header("X-Accel-Buffering", "no");
        res.set_chunked_content_provider(
            "text/event-stream",
            [sub, heartbeat](std::size_t, httplib::DataSink& sink) {
                if (!sink.is_writable()) return false;
                auto m = sub->next(heartbeat);
                if (m) {
                    const auto text = format_sse(*m);
                    return sink.write(text.data(), text.size());
                }
                if (sub->dropped()) {
                    const auto text = format_sse(PushMessage{
                        0, "dropped", 0, json{{"reason", "subscriber buffer overflow"}, {"resume_from", sub->last_seq()}}.dump()});
                    sink.write(text.data(), text.size());
                    sink.done();
                    return true;
                }
                if (sub->closed()) {
                    sink.done();
                    return true;
                }
                const auto text = format_sse(PushHub::heartbeat());
                return sink.write(text.data(), text.size());
            },
            [this, sub](bool) { hub_.unsubscribe(sub); });
    }

    void tick_loop() {
        std::unique_lock lock(tick_mu_);
        while (!tick_stop_) {
            tick_cv_.wait_for(lock, std::chrono::milliseconds(50));
            hub_.tick();
        }
    }

    Engine& engine_;
    ServiceOptions opts_;
    mutable std::mutex cfg_mu_;
    fpca::FpcaConfig fpca_defaults_;
    PushHub hub_;
    std::counting_semaphore<> fpca_slots_;
    std::optional<json> layout_;
    httplib::Server server_;
    std::size_t listener_ = 0;
    int port_ = -1;
    std::thread thread_;
    std::thread ticker_;
    std::mutex tick_mu_;
    std::condition_variable tick_cv_;
    bool tick_stop_ = false;
};

}  // namespace msstream::service

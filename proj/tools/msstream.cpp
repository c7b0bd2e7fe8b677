// msstream command line: fit, stream, bench, generate, export, serve.
//
// Exit codes: 0 ok, 2 usage or configuration, 3 data error, 4 runtime failure.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <pthread.h>

#include "msstream/bench.hpp"
#include "msstream/engine.hpp"
#include "msstream/ingest/csv.hpp"
#include "msstream/ingest/events.hpp"
#include "msstream/ingest/replay.hpp"
#include "msstream/ingest/synthetic.hpp"
#include "msstream/plot.hpp"
#include "msstream/service/json.hpp"
#include "msstream/service/server.hpp"

#include <CLI11.hpp>

namespace {

using namespace msstream;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kRuntime = 4;

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

/// Writes to `path`, or stdout when empty.
void emit(const std::optional<std::string>& path, const std::string& text) {
    if (path) {
        write_file(*path, text);
    } else {
        std::cout << text << std::flush;
    }
}

ClassifyBands bands_from(double lo, double hi, double cap) {
    ClassifyBands b;
    b.mo_low = lo;
    b.mo_high = hi;
    b.vo_cap = cap;
    b.validate();
    return b;
}

std::shared_ptr<const MsSnapshot> fit_snapshot(const RawPanel& panel, const ClassifyBands& bands) {
    EngineOptions eo;
    eo.bands = bands;
    eo.background = false;
    Engine engine(eo);
    engine.load(panel);
    return engine.snapshot();
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string input;
    std::optional<std::string> out;
    bool json = false;
    double mo_low = 0.25, mo_high = 0.75, vo_cap = 0.75;
};

int cmd_fit(const FitArgs& a) {
    const auto panel = ingest::parse_wide_csv(a.input);
    const auto snap = fit_snapshot(panel, bands_from(a.mo_low, a.mo_high, a.vo_cap));
    if (a.json) {
        emit(a.out, service::snapshot_to_json(*snap).dump() + "\n");
    } else {
        std::ostringstream os;
        ingest::write_msplot_csv(os, snap->points);
        emit(a.out, os.str());
    }
    return kOk;
}

// ---------------------------------------------------------------- stream

struct StreamArgs {
    std::string input;
    std::string rate = "max";
    std::optional<std::string> server;
    bool inproc = false;
    std::size_t warmup = 10;
    bool no_load = false;
    std::optional<std::string> panel;
    std::size_t retries = 5;
    std::size_t retry_delay_ms = 200;
    std::optional<std::size_t> retention;
    bool json = false;
};

std::optional<double> parse_rate(const std::string& s) {
    if (s == "max") return std::nullopt;
    double v = 0;
    try {
        std::size_t used = 0;
        v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
        throw ConfigError("--rate must be a positive number or 'max'");
    }
    if (!(v > 0)) throw ConfigError("--rate must be a positive number or 'max'");
    return v;
}

bool is_jsonl(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    return ext == ".jsonl" || ext == ".ndjson";
}

/// Log-decade latency histogram: <10us, <100us, <1ms, <10ms, <100ms, <1s, >=1s.
std::vector<std::pair<std::string, std::size_t>> latency_histogram(const std::vector<double>& xs) {
    static const char* names[] = {"<10us", "<100us", "<1ms", "<10ms", "<100ms", "<1s", ">=1s"};
    std::vector<std::pair<std::string, std::size_t>> h;
    for (auto* n : names) h.emplace_back(n, 0);
    for (double x : xs) {
        std::size_t b = 0;
        for (double edge = 1e-5; b < 6 && x >= edge; edge *= 10) ++b;
        ++h[b].second;
    }
    return h;
}

class HttpSink {
public:
    HttpSink(const std::string& url, std::size_t retries, std::size_t delay_ms)
        : client_(url), retries_(retries), delay_ms_(delay_ms) {
        if (!client_.is_valid()) throw ConfigError("invalid --server URL '" + url + "'");
        client_.set_connection_timeout(std::chrono::seconds(2));
        client_.set_read_timeout(std::chrono::seconds(60));
    }

    /// POST with retries on connection failure. Non-2xx responses throw DataError.
    std::string post(const std::string& path, const std::string& body, const char* type) {
        for (std::size_t attempt = 0;; ++attempt) {
            auto res = client_.Post(path, body, type);
            if (res) {
                if (res->status / 100 != 2) {
                    failure = kData;
                    throw DataError("server rejected " + path + " (" + std::to_string(res->status) + "): " + res->body);
                }
                return res->body;
            }
            if (attempt >= retries_) {
                failure = kRuntime;
                throw Error("server unreachable after " + std::to_string(attempt + 1) +
                            " attempts: " + httplib::to_string(res.error()));
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_ << std::min<std::size_t>(attempt, 6)));
        }
    }

    int failure = kOk;

private:
    httplib::Client client_;
    std::size_t retries_;
    std::size_t delay_ms_;
};

int cmd_stream(const StreamArgs& a) {
    if (a.server && a.inproc) throw ConfigError("--server and --inproc are mutually exclusive");
    const auto rate = parse_rate(a.rate);

    std::optional<RawPanel> initial;
    std::vector<StreamEvent> events;
    if (is_jsonl(a.input)) {
        std::ifstream in(a.input);
        if (!in) throw ParseError("cannot open '" + a.input + "'");
        auto log = ingest::read_event_log(in);
        if (!log.errors.empty()) {
            for (const auto& e : log.errors) std::cerr << a.input << ": " << e.what() << "\n";
            throw DataError(std::to_string(log.errors.size()) + " malformed event line(s)");
        }
        events = std::move(log.events);
        if (a.panel) initial = ingest::parse_wide_csv(*a.panel);
    } else {
        auto panel = ingest::parse_wide_csv(a.input);
        if (a.no_load) {
            events = ingest::columns_as_events(panel);
        } else {
            if (a.warmup < 1 || a.warmup > panel.n_times()) {
                throw ConfigError("--warmup must be within 1.." + std::to_string(panel.n_times()));
            }
            initial = ingest::head_columns(panel, a.warmup);
            events = ingest::columns_as_events(panel, a.warmup);
        }
    }

    ingest::ReplayReport rep;
    json final_state;
    int failure = kOk;
    if (a.server) {
        HttpSink sink(*a.server, a.retries, a.retry_delay_ms);
        if (initial) {
            std::ostringstream csv;
            ingest::write_wide_csv(csv, *initial);
            sink.post("/panel", csv.str(), "text/csv");
        }
        rep = ingest::replay(events, rate, [&](const StreamEvent& ev) {
            sink.post("/ingest", ingest::event_to_json(ev).dump(), "application/json");
        });
        failure = sink.failure;
    } else {
        EngineOptions eo;
        eo.retention_window = a.retention;
        Engine engine(eo);
        if (initial) engine.load(*initial);
        rep = ingest::replay(events, rate, [&](const StreamEvent& ev) {
            try {
                engine.apply(ev);
            } catch (const DataError&) {
                failure = kData;
                throw;
            } catch (const ConfigError&) {
                failure = kData;
                throw;
            }
        });
        engine.wait_idle();
        const auto snap = engine.snapshot();
        final_state = {{"epoch", snap->epoch},
                       {"t_count", snap->t_count},
                       {"n_series", snap->points.size()},
                       {"recomputes", engine.recompute_count()}};
    }

    const auto hist = latency_histogram(rep.latencies_s);
    if (a.json) {
        json h = json::object();
        for (const auto& [k, v] : hist) h[k] = v;
        json j{{"total", rep.total},
               {"delivered", rep.delivered},
               {"aborted", rep.aborted},
               {"error", rep.error},
               {"elapsed_s", rep.elapsed_s},
               {"latency_s",
                {{"p50", rep.latency.p50_s},
                 {"p90", rep.latency.p90_s},
                 {"p99", rep.latency.p99_s},
                 {"max", rep.latency.max_s},
                 {"mean", rep.latency.mean_s}}},
               {"histogram", h}};
        if (!final_state.is_null()) j["engine"] = final_state;
        std::cout << j.dump() << "\n";
    } else {
        std::cout << "delivered " << rep.delivered << "/" << rep.total << " events in " << std::fixed
                  << std::setprecision(3) << rep.elapsed_s << " s\n";
        std::cout << std::scientific << std::setprecision(3) << "latency p50 " << rep.latency.p50_s << " s  p90 "
                  << rep.latency.p90_s << " s  p99 " << rep.latency.p99_s << " s  max " << rep.latency.max_s << " s\n";
        std::size_t peak = 1;
        for (const auto& [k, v] : hist) peak = std::max(peak, v);
        for (const auto& [k, v] : hist) {
            std::cout << std::setw(8) << k << " " << std::setw(8) << v << " "
                      << std::string(static_cast<std::size_t>(40.0 * static_cast<double>(v) / static_cast<double>(peak)), '#')
                      << "\n";
        }
        if (!final_state.is_null()) std::cout << "engine " << final_state.dump() << "\n";
    }
    if (rep.aborted) {
        std::cerr << "stream aborted: " << rep.error << "\n";
        return failure == kOk ? kRuntime : failure;
    }
    return kOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    bench::BenchConfig cfg;
    bool json = false;
    std::optional<std::string> out;
};

int cmd_bench(const BenchArgs& a) {
    const auto rep = bench::run_bench(a.cfg);
    const auto j = bench::to_json(rep);
    if (a.out) write_file(*a.out, j.dump(2) + "\n");
    if (a.json) {
        std::cout << j.dump() << "\n";
        return kOk;
    }
    const bench::ReferenceRow ref;
    auto row = [](const std::string& name, std::size_t n, std::size_t t, const std::string& a, const std::string& b,
                  const std::string& c, const std::string& d) {
        std::cout << std::left << std::setw(12) << name << std::right << std::setw(7) << n << std::setw(8) << t
                  << std::setw(16) << a << std::setw(16) << b << std::setw(15) << c << std::setw(18) << d << "\n";
    };
    auto num = [](double v) {
        std::ostringstream os;
        os << std::setprecision(5) << v;
        return os.str();
    };
    std::cout << std::left << std::setw(12) << "" << std::right << std::setw(7) << "n" << std::setw(8) << "t"
              << std::setw(16) << "initial_fit_s" << std::setw(16) << "partial_fit_s" << std::setw(15) << "approx_add_s"
              << std::setw(18) << "full_recompute_s" << "\n";
    row("measured", rep.n, rep.t, num(rep.initial_fit_s), num(rep.partial_fit_s), num(rep.approx_add_s),
        num(rep.full_recompute_s));
    row("reference*", ref.n, ref.t, num(ref.initial_fit_s), num(ref.partial_fit_s), "-", "-");
    std::cout << "runs " << rep.runs << " (full recompute " << rep.recompute_runs << "), approx speedup "
              << num(rep.approx_add_s > 0 ? rep.full_recompute_s / rep.approx_add_s : 0.0) << "x\n"
              << "* published figures from different hardware, shown for context only\n";
    return kOk;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    ingest::ScenarioSpec spec;
    std::string out;
    std::optional<std::string> labels;
    bool json = false;
};

int cmd_generate(const GenerateArgs& a) {
    const auto s = ingest::generate_synthetic(a.spec);
    std::ostringstream csv, lab;
    ingest::write_wide_csv(csv, s.panel);
    ingest::write_labels_csv(lab, s);
    const auto labels_path = a.labels ? *a.labels
                                      : (std::filesystem::path(a.out).replace_extension("").string() + ".labels.csv");
    write_file(a.out, csv.str());
    write_file(labels_path, lab.str());
    json j{{"scenario", a.out},
           {"labels", labels_path},
           {"n_series", s.panel.n_series()},
           {"t_points", s.panel.n_times()},
           {"offset_scale", a.spec.offset_scale()},
           {"seed", a.spec.seed}};
    if (a.json) {
        std::cout << j.dump() << "\n";
    } else {
        std::cout << "wrote " << s.panel.n_series() << " series x " << s.panel.n_times() << " points to " << a.out
                  << ", labels to " << labels_path << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------- export

struct ExportArgs {
    std::string input;
    std::string svg;
    int width = 640, height = 480;
    bool json = false;
};

int cmd_export(const ExportArgs& a) {
    std::ifstream in(a.input);
    if (!in) throw ParseError("cannot open '" + a.input + "'");
    std::string first;
    std::getline(in, first);
    if (!first.empty() && first.back() == '\r') first.pop_back();
    in.clear();
    in.seekg(0);
    std::vector<MsPoint> points;
    if (first.find(ingest::kMsplotHeader) != std::string::npos) {
        points = ingest::parse_msplot_csv(in);
    } else {
        points = fit_snapshot(ingest::parse_wide_csv(in), ClassifyBands{})->points;
    }
    plot::SvgOptions o;
    o.width = a.width;
    o.height = a.height;
    const auto svg = plot::render_msplot_svg(points, o);
    write_file(a.svg, svg);
    if (a.json) {
        std::cout << json{{"svg", a.svg}, {"points", points.size()}, {"bytes", svg.size()}}.dump() << "\n";
    } else {
        std::cout << "wrote " << points.size() << " points to " << a.svg << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::string> input;
    std::optional<std::string> static_dir;
    std::optional<std::string> layout;
    std::optional<std::size_t> retention;
    std::size_t heartbeat_ms = 15000;
    std::size_t points_per_update = 10;
    double min_interval = 0.0;
    double threshold = 10.0;
    bool json = false;
};

int cmd_serve(const ServeArgs& a) {
    // Block termination signals before any thread starts; a dedicated thread waits for them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    EngineOptions eo;
    eo.retention_window = a.retention;
    eo.drift.threshold = a.threshold;
    eo.drift.validate();
    Engine engine(eo);
    if (a.input) engine.load(ingest::parse_wide_csv(*a.input));

    service::ServiceOptions so;
    so.host = a.host;
    so.port = service::resolve_port(a.port);
    so.static_dir = a.static_dir;
    so.layout_path = a.layout;
    so.heartbeat = std::chrono::milliseconds(a.heartbeat_ms);
    service::PushPolicy push;
    push.points_per_update = a.points_per_update;
    push.min_interval_s = a.min_interval;
    service::Service svc(engine, so, {}, push);
    const int port = svc.bind();
    if (a.json) {
        std::cout << json{{"listening", true}, {"host", a.host}, {"port", port}}.dump() << std::endl;
    } else {
        std::cout << "listening on http://" << a.host << ":" << port << std::endl;
    }
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        svc.stop();
    });
    svc.serve();
    // serve() also returns if the listener fails; wake the waiter so it can exit
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"msstream: streaming magnitude-shape outlier analysis"};
    app.require_subcommand(1);
    std::function<int()> action;

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "batch fit a wide CSV and write the MS plot table");
    f->add_option("input", fit.input, "wide CSV (first column ts, one column per series)")->required();
    f->add_option("--out,-o", fit.out, "output file (default stdout)");
    f->add_flag("--json", fit.json, "write the snapshot JSON served by GET /msplot instead of CSV");
    f->add_option("--mo-low", fit.mo_low, "central MO band, lower fraction of the MO range");
    f->add_option("--mo-high", fit.mo_high, "central MO band, upper fraction of the MO range");
    f->add_option("--vo-cap", fit.vo_cap, "central VO cap, fraction of the VO range");
    f->callback([&] { action = [&] { return cmd_fit(fit); }; });

    StreamArgs st;
    auto* s = app.add_subcommand("stream", "replay a CSV or JSON-lines file into a server or an in-process engine");
    s->add_option("input", st.input, "wide CSV (columns become add_time_point events) or .jsonl events")->required();
    s->add_option("--rate", st.rate, "events per second, or 'max'");
    s->add_option("--server", st.server, "service base URL, e.g. http://127.0.0.1:8080");
    s->add_flag("--inproc", st.inproc, "replay into an in-process engine (default without --server)");
    s->add_option("--warmup", st.warmup, "CSV columns loaded as the initial panel before streaming");
    s->add_flag("--no-load", st.no_load, "stream every CSV column; do not load an initial panel");
    s->add_option("--panel", st.panel, "initial panel CSV for .jsonl input");
    s->add_option("--retries", st.retries, "connection retries per request");
    s->add_option("--retry-delay-ms", st.retry_delay_ms, "first retry delay, doubled on each attempt");
    s->add_option("--retention", st.retention, "sliding window length for the in-process engine");
    s->add_flag("--json", st.json, "machine-readable report");
    s->callback([&] { action = [&] { return cmd_stream(st); }; });

    BenchArgs be;
    auto* b = app.add_subcommand("bench", "time initial fit, partial fit, approximate add and full recompute");
    b->add_option("--n", be.cfg.n, "series");
    b->add_option("--t", be.cfg.t, "time points");
    b->add_option("--runs", be.cfg.runs, "samples per timed operation (median reported)");
    b->add_option("--recompute-runs", be.cfg.recompute_runs, "samples for the full recompute");
    b->add_option("--seed", be.cfg.seed, "data seed");
    b->add_option("--out,-o", be.out, "also write the JSON report here");
    b->add_flag("--json", be.json, "print the JSON report instead of the table");
    b->callback([&] { action = [&] { return cmd_bench(be); }; });

    GenerateArgs ge;
    auto* g = app.add_subcommand("generate", "write a synthetic scenario CSV and its ground-truth labels");
    g->add_option("--n-central", ge.spec.n_central, "central series");
    g->add_option("--n-magnitude", ge.spec.n_magnitude_outliers, "magnitude outliers");
    g->add_option("--n-shape", ge.spec.n_shape_outliers, "shape outliers");
    g->add_option("--t", ge.spec.t_points, "time points");
    g->add_option("--noise-sd", ge.spec.noise_sd, "Gaussian noise sd");
    g->add_option("--seed", ge.spec.seed, "generator seed");
    g->add_option("--out,-o", ge.out, "scenario CSV")->required();
    g->add_option("--labels", ge.labels, "labels CSV (default <out>.labels.csv)");
    g->add_flag("--json", ge.json, "machine-readable summary");
    g->callback([&] { action = [&] { return cmd_generate(ge); }; });

    ExportArgs ex;
    auto* e = app.add_subcommand("export", "render an MS plot SVG from a panel CSV or an MS plot table");
    e->add_option("input", ex.input, "wide CSV or id,mo,vo,label,approximate table")->required();
    e->add_option("--svg", ex.svg, "output SVG")->required();
    e->add_option("--width", ex.width, "pixels");
    e->add_option("--height", ex.height, "pixels");
    e->add_flag("--json", ex.json, "machine-readable summary");
    e->callback([&] { action = [&] { return cmd_export(ex); }; });

    ServeArgs sv;
    auto* v = app.add_subcommand("serve", "run the HTTP/SSE service (FDA_STREAM_PORT overrides --port)");
    v->add_option("--host", sv.host, "bind address");
    v->add_option("--port", sv.port, "port, 0 for any free port");
    v->add_option("--input", sv.input, "panel CSV loaded at startup");
    v->add_option("--static", sv.static_dir, "directory of UI assets served at /");
    v->add_option("--layout", sv.layout, "sensor grid layout JSON served at /layout");
    v->add_option("--retention", sv.retention, "sliding window length in time points");
    v->add_option("--heartbeat-ms", sv.heartbeat_ms, "SSE heartbeat interval");
    v->add_option("--points-per-update", sv.points_per_update, "time points per msplot_delta push");
    v->add_option("--min-interval", sv.min_interval, "minimum seconds between throttled pushes");
    v->add_option("--threshold", sv.threshold, "KL drift threshold for recompute");
    v->add_flag("--json", sv.json, "machine-readable startup line");
    v->callback([&] { action = [&] { return cmd_serve(sv); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kUsage;
    }

    try {
        return action();
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kUsage;
    } catch (const DataError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kData;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kRuntime;
    }
}

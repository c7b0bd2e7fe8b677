// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "msstream/bench.hpp"
#include "msstream/engine.hpp"
#include "msstream/fpca/pipeline.hpp"
#include "msstream/ingest/csv.hpp"
#include "msstream/ingest/synthetic.hpp"
#include "msstream/outlyingness.hpp"
#include "msstream/service/server.hpp"
#include "oracles.hpp"
#include "sse_client.hpp"

#ifndef MSSTREAM_CLI_PATH
#error "MSSTREAM_CLI_PATH must point at the msstream executable"
#endif

using namespace msstream;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string num(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::vector<double>> rows_of(const RawPanel& p) {
    std::vector<std::vector<double>> rows;
    for (std::size_t n = 0; n < p.n_series(); ++n) rows.push_back(p.row(n));
    return rows;
}

// ---------------------------------------------------------------- 1
Outcome exactness() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240601);
    std::normal_distribution<double> d;
    std::size_t checks = 0;
    double worst = 0.0;
    for (int seq = 0; seq < 200; ++seq) {
        const auto n = std::uniform_int_distribution<std::size_t>(3, 200)(rng);
        const auto t = std::uniform_int_distribution<std::size_t>(2, 500)(rng);
        // every fourth sequence uses coarse readings so ties and zero-MAD columns occur
        const bool coarse = seq % 4 == 0;
        auto draw = [&] { return coarse ? std::round(d(rng)) : d(rng); };
        std::vector<std::vector<double>> rows(n, std::vector<double>(t));
        for (auto& r : rows)
            for (auto& v : r) v = draw();
        MsModel model;
        model.fit(RawPanel::from_rows(oracle::ids_for(n), rows));
        const int steps = 30;
        for (int s = 0; s < steps; ++s) {
            const bool add = model.panel().n_times() < 2 || std::bernoulli_distribution(0.6)(rng);
            if (add) {
                std::vector<double> col(n);
                for (auto& v : col) v = draw();
                model.add_time_point(col);
            } else {
                const auto idx = std::uniform_int_distribution<std::size_t>(0, model.panel().n_times() - 1)(rng);
                model.remove_time_point(idx);
            }
            if (s % 10 == 9) {
                const auto ref = oracle::brute_force_ms(rows_of(model.panel()));
                for (std::size_t i = 0; i < n; ++i) {
                    const double em = std::fabs(model.state().mo(i) - ref.mo[i]) /
                                      std::max({1.0, std::fabs(ref.mo[i]), std::fabs(model.state().mo(i))});
                    const double ev = std::fabs(model.state().vo(i) - ref.vo[i]) /
                                      std::max({1.0, std::fabs(ref.vo[i]), std::fabs(model.state().vo(i))});
                    worst = std::max({worst, em, ev});
                    ++checks;
                }
            }
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-9 && elapsed < 60.0, "200 sequences, " + std::to_string(checks) + " series checks, max rel err " +
                                                 num(worst) + ", " + num(elapsed) + " s (limit 60 s)"};
}

// ---------------------------------------------------------------- 2
Outcome complexity() {
    const std::size_t n = 1000;
    MsModel small, large;
    small.fit(bench::random_panel(n, 100, 1));
    large.fit(bench::random_panel(n, 20000, 2));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d;
    std::vector<double> col(n);
    std::vector<double> ts, tl;
    // interleaved so background noise hits both sizes alike
    for (int r = 0; r < 101; ++r) {
        for (auto& v : col) v = d(rng);
        ts.push_back(bench::time_once([&] { small.add_time_point(col); }));
        for (auto& v : col) v = d(rng);
        tl.push_back(bench::time_once([&] { large.add_time_point(col); }));
    }
    const double ms = bench::median(ts), ml = bench::median(tl);
    const double ratio = ml / ms;
    return {ratio < 2.0, "N=1000 median add_time_point " + num(ms * 1e3) + " ms at T=100, " + num(ml * 1e3) +
                             " ms at T=20000, ratio " + num(ratio) + " (limit 2)"};
}

// ---------------------------------------------------------------- 3
Outcome progressive_speedup() {
    const std::size_t n = 10000, t = 1000;
    MsModel model;
    model.fit(bench::random_panel(n, t, 4));
    const auto approx = bench::median(bench::time_approx_adds(model, 9, 5));
    const auto full = bench::median(bench::time_full_recomputes(model.panel(), 3, 6));
    const double speedup = full / approx;
    return {speedup >= 5.0, "N=10000 T=1000 approx add " + num(approx * 1e3) + " ms, full recompute " + num(full * 1e3) +
                                " ms, speedup " + num(speedup) + "x (need >= 5x)"};
}

// ---------------------------------------------------------------- 4
/// Worst |approx - exact| / exact range of the admitted central series over seeds 1-10.
std::pair<double, double> admission_error(std::size_t n_magnitude, std::size_t n_shape, bool& all_admitted) {
    double worst_mo = 0.0, worst_vo = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ingest::ScenarioSpec spec;
        spec.n_central = 21;
        spec.n_magnitude_outliers = n_magnitude;
        spec.n_shape_outliers = n_shape;
        spec.seed = seed;
        const auto sc = ingest::generate_synthetic(spec);
        auto base = sc.panel;
        const auto held = base.row(20);
        const auto held_id = base.ids()[20];
        base.erase_row(20);
        MsModel approx;
        approx.fit(base);
        const auto adm = approx.add_series_approx(held_id, held);
        all_admitted = all_admitted && !adm.recompute_due;
        const auto ref = oracle::brute_force_ms(rows_of(sc.panel));
        const auto [mo_lo, mo_hi] = std::minmax_element(ref.mo.begin(), ref.mo.end());
        const auto [vo_lo, vo_hi] = std::minmax_element(ref.vo.begin(), ref.vo.end());
        worst_mo = std::max(worst_mo, std::fabs(adm.point.mo - ref.mo[20]) / (*mo_hi - *mo_lo));
        worst_vo = std::max(worst_vo, std::fabs(adm.point.vo - ref.vo[20]) / (*vo_hi - *vo_lo));
    }
    return {worst_mo, worst_vo};
}

Outcome approximation_quality() {
    // default generator scenario: central cluster plus 2 magnitude and 2 shape outliers
    bool all_admitted = true;
    const auto [worst_mo, worst_vo] = admission_error(2, 2, all_admitted);
    bool ignored = true;
    const auto [central_mo, central_vo] = admission_error(0, 0, ignored);

    // far newcomer
    const auto sc = ingest::generate_synthetic({20, 0, 0, 100, 0.1, 42});
    MsModel m;
    m.fit(sc.panel);
    double max_mad = 0;
    for (const auto& s : m.stats()) max_mad = std::max(max_mad, s.mad);
    auto far = sc.panel.row(0);
    for (double& v : far) v += 100.0 * max_mad;
    const auto adm = m.add_series_approx("far", far);
    const bool far_ok = adm.drift.kl > 10.0 && adm.recompute_due;

    const bool pass = worst_mo < 0.05 && worst_vo < 0.05 && all_admitted && far_ok;
    return {pass, "10 seeds, admitted central series vs N+1 batch oracle: max |dmo|/range " + num(worst_mo) +
                      ", max |dvo|/range " + num(worst_vo) + " (limit 0.05)" + (all_admitted ? "" : ", unexpected recompute") +
                      "; 100*max(mad) offset KL " + num(adm.drift.kl) +
                      (adm.recompute_due ? ", recompute due" : ", recompute NOT due") +
                      "; info: central-only panel gives " + num(central_mo) + " / " + num(central_vo)};
}

// ---------------------------------------------------------------- 5
struct GeometryResult {
    bool mo_top2, vo_top2, outliers_flagged;
    std::size_t central_ok;
};

GeometryResult geometry(std::uint64_t seed) {
    const auto sc = ingest::generate_synthetic({20, 2, 2, 100, 0.1, seed});
    MsModel m;
    m.fit(sc.panel);
    const auto pts = m.points();
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto by = [&](auto key) {
        auto v = idx;
        std::sort(v.begin(), v.end(), [&](auto a, auto b) { return key(pts[a]) > key(pts[b]); });
        return v;
    };
    const auto mo_rank = by([](const MsPoint& p) { return std::fabs(p.mo); });
    const auto vo_rank = by([](const MsPoint& p) { return p.vo; });
    GeometryResult r{};
    r.mo_top2 = sc.labels[mo_rank[0]] == ingest::Archetype::magnitude && sc.labels[mo_rank[1]] == ingest::Archetype::magnitude;
    r.vo_top2 = sc.labels[vo_rank[0]] == ingest::Archetype::shape && sc.labels[vo_rank[1]] == ingest::Archetype::shape;
    r.outliers_flagged = true;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (sc.labels[i] == ingest::Archetype::central) {
            r.central_ok += pts[i].label == Label::central;
        } else {
            r.outliers_flagged = r.outliers_flagged && pts[i].label == Label::outlying;
        }
    }
    return r;
}

Outcome outlier_geometry() {
    const auto r = geometry(42);
    const bool pass = r.mo_top2 && r.vo_top2 && r.outliers_flagged && r.central_ok >= 18;
    int other = 0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        const auto g = geometry(s);
        other += g.mo_top2 && g.vo_top2 && g.outliers_flagged && g.central_ok >= 18;
    }
    return {pass, std::string("seed 42: magnitude top-2 |mo| ") + (r.mo_top2 ? "yes" : "no") + ", shape top-2 vo " +
                      (r.vo_top2 ? "yes" : "no") + ", 4 outliers flagged " + (r.outliers_flagged ? "yes" : "no") +
                      ", central labelled central " + std::to_string(r.central_ok) + "/20; seeds 1-20 also pass: " +
                      std::to_string(other) + "/20"};
}

// ---------------------------------------------------------------- 6
Outcome affine_invariance() {
    std::mt19937_64 rng(8);
    const auto rows = oracle::random_rows(rng, 40, 120);
    const auto panel = RawPanel::from_rows(oracle::ids_for(40), rows);
    const auto base = batch_fit(panel);
    double worst = 0.0;
    for (const auto& [a, b] : std::vector<std::pair<double, double>>{{2.5, -7.0}, {1e-3, 1e3}, {-1.0, 0.0}, {-3.7, 11.0}}) {
        auto p = panel;
        p.transform(a, b);
        const auto f = batch_fit(p);
        for (std::size_t i = 0; i < 40; ++i) {
            const double mo_ref = a > 0 ? base.state.mo(i) : -base.state.mo(i);
            auto rel = [](double x, double y) { return std::fabs(x - y) / std::max({1.0, std::fabs(x), std::fabs(y)}); };
            worst = std::max({worst, rel(f.state.mo(i), mo_ref), rel(f.state.vo(i), base.state.vo(i))});
        }
    }
    return {worst <= 1e-9, "4 transforms (a>0 and a<0), max rel deviation " + num(worst) + " (limit 1e-9)"};
}

// ---------------------------------------------------------------- 7
Outcome fpca_recovery() {
    const std::size_t n = 40, t_count = 200;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> amp(0.0, 1.0), eps(0.0, 0.01);
    std::vector<double> t(t_count);
    for (std::size_t i = 0; i < t_count; ++i) t[i] = static_cast<double>(i) / static_cast<double>(t_count - 1);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * amp(rng), b = amp(rng);
        std::vector<double> y;
        for (double x : t) y.push_back(a * std::sin(2 * std::numbers::pi * x) + b * std::cos(2 * std::numbers::pi * x) + eps(rng));
        rows.push_back(std::move(y));
    }
    const auto run = fpca::run_fpca(oracle::ids_for(n), rows, t, fpca::FpcaConfig{});
    const auto& m = run.model;
    const double cum2 = m.cumulative(1);
    const Eigen::MatrixXd g = m.components.transpose() * m.gram * m.components;
    const double ortho = (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
    double var_err = 0.0;
    for (Eigen::Index j = 0; j < m.scores.cols(); ++j) {
        if (m.eigenvalues(j) < 1e-10 * m.eigenvalues(0)) continue;  // relative error is meaningless at zero
        const double var = m.scores.col(j).squaredNorm() / static_cast<double>(n - 1);
        var_err = std::max(var_err, std::fabs(var / m.eigenvalues(j) - 1.0));
    }
    double pert_err = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
        const auto p = fpca::perturbation_curves(m, j);
        const Eigen::VectorXd mean = m.eval * m.mean;
        const Eigen::VectorXd fpc = m.eval * m.components.col(static_cast<Eigen::Index>(j));
        const double mult = std::sqrt(2.0 * m.eigenvalues(static_cast<Eigen::Index>(j)));
        pert_err = std::max({pert_err, (p.plus - (mean + mult * fpc)).cwiseAbs().maxCoeff(),
                             (p.minus - (mean - mult * fpc)).cwiseAbs().maxCoeff()});
    }
    const bool pass = cum2 >= 0.99 && ortho <= 1e-8 && var_err <= 1e-6 && pert_err <= 1e-12;
    return {pass, "cumulative(2) " + num(cum2, 6) + " (>= 0.99), orthonormality " + num(ortho) + " (<= 1e-8), score var rel err " +
                      num(var_err) + " (<= 1e-6), perturbation err " + num(pert_err) + ", lambda " + num(run.lambda)};
}

// ---------------------------------------------------------------- 8
std::string csv_of(const RawPanel& p) {
    std::ostringstream os;
    ingest::write_wide_csv(os, p);
    return os.str();
}

Outcome throttle_contract() {
    Engine engine;
    service::ServiceOptions so;
    so.port = 0;
    so.heartbeat = 100ms;
    service::Service svc(engine, so);
    const int port = svc.start();
    httplib::Client cli("127.0.0.1", port);
    const auto sc = ingest::generate_synthetic({20, 0, 0, 50, 0.1, 11});
    auto r = cli.Post("/panel", csv_of(sc.panel), "text/csv");
    if (!r || r->status != 200) return {false, "POST /panel failed"};
    testsse::Collector sse("127.0.0.1", port, "/events");
    for (int i = 0; i < 400 && svc.hub().subscriber_count() == 0; ++i) std::this_thread::sleep_for(5ms);

    std::mt19937_64 rng(12);
    std::normal_distribution<double> d(0, 0.1);
    for (int i = 0; i < 25; ++i) {
        std::vector<double> col(20);
        for (auto& v : col) v = d(rng);
        r = cli.Post("/ingest", json{{"kind", "add_time_point"}, {"values", col}}.dump(), "application/json");
        if (!r || r->status != 200) return {false, "POST /ingest failed at point " + std::to_string(i)};
    }
    // a heartbeat after the last ingest means everything published before it has been delivered
    const auto seen = sse.events().size();
    sse.wait_for([&](auto& evs) {
        for (std::size_t i = seen; i < evs.size(); ++i)
            if (evs[i].event == "heartbeat") return true;
        return false;
    });
    const auto deltas = sse.of("msplot_delta").size();

    const auto stats = engine.with_model([](const MsModel& m) { return m.stats(); });
    double max_mad = 0;
    for (const auto& s : stats) max_mad = std::max(max_mad, s.mad);
    std::vector<double> far(stats.size());
    for (std::size_t t = 0; t < far.size(); ++t) far[t] = stats[t].z + 100 * max_mad;
    cli.Post("/ingest", json{{"kind", "add_series"}, {"id", "far"}, {"values", far}}.dump(), "application/json");
    sse.wait_for([](auto& evs) {
        return std::any_of(evs.begin(), evs.end(), [](auto& e) { return e.event == "recompute_done"; });
    });
    const auto started = sse.of("recompute_started");
    const auto done = sse.of("recompute_done");
    sse.stop();
    svc.stop();
    bool epoch_ok = false;
    if (started.size() == 1 && done.size() == 1) {
        epoch_ok = json::parse(done[0].data)["epoch"].get<std::uint64_t>() ==
                   json::parse(started[0].data)["epoch"].get<std::uint64_t>() + 1;
    }
    return {deltas == 2 && epoch_ok, "25 points at points_per_update=10 gave " + std::to_string(deltas) +
                                         " msplot_delta; recompute_started " + std::to_string(started.size()) +
                                         ", recompute_done " + std::to_string(done.size()) + ", epoch +1 " +
                                         (epoch_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------- 9
std::pair<int, std::string> run_cli(const std::string& args) {
    const std::string cmd = std::string(MSSTREAM_CLI_PATH) + " " + args;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return {-1, ""};
    std::string out;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

Outcome end_to_end_determinism() {
    const auto path = std::filesystem::temp_directory_path() / ("msstream_accept_" + std::to_string(::getpid()) + ".csv");
    const auto sc = ingest::generate_synthetic({20, 2, 2, 100, 0.1, 42});
    const auto csv = csv_of(sc.panel);
    {
        std::ofstream(path) << csv;
    }
    const auto [code, cli_csv] = run_cli("fit " + path.string());
    const auto [code_json, cli_json] = run_cli("fit --json " + path.string());
    std::filesystem::remove(path);
    if (code != 0 || code_json != 0) return {false, "msstream fit exited with " + std::to_string(code)};

    Engine engine;
    service::ServiceOptions so;
    so.port = 0;
    service::Service svc(engine, so);
    const int port = svc.start();
    httplib::Client cli("127.0.0.1", port);
    cli.Post("/panel", csv, "text/csv");
    const auto r = cli.Get("/msplot");
    svc.stop();
    if (!r || r->status != 200) return {false, "GET /msplot failed"};

    std::istringstream in(cli_csv);
    std::string line;
    std::getline(in, line);
    const auto body = json::parse(r->body);
    std::size_t i = 0, mismatches = 0;
    while (std::getline(in, line)) {
        const auto& p = body["points"].at(i++);
        const std::string rendered = p["id"].get<std::string>() + "," + ingest::format_double(p["mo"].get<double>()) + "," +
                                     ingest::format_double(p["vo"].get<double>()) + "," + p["label"].get<std::string>() +
                                     "," + (p["approximate"].get<bool>() ? "true" : "false");
        mismatches += rendered != line;
    }
    const bool same_count = i == body["points"].size();
    const bool json_bytes = cli_json == r->body + "\n";
    return {mismatches == 0 && same_count && json_bytes,
            std::to_string(i) + " rows compared at 17 significant digits, " + std::to_string(mismatches) +
                " mismatches; fit --json byte-identical to GET /msplot: " + (json_bytes ? "yes" : "no")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"exactness", exactness},
        {"complexity", complexity},
        {"progressive-speedup", progressive_speedup},
        {"approximation-quality", approximation_quality},
        {"outlier-geometry", outlier_geometry},
        {"affine-invariance", affine_invariance},
        {"fpca-recovery", fpca_recovery},
        {"throttle-contract", throttle_contract},
        {"end-to-end-determinism", end_to_end_determinism},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}

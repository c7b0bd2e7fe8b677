#include "msstream/outlyingness.hpp"

#include <gtest/gtest.h>

#include <random>

#include "msstream/ingest/synthetic.hpp"
#include "oracles.hpp"

using namespace msstream;

namespace {

RawPanel three_constant() {
    return RawPanel::from_rows({"a", "b", "c"}, {{1, 1, 1, 1}, {2, 2, 2, 2}, {3, 3, 3, 3}});
}

void expect_matches_oracle(const MsModel& m, const std::vector<std::vector<double>>& rows, double tol = 1e-9) {
    const auto ref = oracle::brute_force_ms(rows);
    ASSERT_EQ(m.state().size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_TRUE(oracle::rel_close(m.state().mo(i), ref.mo[i], tol)) << i << ": " << m.state().mo(i) << " vs " << ref.mo[i];
        EXPECT_TRUE(oracle::rel_close(m.state().fo(i), ref.fo[i], tol)) << i;
        EXPECT_TRUE(oracle::rel_close(m.state().vo(i), ref.vo[i], tol)) << i;
    }
}

std::vector<std::vector<double>> rows_of(const RawPanel& p) {
    std::vector<std::vector<double>> rows;
    for (std::size_t n = 0; n < p.n_series(); ++n) rows.push_back(p.row(n));
    return rows;
}

}  // namespace

TEST(BatchFit, ThreeConstantSeries) {
    MsModel m;
    m.fit(three_constant());
    const auto& s = m.state();
    EXPECT_EQ(s.epoch, 1u);
    EXPECT_EQ(s.t_count, 4u);
    const double mo[] = {-1, 0, 1}, fo[] = {1, 0, 1};
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(s.mo(i), mo[i]);
        EXPECT_DOUBLE_EQ(s.fo(i), fo[i]);
        EXPECT_DOUBLE_EQ(s.vo(i), 0.0);
        EXPECT_FALSE(s.approx[i]);
    }
    EXPECT_EQ(m.stats().size(), 4u);
}

TEST(BatchFit, SingleColumnReducesToOneCrossSection) {
    MsModel m;
    m.fit(RawPanel::from_rows({"a", "b", "c"}, {{1}, {2}, {3}}));
    EXPECT_DOUBLE_EQ(m.state().mo(0), -1);
    EXPECT_DOUBLE_EQ(m.state().mo(2), 1);
    EXPECT_DOUBLE_EQ(m.state().vo(1), 0);
}

TEST(BatchFit, RandomPanelMatchesBruteForce) {
    std::mt19937_64 rng(11);
    const auto rows = oracle::random_rows(rng, 5, 20);
    MsModel m;
    m.fit(RawPanel::from_rows(oracle::ids_for(5), rows));
    expect_matches_oracle(m, rows, 1e-12);
}

TEST(BatchFit, EmptyPanelIsConfigError) {
    EXPECT_THROW(batch_fit(RawPanel{}), ConfigError);
}

TEST(AddTimePoint, FoldsNewOutlyingnessIntoRunningMeans) {
    // series a has O = 1 at four columns (z = 0, mad = 1), then O = 6.
    MsModel m;
    m.fit(RawPanel::from_rows({"a", "b", "c"}, {{1, 1, 1, 1}, {0, 0, 0, 0}, {-1, -1, -1, -1}}));
    ASSERT_DOUBLE_EQ(m.state().mo(0), 1);
    ASSERT_DOUBLE_EQ(m.state().fo(0), 1);
    m.add_time_point(std::vector<double>{6, 0, -1});
    EXPECT_DOUBLE_EQ(m.state().mo(0), 2);
    EXPECT_DOUBLE_EQ(m.state().fo(0), 8);
    EXPECT_DOUBLE_EQ(m.state().vo(0), 4);
    EXPECT_EQ(m.state().t_count, 5u);
}

TEST(AddTimePoint, SeriesAtMedianShrinksByTOverTPlusOne) {
    MsModel m;
    m.fit(RawPanel::from_rows({"a", "b", "c"}, {{1, 3, 1, 2}, {0, 0, 0, 0}, {-1, -1, -2, -1}}));
    const double mo = m.state().mo(0), fo = m.state().fo(0);
    m.add_time_point(std::vector<double>{0, 0.5, -1});  // a sits on the median
    EXPECT_DOUBLE_EQ(m.state().mo(0), mo * 4.0 / 5.0);
    EXPECT_DOUBLE_EQ(m.state().fo(0), fo * 4.0 / 5.0);
}

TEST(AddTimePoint, SequentialAdditionsEqualBatch) {
    std::mt19937_64 rng(3);
    auto rows = oracle::random_rows(rng, 50, 101);
    std::vector<std::vector<double>> first;
    for (auto& r : rows) first.push_back({r[0]});
    MsModel m;
    m.fit(RawPanel::from_rows(oracle::ids_for(50), first));
    for (std::size_t t = 1; t < 101; ++t) {
        std::vector<double> col;
        for (auto& r : rows) col.push_back(r[t]);
        m.add_time_point(col);
    }
    expect_matches_oracle(m, rows);
}

TEST(AddTimePoint, LengthMismatchLeavesStateUnchanged) {
    MsModel m;
    m.fit(three_constant());
    const auto before = m.state().sum_o;
    EXPECT_THROW(m.add_time_point(std::vector<double>{1, 2}), DataError);
    EXPECT_THROW(m.add_time_point(std::vector<double>{1, 2, NAN}), DataError);
    EXPECT_THROW(m.add_time_point(std::vector<double>{1, 2, 3}, -5.0), DataError);  // timestamp in the past
    EXPECT_EQ(m.state().sum_o, before);
    EXPECT_EQ(m.state().t_count, 4u);
    EXPECT_EQ(m.panel().n_times(), 4u);
}

TEST(RemoveTimePoint, InverseOfAdd) {
    std::mt19937_64 rng(5);
    const auto rows = oracle::random_rows(rng, 8, 12);
    MsModel m;
    m.fit(RawPanel::from_rows(oracle::ids_for(8), rows));
    const auto before = m.state();
    m.add_time_point(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    m.remove_time_point(12);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_TRUE(oracle::rel_close(m.state().mo(i), before.mo(i), 1e-9));
        EXPECT_TRUE(oracle::rel_close(m.state().fo(i), before.fo(i), 1e-9));
    }
}

TEST(RemoveTimePoint, AnyColumnMatchesBatchOnRemainder) {
    std::mt19937_64 rng(9);
    const auto rows = oracle::random_rows(rng, 10, 30);
    for (std::size_t drop = 0; drop < 30; ++drop) {
        MsModel m;
        m.fit(RawPanel::from_rows(oracle::ids_for(10), rows));
        m.remove_time_point(drop);
        auto rest = rows;
        for (auto& r : rest) r.erase(r.begin() + static_cast<std::ptrdiff_t>(drop));
        expect_matches_oracle(m, rest);
    }
}

TEST(RemoveTimePoint, LastColumnRefused) {
    MsModel m;
    m.fit(RawPanel::from_rows({"a", "b", "c"}, {{1}, {2}, {3}}));
    EXPECT_THROW(m.remove_time_point(0), ConfigError);
    EXPECT_THROW(m.remove_time_point(3), ConfigError);
}

TEST(RetentionWindow, SlidesOldestColumnOut) {
    std::mt19937_64 rng(21);
    const auto rows = oracle::random_rows(rng, 6, 40);
    std::vector<std::vector<double>> head;
    for (auto& r : rows) head.emplace_back(r.begin(), r.begin() + 10);
    MsModel m;
    m.set_retention(10);
    m.fit(RawPanel::from_rows(oracle::ids_for(6), head));
    m.set_retention(10);
    for (std::size_t t = 10; t < 40; ++t) {
        std::vector<double> col;
        for (auto& r : rows) col.push_back(r[t]);
        m.add_time_point(col);
    }
    EXPECT_EQ(m.state().t_count, 10u);
    std::vector<std::vector<double>> tail;
    for (auto& r : rows) tail.emplace_back(r.end() - 10, r.end());
    expect_matches_oracle(m, tail);
}

TEST(AddSeriesApprox, DuplicateOfExactSeriesGetsSameValues) {
    std::mt19937_64 rng(13);
    const auto rows = oracle::random_rows(rng, 9, 50);
    MsModel m;
    m.fit(RawPanel::from_rows(oracle::ids_for(9), rows));
    const auto adm = m.add_series_approx("dup", rows[4]);
    EXPECT_TRUE(adm.point.approximate);
    EXPECT_DOUBLE_EQ(adm.point.mo, m.state().mo(4));
    EXPECT_DOUBLE_EQ(adm.point.vo, m.state().vo(4));
    EXPECT_TRUE(m.state().approx.back());
    EXPECT_EQ(m.approx_count(), 1u);
}

TEST(AddSeriesApprox, MedianCurveHasZeroOutlyingness) {
    std::mt19937_64 rng(17);
    const auto rows = oracle::random_rows(rng, 7, 40);
    MsModel m;
    m.fit(RawPanel::from_rows(oracle::ids_for(7), rows));
    std::vector<double> median_curve;
    for (const auto& s : m.stats()) median_curve.push_back(s.z);
    const auto adm = m.add_series_approx("median", median_curve);
    EXPECT_EQ(adm.point.mo, 0.0);
    EXPECT_EQ(adm.point.vo, 0.0);
}

TEST(AddSeriesApprox, CentralNewcomerCloseToExact) {
    ingest::ScenarioSpec spec;
    spec.n_central = 21;
    auto sc = ingest::generate_synthetic(spec);
    auto full = sc.panel;
    auto held = sc.panel.row(20);
    sc.panel.erase_row(20);

    MsModel m;
    m.fit(sc.panel);
    const auto adm = m.add_series_approx("c20", held);
    EXPECT_FALSE(adm.recompute_due);

    MsModel exact;
    exact.fit(full);
    const auto pts = exact.points();
    double mo_lo = 1e300, mo_hi = -1e300, vo_lo = 1e300, vo_hi = -1e300;
    for (const auto& p : pts) {
        mo_lo = std::min(mo_lo, p.mo), mo_hi = std::max(mo_hi, p.mo);
        vo_lo = std::min(vo_lo, p.vo), vo_hi = std::max(vo_hi, p.vo);
    }
    const auto i = *full.index_of("c20");
    EXPECT_LT(std::fabs(adm.point.mo - exact.state().mo(i)), 0.05 * (mo_hi - mo_lo));
    EXPECT_LT(std::fabs(adm.point.vo - exact.state().vo(i)), 0.05 * (vo_hi - vo_lo));
}

TEST(AddSeriesApprox, LargeOffsetTriggersRecomputeAndBudgetForcesOne) {
    std::mt19937_64 rng(19);
    const auto rows = oracle::random_rows(rng, 20, 200);
    MsModel m;
    m.fit(RawPanel::from_rows(oracle::ids_for(20), rows));
    double max_mad = 0;
    for (const auto& s : m.stats()) max_mad = std::max(max_mad, s.mad);
    std::vector<double> far;
    for (const auto& s : m.stats()) far.push_back(s.z + 100 * max_mad);
    const auto adm = m.add_series_approx("far", far);
    EXPECT_GT(adm.drift.kl, 10.0);
    EXPECT_TRUE(adm.recompute_due);
    EXPECT_THROW(m.add_series_approx("next", rows[0]), ConfigError);

    DriftConfig cfg;
    cfg.approx_budget = 2;
    MsModel b(cfg);
    b.fit(RawPanel::from_rows(oracle::ids_for(20), rows));
    EXPECT_FALSE(b.add_series_approx("x1", rows[1]).recompute_due);
    EXPECT_TRUE(b.add_series_approx("x2", rows[2]).recompute_due);

    b.install(batch_fit(b.panel()));
    EXPECT_FALSE(b.recompute_due());
    EXPECT_EQ(b.approx_count(), 0u);
    EXPECT_EQ(b.state().epoch, 2u);
    for (bool f : b.state().approx) EXPECT_FALSE(f);
}

TEST(AddSeriesApprox, RejectsBadInput) {
    MsModel m;
    m.fit(three_constant());
    EXPECT_THROW(m.add_series_approx("d", std::vector<double>{1, 2}), DataError);
    EXPECT_THROW(m.add_series_approx("a", std::vector<double>{1, 2, 3, 4}), DataError);
    EXPECT_EQ(m.state().size(), 3u);
}

TEST(RemoveSeries, DropsRowAndAppliesGate) {
    std::mt19937_64 rng(23);
    const auto rows = oracle::random_rows(rng, 6, 64);
    MsModel m;
    m.fit(RawPanel::from_rows(oracle::ids_for(6), rows));
    const double mo5 = m.state().mo(5);
    const auto rem = m.remove_series("s2");
    EXPECT_FALSE(rem.recompute_due);
    EXPECT_EQ(m.state().size(), 5u);
    EXPECT_EQ(m.state().mo(4), mo5);
    EXPECT_THROW(m.remove_series("nope"), DataError);
}

TEST(Invariants, AffineTransformOfAllSeries) {
    std::mt19937_64 rng(29);
    const auto rows = oracle::random_rows(rng, 15, 60);
    MsModel base;
    base.fit(RawPanel::from_rows(oracle::ids_for(15), rows));
    for (double a : {3.5, 0.01, -2.0}) {
        auto p = RawPanel::from_rows(oracle::ids_for(15), rows);
        p.transform(a, 7.25);
        MsModel m;
        m.fit(p);
        for (std::size_t i = 0; i < 15; ++i) {
            const double sign = a > 0 ? 1.0 : -1.0;
            EXPECT_TRUE(oracle::rel_close(m.state().mo(i), sign * base.state().mo(i), 1e-9));
            EXPECT_TRUE(oracle::rel_close(m.state().vo(i), base.state().vo(i), 1e-9));
        }
    }
}

TEST(Invariants, FoEqualsMoSquaredPlusVo) {
    std::mt19937_64 rng(31);
    const auto rows = oracle::random_rows(rng, 12, 33);
    MsModel m;
    m.fit(RawPanel::from_rows(oracle::ids_for(12), rows));
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_GE(m.state().vo_raw(i), -1e-9);
        EXPECT_NEAR(m.state().fo(i), m.state().mo(i) * m.state().mo(i) + m.state().vo_raw(i), 1e-12);
    }
}

TEST(Classify, BandAndCapRule) {
    std::vector<MsPoint> pts{{"a", 0, 0}, {"b", 1, 0}, {"c", 0, 10}, {"d", -1, 0}};
    classify(pts);
    EXPECT_EQ(pts[0].label, Label::central);
    EXPECT_EQ(pts[1].label, Label::outlying);
    EXPECT_EQ(pts[2].label, Label::outlying);
    EXPECT_EQ(pts[3].label, Label::outlying);
}

TEST(Classify, DegenerateRangesAreCentral) {
    std::vector<MsPoint> same{{"a", 2, 3}, {"b", 2, 3}, {"c", 2, 3}};
    classify(same);
    for (const auto& p : same) EXPECT_EQ(p.label, Label::central);
    std::vector<MsPoint> one{{"x", 50, 1e6}};
    classify(one);
    EXPECT_EQ(one[0].label, Label::central);
}

TEST(Classify, AdjustableBands) {
    std::vector<MsPoint> pts{{"a", 0, 0}, {"b", 1, 0}, {"c", 0.9, 0}};
    classify(pts, ClassifyBands{0.0, 1.0, 0.75});
    for (const auto& p : pts) EXPECT_EQ(p.label, Label::central);
    EXPECT_THROW((ClassifyBands{0.8, 0.2, 0.5}.validate()), ConfigError);
}

TEST(Classify, SyntheticClustersFollowGroundTruth) {
    const auto sc = ingest::generate_synthetic({20, 2, 2, 100, 0.1, 42});
    MsModel m;
    m.fit(sc.panel);
    const auto pts = m.points();
    int central_ok = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (sc.labels[i] == ingest::Archetype::central) {
            central_ok += pts[i].label == Label::central;
        } else {
            EXPECT_EQ(pts[i].label, Label::outlying) << pts[i].series_id;
        }
    }
    EXPECT_GE(central_ok, 18);
}

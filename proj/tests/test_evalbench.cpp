#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mt3d/evalbench.hpp"
#include "mt3d/mip.hpp"
#include "mt3d/oracles.hpp"
#include "mt3d/rng.hpp"
#include "test_util.hpp"

using namespace mt3d;

TEST_SUITE("evalbench") {

TEST_CASE("success sweep endpoints") {
    // IoU 1 clears thresholds 0..0.99 but not 1.0: 100 of 101 grid points
    const std::vector<double> perfect(7, 1.0);
    CHECK(success_auc(perfect) == doctest::Approx(100.0 / 101.0).epsilon(1e-15));
    const std::vector<double> zero(5, 0.0);
    CHECK(success_auc(zero) == 0.0);
    // 0.5 is strictly above the 50 thresholds 0.00..0.49
    CHECK(success_auc({0.5}) == doctest::Approx(50.0 / 101.0).epsilon(1e-15));
    CHECK_THROWS_AS((void)success_auc({}), Error);
}

TEST_CASE("precision sweep endpoints") {
    // error 0 beats every threshold except 0.0 itself
    const std::vector<double> perfect(4, 0.0);
    CHECK(precision_auc(perfect, 2.0) == doctest::Approx(100.0 / 101.0).epsilon(1e-15));
    // errors beyond the cap never score
    const std::vector<double> bad(3, 5.0);
    CHECK(precision_auc(bad, 2.0) == 0.0);
    // error 1.0 with cap 2: strictly below thresholds 1.02..2.00 (50 points)
    CHECK(precision_auc({1.0}, 2.0) == doctest::Approx(50.0 / 101.0).epsilon(1e-15));
    CHECK_THROWS_AS((void)precision_auc({}, 2.0), Error);
    CHECK_THROWS_AS((void)precision_auc({0.5}, 0.0), Error);
}

TEST_CASE("sweeps match the brute-force oracles exactly") {
    Rng rng(701);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform() * 30);
        std::vector<double> ious, errors;
        for (int i = 0; i < n; ++i) {
            ious.push_back(rng.uniform());
            errors.push_back(rng.uniform() * 3.0);
        }
        CHECK(success_auc(ious) == oracle::success_auc_brute(ious));
        CHECK(precision_auc(errors, 2.0) == oracle::precision_auc_brute(errors, 2.0));
    }
}

TEST_CASE("curves: grid shape, monotonicity, auc equals the mean fraction") {
    Rng rng(702);
    std::vector<double> ious;
    for (int i = 0; i < 40; ++i) ious.push_back(rng.uniform());
    const MetricCurve c = success_curve(ious);
    REQUIRE(c.thresholds.size() == 101);
    REQUIRE(c.fractions.size() == 101);
    CHECK(c.thresholds.front() == 0.0);
    CHECK(c.thresholds.back() == 1.0);
    double mean = 0.0;
    for (std::size_t i = 0; i < c.fractions.size(); ++i) {
        if (i > 0) CHECK(c.fractions[i] <= c.fractions[i - 1]);  // success never rises
        mean += c.fractions[i];
    }
    CHECK(c.auc == doctest::Approx(mean / 101.0).epsilon(1e-12));

    std::vector<double> errors;
    for (int i = 0; i < 40; ++i) errors.push_back(rng.uniform() * 2.5);
    const MetricCurve p = precision_curve(errors, 2.0);
    REQUIRE(p.thresholds.size() == 101);
    CHECK(p.thresholds.back() == 2.0);
    for (std::size_t i = 1; i < p.fractions.size(); ++i)
        CHECK(p.fractions[i] >= p.fractions[i - 1]);  // precision never falls
}

TEST_CASE("aggregate: single class passes through; equal scores are a fixed point") {
    const ClassScore one{"Car", 0.61, 0.72, 1200};
    const AggregateResult a = aggregate({one});
    CHECK(a.mean_success == doctest::Approx(0.61).epsilon(1e-15));
    CHECK(a.mean_precision == doctest::Approx(0.72).epsilon(1e-15));
    REQUIRE(a.per_class.size() == 1);

    const AggregateResult b =
        aggregate({{"Car", 0.5, 0.6, 1000}, {"Pedestrian", 0.5, 0.6, 3000}});
    CHECK(b.mean_success == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(b.mean_precision == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("aggregate weights by frame count") {
    const std::vector<ClassScore> scores = {{"Car", 0.700, 0.80, 6424},
                                            {"Pedestrian", 0.643, 0.70, 6088}};
    const AggregateResult r = aggregate(scores);
    const double wsum = 6424.0 + 6088.0;
    CHECK(r.mean_success ==
          doctest::Approx((0.700 * 6424 + 0.643 * 6088) / wsum).epsilon(1e-12));
    CHECK(r.mean_precision ==
          doctest::Approx((0.80 * 6424 + 0.70 * 6088) / wsum).epsilon(1e-12));

    // doubling every count leaves the weighted means unchanged
    const AggregateResult r2 = aggregate({{"Car", 0.700, 0.80, 12848},
                                          {"Pedestrian", 0.643, 0.70, 12176}});
    CHECK(r2.mean_success == doctest::Approx(r.mean_success).epsilon(1e-12));
    CHECK(r2.mean_precision == doctest::Approx(r.mean_precision).epsilon(1e-12));

    CHECK_THROWS_AS((void)aggregate({}), Error);
}

TEST_CASE("attention baseline: exact closed form and quadratic growth") {
    Config cfg;  // C = 128
    const std::uint64_t C = 128;
    for (std::uint64_t n : {64ULL, 512ULL, 2048ULL}) {
        CHECK(flops_attention_baseline(cfg, n) == 4 * n * C * C + 2 * n * n * C);
    }
    std::vector<double> xs, ys;
    for (std::uint64_t n = 1024; n <= 8192; n *= 2) {
        xs.push_back(static_cast<double>(n));
        ys.push_back(static_cast<double>(flops_attention_baseline(cfg, n)));
    }
    CHECK(loglog_slope(xs, ys) >= 1.8);
    CHECK(flops_attention_baseline(cfg, 1) > 0);
}

TEST_CASE("our path grows near-linearly where attention grows quadratically") {
    Config cfg;
    std::vector<double> xs, ours;
    for (std::uint64_t n = 512; n <= 8192; n *= 2) {
        xs.push_back(static_cast<double>(n));
        ours.push_back(static_cast<double>(flops_mip(cfg, n)));
    }
    CHECK(loglog_slope(xs, ours) <= 1.2);
}

TEST_CASE("loglog_slope recovers exact power laws") {
    const std::vector<double> xs = {1.0, 2.0, 4.0, 8.0, 16.0};
    std::vector<double> quad, lin;
    for (double x : xs) {
        quad.push_back(x * x);
        lin.push_back(3.0 * x);
    }
    CHECK(loglog_slope(xs, quad) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(loglog_slope(xs, lin) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS((void)loglog_slope({1.0}, {1.0}), Error);
}

TEST_CASE("run_bench: rows echo the analytic counts and both slopes") {
    Config cfg;
    cfg.num_tokens = 32;
    cfg.channels = 32;
    cfg.ssm_layers = 1;
    cfg.state_dim = 8;
    const std::vector<int> sizes = {128, 256, 512};
    const BenchReport rep = run_bench(cfg, sizes, 3);
    REQUIRE(rep.rows.size() == sizes.size());
    std::vector<double> xs, ours, attn;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        CHECK(rep.rows[i].n == sizes[i]);
        CHECK(rep.rows[i].flops_ours == flops_mip(cfg, static_cast<std::uint64_t>(sizes[i])));
        CHECK(rep.rows[i].flops_attn ==
              flops_attention_baseline(cfg, static_cast<std::uint64_t>(sizes[i])));
        CHECK(rep.rows[i].steps_per_sec > 0.0);
        xs.push_back(static_cast<double>(sizes[i]));
        ours.push_back(static_cast<double>(rep.rows[i].flops_ours));
        attn.push_back(static_cast<double>(rep.rows[i].flops_attn));
    }
    CHECK(rep.slope_ours == doctest::Approx(loglog_slope(xs, ours)).epsilon(1e-12));
    CHECK(rep.slope_attn == doctest::Approx(loglog_slope(xs, attn)).epsilon(1e-12));
    CHECK(rep.slope_ours < rep.slope_attn);
}

TEST_CASE("run_bench medians are stable across runs") {
    Config cfg;
    cfg.num_tokens = 32;
    cfg.channels = 32;
    cfg.ssm_layers = 1;
    cfg.state_dim = 8;
    const BenchReport a = run_bench(cfg, {512}, 5);
    const BenchReport b = run_bench(cfg, {512}, 5);
    const double ra = a.rows[0].steps_per_sec;
    const double rb = b.rows[0].steps_per_sec;
    CHECK(std::abs(ra - rb) / std::max(ra, rb) < 0.20);
}

TEST_CASE("run_bench input validation") {
    Config cfg;
    CHECK_THROWS_AS((void)run_bench(cfg, {512, 256}, 3), Error);  // unsorted
    CHECK_THROWS_AS((void)run_bench(cfg, {256, 512}, 2), Error);  // reps < 3
    CHECK_THROWS_AS((void)run_bench(cfg, {}, 3), Error);
}

}  // TEST_SUITE

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rfslam/geometry.hpp"
#include "rfslam/measurement.hpp"
#include "rfslam/random.hpp"

using namespace rfslam;

TEST_CASE("aoa_of model and wrap convention") {
    CHECK(aoa_of({0, 0}, {1, 1}, 0.0) == Catch::Approx(kPi / 4));
    CHECK(aoa_of({0, 0}, {1, 1}, 0.5) == Catch::Approx(kPi / 4 + 0.5));
    CHECK(aoa_of({0, 0}, {-1, 0}, 0.0) == Catch::Approx(kPi));
    CHECK_THROWS_AS(aoa_of({2, 3}, {2, 3}, 0.0), undefined_bearing_error);
}

TEST_CASE("aoa bias additivity over random inputs") {
    RngStream rng(7);
    for (int i = 0; i < 2000; ++i) {
        const Point2 u{rng.uniform(-20, 20), rng.uniform(-20, 20)};
        const Point2 p{rng.uniform(-20, 20), rng.uniform(-20, 20)};
        if (distance(u, p) < 1e-6) continue;
        const double alpha = rng.uniform(-3, 3);
        const double diff = wrap_angle(aoa_of(u, p, alpha) - aoa_of(u, p, 0.0));
        CHECK(std::abs(wrap_angle(diff - alpha)) < 1e-12);
    }
}

TEST_CASE("toa_of model") {
    CHECK(toa_of({0, 0}, {3, 4}, 0.0) == Catch::Approx(5.0 / kSpeedOfLight));
    CHECK(toa_of({0, 0}, {3, 4}, 5.0) == Catch::Approx(0.0).margin(1e-18));
    CHECK(toa_of({0, 0}, {3, 4}, 10.0) == Catch::Approx(-5.0 / kSpeedOfLight));
}

TEST_CASE("rss_of model") {
    CHECK(rss_of({0, 0}, {10, 0}, -30.0, 2.0) == Catch::Approx(-50.0));
    CHECK(rss_of({0, 0}, {1, 0}, -30.0, 3.7) == Catch::Approx(-30.0));
    CHECK(rss_of({0, 0}, {100, 0}, -30.0, 3.0) == Catch::Approx(-90.0));
    CHECK_THROWS_AS(rss_of({1, 1}, {1, 1}, -30.0, 2.0), rss_singularity_error);
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
    CHECK(wrap_angle(kPi) == Catch::Approx(kPi));
    CHECK(wrap_angle(-kPi) == Catch::Approx(kPi));
    CHECK(wrap_angle(3 * kPi) == Catch::Approx(kPi));
    CHECK(wrap_angle(0.1) == Catch::Approx(0.1));
    RngStream rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double w = wrap_angle(rng.uniform(-100, 100));
        CHECK(w > -kPi - 1e-12);
        CHECK(w <= kPi + 1e-12);
    }
}

TEST_CASE("gaussian density integrates to one") {
    for (double sigma : {0.01, 0.5, 2.5}) {
        double sum = 0.0;
        const int steps = 200000;
        const double lo = -8 * sigma, hi = 8 * sigma;
        const double dx = (hi - lo) / steps;
        for (int i = 0; i < steps; ++i) sum += gaussian_pdf(lo + (i + 0.5) * dx, sigma) * dx;
        CHECK(sum == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("likelihood is the product of per-category densities") {
    NoiseConfig cfg;
    const Point2 u{1, 2}, p{7, 9};
    const double alpha = 0.2, omega = 3.0, xi = -33.0, beta = 2.4;
    Measurement z;
    z.aoa = aoa_of(u, p, alpha) + 0.5 * cfg.sigma_aoa;
    z.toa = toa_of(u, p, omega) + 1.0 * cfg.sigma_toa_m / kSpeedOfLight;
    z.rss = rss_of(u, p, xi, beta) - 2.0 * cfg.sigma_rss;

    const CategorySet all{true, true, true};
    const double got = likelihood(z, u, alpha, omega, p, xi, beta, cfg, all);
    // Independent recomputation, residual by residual.
    const double expect = gaussian_pdf(0.5 * cfg.sigma_aoa, cfg.sigma_aoa) *
                          gaussian_pdf(1.0 * cfg.sigma_toa_m / kSpeedOfLight,
                                       cfg.sigma_toa_m / kSpeedOfLight) *
                          gaussian_pdf(2.0 * cfg.sigma_rss, cfg.sigma_rss);
    CHECK(got == Catch::Approx(expect).epsilon(1e-12));

    // Zero residual peaks at the product of normalization constants.
    Measurement z0;
    z0.aoa = aoa_of(u, p, alpha);
    z0.toa = toa_of(u, p, omega);
    z0.rss = rss_of(u, p, xi, beta);
    const double peak = likelihood(z0, u, alpha, omega, p, xi, beta, cfg, all);
    const double peak_expect = gaussian_pdf(0, cfg.sigma_aoa) *
                               gaussian_pdf(0, cfg.sigma_toa_m / kSpeedOfLight) *
                               gaussian_pdf(0, cfg.sigma_rss);
    CHECK(peak == Catch::Approx(peak_expect).epsilon(1e-12));

    // Disabling a category contributes a factor of exactly 1.
    const CategorySet no_rss{true, true, false};
    const double without = likelihood(z, u, alpha, omega, p, xi, beta, cfg, no_rss);
    CHECK(got == Catch::Approx(without * gaussian_pdf(2.0 * cfg.sigma_rss, cfg.sigma_rss))
                     .epsilon(1e-12));

    // A 1-sigma offset scales one factor by e^{-1/2}.
    Measurement z1 = z0;
    z1.toa = *z0.toa + cfg.sigma_toa_m / kSpeedOfLight;
    CHECK(likelihood(z1, u, alpha, omega, p, xi, beta, cfg, all) ==
          Catch::Approx(peak * std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("false alarm density over the enabled joint support") {
    NoiseConfig cfg;
    CHECK(false_alarm_density(cfg, {true, false, false}) == Catch::Approx(1.0 / (2 * kPi)));
    CHECK(false_alarm_density(cfg, {false, true, false}) ==
          Catch::Approx(kSpeedOfLight / cfg.toa_max_m));
    CHECK(false_alarm_density(cfg, {false, false, true}) == Catch::Approx(1.0 / 100.0));
    CHECK(false_alarm_density(cfg, {true, true, true}) ==
          Catch::Approx(1.0 / (2 * kPi) * kSpeedOfLight / cfg.toa_max_m / 100.0));
    // Range-domain variant differs only in the TOA factor.
    CHECK(false_alarm_density_range_domain(cfg, {false, true, false}) ==
          Catch::Approx(1.0 / cfg.toa_max_m));
}

namespace {

FloorPlan room() {
    FloorPlan plan;
    plan.walls = {{{0, 0}, {20, 0}}, {{20, 0}, {20, 12}}, {{20, 12}, {0, 12}}, {{0, 12}, {0, 0}}};
    plan.roi_center = {10, 6};
    return plan;
}

}  // namespace

TEST_CASE("noiseless synthesis reproduces exact model values") {
    const FloorPlan plan = room();
    const auto feats = enumerate_virtual_anchors(plan, {{4, 4}});
    const Point2 agent{10, 6};
    const auto vis = visible_features(agent, plan, feats);
    REQUIRE_FALSE(vis[0].empty());

    BiasTruth bt;
    bt.orientation = 0.3;
    bt.clock = {7.0};
    for (const auto& f : feats) bt.rss[{f.anchor, f.index}] = {-35.0, 2.5};

    NoiseConfig cfg;
    cfg.sigma_aoa = 0.0;
    cfg.sigma_toa_m = 0.0;
    cfg.sigma_rss = 0.0;
    cfg.p_detect = 1.0;
    cfg.mu_false = 0.0;
    RngStream rng(11);
    const CategorySet all{true, true, true};
    const auto batch = synthesize_batch(vis, agent, bt, cfg, all, rng, 1);
    REQUIRE(batch.per_anchor[0].size() == vis[0].size());
    // Order is shuffled: match each measurement to exactly one model tuple.
    for (const auto& z : batch.per_anchor[0]) {
        int matches = 0;
        for (const auto& f : vis[0]) {
            const bool ok =
                std::abs(*z.aoa - aoa_of(agent, f.position, bt.orientation)) < 1e-12 &&
                std::abs(*z.toa - toa_of(agent, f.position, bt.clock[0])) < 1e-18 &&
                std::abs(*z.rss - rss_of(agent, f.position, -35.0, 2.5)) < 1e-12;
            if (ok) ++matches;
        }
        CHECK(matches == 1);
    }
}

TEST_CASE("synthesis respects the enabled category set") {
    const FloorPlan plan = room();
    const auto feats = enumerate_virtual_anchors(plan, {{4, 4}});
    const Point2 agent{10, 6};
    const auto vis = visible_features(agent, plan, feats);
    BiasTruth bt;
    bt.clock = {0.0};
    NoiseConfig cfg;
    RngStream rng(5);
    const auto batch = synthesize_batch(vis, agent, bt, cfg, {true, true, false}, rng, 1);
    for (const auto& z : batch.per_anchor[0]) {
        CHECK(z.aoa.has_value());
        CHECK(z.toa.has_value());
        CHECK_FALSE(z.rss.has_value());
    }
    CHECK_THROWS_AS(synthesize_batch(vis, agent, bt, cfg, {false, false, false}, rng, 1),
                    std::invalid_argument);
}

TEST_CASE("detection count and false alarm statistics") {
    const FloorPlan plan = room();
    const auto feats = enumerate_virtual_anchors(plan, {{4, 4}});
    const Point2 agent{10, 6};
    auto vis = visible_features(agent, plan, feats);
    // Keep exactly 4 visible features for the expectation check.
    REQUIRE(vis[0].size() >= 4);
    vis[0].resize(4);

    BiasTruth bt;
    bt.clock = {0.0};
    NoiseConfig cfg;  // P_d = 0.95, mu_false = 1
    RngStream rng(123);
    const CategorySet cats{true, true, false};

    long total = 0;
    int zero_false_slots = 0;
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        const auto batch = synthesize_batch(vis, agent, bt, cfg, cats, rng, t);
        total += static_cast<long>(batch.per_anchor[0].size());
    }
    // E[count] = 4 * 0.95 + 1.
    const double mean = static_cast<double>(total) / trials;
    CHECK(mean == Catch::Approx(4.8).margin(0.05));

    // With no features visible, count == false alarms; P(0) = e^{-1}.
    std::vector<std::vector<FeatureTruth>> empty_vis(1);
    for (int t = 0; t < trials; ++t) {
        const auto batch = synthesize_batch(empty_vis, agent, bt, cfg, cats, rng, t);
        if (batch.per_anchor[0].empty()) ++zero_false_slots;
    }
    CHECK(static_cast<double>(zero_false_slots) / trials ==
          Catch::Approx(std::exp(-1.0)).margin(0.01));
}

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rfslam/geometry.hpp"
#include "rfslam/measurement.hpp"
#include "rfslam/slam.hpp"

using namespace rfslam;

namespace {

SlamParams small_params() {
    SlamParams prm;
    prm.num_particles = 500;
    return prm;
}

InitPriors pinned_priors(double alpha, double omega) {
    InitPriors pr;
    pr.pin_alpha = alpha;
    pr.pin_omega = omega;
    pr.pin_xi = -35.0;
    pr.pin_beta = 2.5;
    return pr;
}

}  // namespace

TEST_CASE("init_beliefs honors priors") {
    SlamParams prm = small_params();
    prm.num_particles = 4000;
    InitPriors priors;

    SECTION("zero entrance radius collapses positions") {
        priors.entrance_radius = 0.0;
        RngStream rng(1);
        auto [agent, legacy] = init_beliefs({3, 4}, priors, prm, 2, rng);
        for (std::size_t s = 0; s < agent.size(); ++s) {
            CHECK(agent.x[s] == Catch::Approx(3.0));
            CHECK(agent.y[s] == Catch::Approx(4.0));
        }
        CHECK(legacy.total_features() == 0);
        CHECK(legacy.per_anchor.size() == 2);
    }

    SECTION("bias particle statistics") {
        RngStream rng(2);
        auto [agent, legacy] = init_beliefs({0, 0}, priors, prm, 1, rng);
        double alpha_mean = 0.0;
        for (double a : agent.alpha) {
            alpha_mean += a;
            CHECK(a >= -0.5);
            CHECK(a <= 0.5);
        }
        alpha_mean /= static_cast<double>(agent.size());
        // Uniform[-0.5, 0.5] mean is 0 with sd 1/sqrt(12 N).
        CHECK(std::abs(alpha_mean) < 3.0 / std::sqrt(12.0 * agent.size()));
        for (double w : agent.clock[0]) {
            CHECK(w >= 0.0);
            CHECK(w <= 50.0);
        }
        double wsum = std::accumulate(agent.w.begin(), agent.w.end(), 0.0);
        CHECK(wsum == Catch::Approx(1.0).margin(1e-9));
    }

    SECTION("pinned biases are point masses") {
        RngStream rng(3);
        auto [agent, legacy] = init_beliefs({0, 0}, pinned_priors(0.0, 0.0), prm, 1, rng);
        for (std::size_t s = 0; s < agent.size(); ++s) {
            CHECK(agent.alpha[s] == 0.0);
            CHECK(agent.clock[0][s] == 0.0);
        }
    }
}

TEST_CASE("predict implements the motion and survival models") {
    SlamParams prm = small_params();
    prm.num_particles = 1;
    prm.sigma_drive2 = 0.0;
    prm.sigma_jitter2 = 0.0;
    AgentBelief agent;
    agent.x = {0};
    agent.y = {0};
    agent.vx = {1};
    agent.vy = {2};
    agent.alpha = {0.1};
    agent.clock = {{5.0}};
    agent.w = {1.0};
    LegacySet legacy;
    legacy.per_anchor.resize(1);
    FeatureBelief f;
    f.px = {3};
    f.py = {4};
    f.xi = {-30};
    f.beta = {2};
    f.w = {1.0};
    f.existence = 1.0;
    legacy.per_anchor[0].push_back(f);
    FeatureBelief dead = f;
    dead.existence = 0.0;
    legacy.per_anchor[0].push_back(dead);

    RngStream rng(4);
    predict(agent, legacy, prm, rng);
    CHECK(agent.x[0] == Catch::Approx(1.0));
    CHECK(agent.y[0] == Catch::Approx(2.0));
    CHECK(agent.vx[0] == Catch::Approx(1.0));
    CHECK(agent.vy[0] == Catch::Approx(2.0));
    CHECK(agent.alpha[0] == 0.1);        // Dirac
    CHECK(agent.clock[0][0] == 5.0);     // Dirac
    CHECK(legacy.per_anchor[0][0].existence == Catch::Approx(0.999));
    CHECK(legacy.per_anchor[0][1].existence == 0.0);
    CHECK(legacy.per_anchor[0][0].px[0] == Catch::Approx(3.0));
}

TEST_CASE("legacy factor branches") {
    SlamParams prm;
    NoiseConfig cfg;
    const CategorySet cats{true, true, false};
    const Point2 u{0, 0}, p{3, 4};

    CHECK(legacy_factor_g(u, 0, 0, false, p, -30, 2, nullptr, cfg, cats, prm) == 1.0);
    CHECK(legacy_factor_g(u, 0, 0, true, p, -30, 2, nullptr, cfg, cats, prm) ==
          Catch::Approx(0.05));

    Measurement z;
    z.aoa = aoa_of(u, p, 0.2);
    z.toa = toa_of(u, p, 7.0);
    const double got = legacy_factor_g(u, 0.2, 7.0, true, p, -30, 2, &z, cfg, cats, prm);
    // Independent recomputation of the hit branch.
    const double lik = likelihood(z, u, 0.2, 7.0, p, -30, 2, cfg, cats);
    const double expect = lik * prm.p_detect / (prm.mu_false * false_alarm_density(cfg, cats));
    CHECK(got == Catch::Approx(expect).epsilon(1e-12));

    // Nonexistent candidate contributes the dummy pdf.
    CHECK(new_factor_h(u, 0, 0, false, p, -30, 2, false, z, 0.5, cfg, cats, prm) == 1.0);
    // Claimed-by-legacy branch is exactly 0.
    CHECK(new_factor_h(u, 0, 0, true, p, -30, 2, true, z, 0.5, cfg, cats, prm) == 0.0);
    const double h = new_factor_h(u, 0.2, 7.0, true, p, -30, 2, false, z, 0.5, cfg, cats, prm);
    CHECK(h == Catch::Approx(prm.mu_new * 0.5 * lik /
                             (prm.mu_false * false_alarm_density(cfg, cats)))
                   .epsilon(1e-12));
}

TEST_CASE("estimate oracles") {
    AgentBelief b;
    b.x = {0, 2};
    b.y = {0, 2};
    b.vx = {1, 3};
    b.vy = {0, 0};
    b.alpha = {0.1, 0.3};
    b.clock = {{1.0, 3.0}};
    b.w = {0.5, 0.5};
    const auto e = estimate_agent(b);
    CHECK(e.x == Catch::Approx(1.0));
    CHECK(e.y == Catch::Approx(1.0));
    CHECK(e.vx == Catch::Approx(2.0));
    CHECK(e.alpha == Catch::Approx(0.2));
    CHECK(e.clock[0] == Catch::Approx(2.0));

    // Direct-summation oracle on uneven weights.
    b.w = {0.25, 0.75};
    const auto e2 = estimate_agent(b);
    CHECK(e2.x == Catch::Approx(0.25 * 0 + 0.75 * 2).epsilon(1e-12));

    LegacySet legacy;
    legacy.per_anchor.resize(1);
    FeatureBelief f;
    f.anchor = 1;
    f.key = 7;
    f.px = {3};
    f.py = {4};
    f.xi = {-30};
    f.beta = {2};
    f.w = {1.0};
    f.existence = 0.9;
    legacy.per_anchor[0].push_back(f);
    FeatureBelief zero = f;
    zero.existence = 0.0;
    legacy.per_anchor[0].push_back(zero);
    const auto fe = estimate_features(legacy);
    REQUIRE(fe.size() == 1);  // P_e = 0 skipped
    CHECK(fe[0].position.x == Catch::Approx(3.0));
    CHECK(fe[0].position.y == Catch::Approx(4.0));
    CHECK(fe[0].existence == Catch::Approx(0.9));
    CHECK(fe[0].key == 7);
}

TEST_CASE("manage_features thresholds") {
    SlamParams prm;
    LegacySet legacy;
    legacy.per_anchor.resize(1);
    for (double pe : {5e-5, 0.3, 0.6}) {
        FeatureBelief f;
        f.px = {0};
        f.py = {0};
        f.xi = {-30};
        f.beta = {2};
        f.w = {1.0};
        f.existence = pe;
        legacy.per_anchor[0].push_back(f);
    }
    manage_features(legacy, prm);
    REQUIRE(legacy.per_anchor[0].size() == 2);
    CHECK(legacy.per_anchor[0][0].existence == Catch::Approx(0.3));
    CHECK_FALSE(legacy.per_anchor[0][0].detected);
    CHECK(legacy.per_anchor[0][1].existence == Catch::Approx(0.6));
    CHECK(legacy.per_anchor[0][1].detected);
}

TEST_CASE("weight utilities") {
    std::vector<double> w{1, 2, 1};
    normalize_weights(w);
    CHECK(w[1] == Catch::Approx(0.5));
    std::vector<double> zero{0.0, 0.0};
    CHECK_THROWS_AS(normalize_weights(zero), degenerate_update_error);

    std::vector<double> uniform(100, 0.01);
    CHECK(effective_sample_size(uniform) == Catch::Approx(100.0));
    std::vector<double> degenerate(100, 0.0);
    degenerate[7] = 1.0;
    CHECK(effective_sample_size(degenerate) == Catch::Approx(1.0));

    // One particle with weight 1: all resampled copies are that particle.
    const auto idx = systematic_resample_indices(degenerate, 50, 0.5);
    for (auto i : idx) CHECK(i == 7);
}

TEST_CASE("resampling preserves the weighted mean") {
    RngStream rng(9);
    const std::size_t n = 2000;
    AgentBelief b;
    b.x.resize(n);
    b.y.resize(n);
    b.vx.assign(n, 0);
    b.vy.assign(n, 0);
    b.alpha.assign(n, 0);
    b.clock = {std::vector<double>(n, 0)};
    b.w.resize(n);
    double mean_before = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        b.x[s] = rng.uniform(-10, 10);
        b.y[s] = rng.uniform(-10, 10);
        b.w[s] = rng.uniform(0.0, 1.0);
    }
    normalize_weights(b.w);
    for (std::size_t s = 0; s < n; ++s) mean_before += b.w[s] * b.x[s];

    double mean_after_avg = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        AgentBelief c = b;
        resample(c, rng);
        double m = 0.0;
        for (std::size_t s = 0; s < n; ++s) m += c.w[s] * c.x[s];
        mean_after_avg += m;
    }
    mean_after_avg /= trials;
    CHECK(mean_after_avg == Catch::Approx(mean_before).margin(0.05));
}

namespace {

struct Fixture {
    FloorPlan plan;
    std::vector<FeatureTruth> features;
    NoiseConfig cfg;
    CategorySet cats{true, true, false};
    BiasTruth biases;

    Fixture() {
        plan.walls = {{{0, 0}, {20, 0}},
                      {{20, 0}, {20, 12}},
                      {{20, 12}, {0, 12}},
                      {{0, 12}, {0, 0}}};
        plan.roi_center = {10, 6};
        features = enumerate_virtual_anchors(plan, {{4, 4}, {16, 8}});
        biases.orientation = 0.0;
        biases.clock = {0.0, 0.0};
    }
};

}  // namespace

TEST_CASE("no measurements leave the agent estimate unchanged") {
    Fixture fx;
    SlamParams prm = small_params();
    RngStream rng(21);
    auto [agent, legacy] = init_beliefs({10, 6}, pinned_priors(0, 0), prm, 2, rng);
    // Give the filter one tracked feature so missed detection has a factor.
    FeatureBelief f;
    const std::size_t n = agent.size();
    f.px.assign(n, 4.0);
    f.py.assign(n, 4.0);
    f.xi.assign(n, -35.0);
    f.beta.assign(n, 2.5);
    f.w.assign(n, 1.0 / static_cast<double>(n));
    f.existence = 0.8;
    legacy.per_anchor[0].push_back(f);

    const auto before = estimate_agent(agent);
    const double pe_before = legacy.per_anchor[0][0].existence;
    MeasurementBatch empty;
    empty.per_anchor.resize(2);
    slam_update(agent, legacy, empty, fx.cfg, fx.cats, pinned_priors(0, 0), prm, rng);
    const auto after = estimate_agent(agent);
    // Missed detection scales every particle equally: estimate untouched.
    CHECK(after.x == Catch::Approx(before.x).margin(1e-12));
    CHECK(after.y == Catch::Approx(before.y).margin(1e-12));
    // Existence drops: P_e (1 - P_d) / (1 - P_e P_d).
    const double expect_pe =
        pe_before * (1 - prm.p_detect) / (1 - pe_before * prm.p_detect);
    CHECK(legacy.per_anchor[0][0].existence == Catch::Approx(expect_pe).epsilon(1e-9));
}

TEST_CASE("existence decays under consecutive missed detections") {
    Fixture fx;
    SlamParams prm = small_params();
    RngStream rng(22);
    auto [agent, legacy] = init_beliefs({10, 6}, pinned_priors(0, 0), prm, 2, rng);
    FeatureBelief f;
    const std::size_t n = agent.size();
    f.px.assign(n, 4.0);
    f.py.assign(n, 4.0);
    f.xi.assign(n, -35.0);
    f.beta.assign(n, 2.5);
    f.w.assign(n, 1.0 / static_cast<double>(n));
    f.existence = 0.9;
    legacy.per_anchor[0].push_back(f);

    double last = f.existence;
    for (int k = 0; k < 5; ++k) {
        predict(agent, legacy, prm, rng);
        MeasurementBatch empty;
        empty.per_anchor.resize(2);
        slam_update(agent, legacy, empty, fx.cfg, fx.cats, pinned_priors(0, 0), prm, rng);
        const double pe = legacy.per_anchor[0][0].existence;
        CHECK(pe < last);
        CHECK(pe >= 0.0);
        last = pe;
    }
}

namespace {

MeasurementBatch batch_for(const Fixture& fx, Point2 agent_pos, RngStream& rng) {
    const auto vis = visible_features(agent_pos, fx.plan, fx.features);
    return synthesize_batch(vis, agent_pos, fx.biases, fx.cfg, fx.cats, rng, 1);
}

}  // namespace

TEST_CASE("batch permutation leaves the posterior invariant") {
    Fixture fx;
    SlamParams prm = small_params();
    RngStream synth(31);
    const Point2 pos{10, 6};
    MeasurementBatch batch = batch_for(fx, pos, synth);
    // Need at least two measurements somewhere for the permutation to matter.
    bool nontrivial = false;
    for (const auto& v : batch.per_anchor) nontrivial = nontrivial || v.size() >= 2;
    REQUIRE(nontrivial);
    MeasurementBatch permuted = batch;
    for (auto& v : permuted.per_anchor) std::reverse(v.begin(), v.end());

    auto run = [&](const MeasurementBatch& b) {
        RngStream rng(41);
        auto [agent, legacy] = init_beliefs(pos, pinned_priors(0, 0), prm, 2, rng);
        slam_update(agent, legacy, b, fx.cfg, fx.cats, pinned_priors(0, 0), prm, rng);
        return std::pair{estimate_agent(agent), estimate_features(legacy)};
    };
    const auto [ea, fa] = run(batch);
    const auto [eb, fb] = run(permuted);
    CHECK(ea.x == Catch::Approx(eb.x).margin(1e-9));
    CHECK(ea.y == Catch::Approx(eb.y).margin(1e-9));
    REQUIRE(fa.size() == fb.size());
    // Feature sets may be ordered differently; compare as sorted multisets.
    auto key = [](const FeatureEstimate& f) { return std::pair{f.position.x, f.position.y}; };
    std::vector<std::pair<double, double>> ka, kb;
    for (const auto& f : fa) ka.push_back(key(f));
    for (const auto& f : fb) kb.push_back(key(f));
    std::sort(ka.begin(), ka.end());
    std::sort(kb.begin(), kb.end());
    for (std::size_t i = 0; i < ka.size(); ++i) {
        CHECK(ka[i].first == Catch::Approx(kb[i].first).margin(1e-9));
        CHECK(ka[i].second == Catch::Approx(kb[i].second).margin(1e-9));
    }
}

TEST_CASE("plug-and-play: values in disabled categories are inert") {
    Fixture fx;
    SlamParams prm = small_params();
    // Synthesize with all three categories, then strip RSS.
    Fixture fx3 = fx;
    fx3.cats = {true, true, true};
    for (const auto& f : fx3.features) fx3.biases.rss[{f.anchor, f.index}] = {-35.0, 2.5};
    RngStream synth(51);
    const Point2 pos{10, 6};
    const auto vis = visible_features(pos, fx3.plan, fx3.features);
    MeasurementBatch full =
        synthesize_batch(vis, pos, fx3.biases, fx3.cfg, fx3.cats, synth, 1);
    MeasurementBatch stripped = full;
    for (auto& v : stripped.per_anchor)
        for (auto& z : v) z.rss.reset();

    const CategorySet enabled{true, true, false};
    auto run = [&](const MeasurementBatch& b) {
        RngStream rng(61);
        auto [agent, legacy] = init_beliefs(pos, pinned_priors(0, 0), prm, 2, rng);
        slam_update(agent, legacy, b, fx.cfg, enabled, pinned_priors(0, 0), prm, rng);
        return std::pair{estimate_agent(agent), estimate_features(legacy)};
    };
    const auto [ea, fa] = run(full);
    const auto [eb, fb] = run(stripped);
    // Bit-identical: the disabled category contributes factors of exactly 1.
    CHECK(ea.x == eb.x);
    CHECK(ea.y == eb.y);
    CHECK(ea.alpha == eb.alpha);
    CHECK(ea.clock[0] == eb.clock[0]);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
        CHECK(fa[i].position.x == fb[i].position.x);
        CHECK(fa[i].position.y == fb[i].position.y);
        CHECK(fa[i].existence == fb[i].existence);
    }
}

TEST_CASE("repeated observation grows feature confidence and map") {
    Fixture fx;
    SlamParams prm = small_params();
    prm.num_particles = 2000;
    RngStream rng(71);
    RngStream synth(72);
    auto [agent, legacy] = init_beliefs({10, 6}, pinned_priors(0, 0), prm, 2, rng);
    for (int slot = 1; slot <= 10; ++slot) {
        if (slot > 1) predict(agent, legacy, prm, rng);
        MeasurementBatch batch = batch_for(fx, {10, 6}, synth);
        slam_update(agent, legacy, batch, fx.cfg, fx.cats, pinned_priors(0, 0), prm, rng);
        manage_features(legacy, prm);
        for (const auto& anchor_feats : legacy.per_anchor)
            for (const auto& f : anchor_feats) {
                CHECK(f.existence >= 0.0);
                CHECK(f.existence <= 1.0);
                const double wsum = std::accumulate(f.w.begin(), f.w.end(), 0.0);
                CHECK(wsum == Catch::Approx(1.0).margin(1e-9));
            }
        const double wsum = std::accumulate(agent.w.begin(), agent.w.end(), 0.0);
        CHECK(wsum == Catch::Approx(1.0).margin(1e-9));
    }
    // After 10 slots of stationary observation, the persistent features
    // should be firmly detected.
    int detected = 0;
    for (const auto& anchor_feats : legacy.per_anchor)
        for (const auto& f : anchor_feats)
            if (f.existence >= prm.detection_threshold) ++detected;
    CHECK(detected >= 2);
}

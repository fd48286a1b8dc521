#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rfslam/crowdsource.hpp"
#include "rfslam/geometry.hpp"
#include "rfslam/measurement.hpp"
#include "rfslam/metrics.hpp"
#include "rfslam/scenario.hpp"
#include "rfslam/slam.hpp"

namespace rfslam {

struct VariantResult {
    // logs[a][r] is agent a's log in run r (agents ordered as in the scenario).
    std::vector<std::vector<RunLog>> logs;
    int failed_runs = 0;
    // Serialized cloud-map snapshot per upload event, per run.
    std::vector<std::vector<std::string>> orf_snapshots;
};

struct MonteCarloResult {
    VariantResult proposed;
    std::optional<VariantResult> baseline;
};

/// The classic no-bias-estimation variant: every bias particle pinned at the
/// nominal value (0 for orientation/clock, prior midpoints for RSS).
inline Scenario pinned_baseline(const Scenario& sc) {
    Scenario out = sc;
    out.priors.pin_alpha = 0.0;
    out.priors.pin_omega = 0.0;
    out.priors.pin_xi = 0.5 * (sc.priors.xi_min + sc.priors.xi_max);
    out.priors.pin_beta = 0.5 * (sc.priors.beta_min + sc.priors.beta_max);
    return out;
}

namespace detail {

// Substream id namespaces under the master seed.
inline constexpr std::uint64_t kStreamTruth = 1;
inline constexpr std::uint64_t kStreamSynth = 2;
inline constexpr std::uint64_t kStreamFilter = 3;
inline constexpr std::uint64_t kVariantProposed = 0;
inline constexpr std::uint64_t kVariantBaseline = 1;

struct AgentRuntime {
    const AgentSpec* spec = nullptr;
    AgentBelief belief;
    LegacySet legacy;
    ConvergenceTracker tracker;
    RunLog log;
    bool active = false;
    bool aborted = false;
    int last_upload_slot = -1000;
};

inline BiasTruth draw_bias_truth(const Scenario& sc, const std::vector<FeatureTruth>& features,
                                 RngStream& rng) {
    BiasTruth bt;
    bt.orientation = sc.bias.orientation;
    bt.clock.assign(sc.anchors.size(), sc.bias.clock);
    for (const auto& f : features) {
        RssTruth rt = sc.bias.rss_fixed;
        if (sc.bias.rss_from_prior) {
            rt.ref_rss = rng.uniform(sc.priors.xi_min, sc.priors.xi_max);
            rt.ple = rng.uniform(sc.priors.beta_min, sc.priors.beta_max);
        }
        bt.rss[{f.anchor, f.index}] = rt;
    }
    return bt;
}

inline SlotRecord make_record(int slot, const AgentTruth& truth, const BiasTruth& biases,
                              const AgentBelief& belief, const LegacySet& legacy,
                              const std::vector<std::vector<FeatureTruth>>& visible,
                              bool track_rss) {
    SlotRecord rec;
    rec.slot = slot;
    rec.truth_position = {truth.x, truth.y};
    rec.alpha_truth = biases.orientation;
    rec.clock_truth = biases.clock;
    const AgentEstimate est = estimate_agent(belief);
    rec.est_position = {est.x, est.y};
    rec.alpha_est = est.alpha;
    rec.clock_est = est.clock;
    std::vector<FeatureTruth> all_truth;
    for (const auto& per : visible) {
        for (const auto& f : per) {
            rec.truth_visible.push_back(f.position);
            all_truth.push_back(f);
        }
    }
    double xi_sum = 0.0, beta_sum = 0.0;
    int rss_count = 0;
    for (const auto& fe : estimate_features(legacy)) {
        if (!fe.detected) continue;
        rec.detected_features.push_back({fe.position, fe.existence});
        if (!track_rss || all_truth.empty()) continue;
        const FeatureTruth* best = nullptr;
        double best_d = 2.0;  // association gate for the diagnostic only
        for (const auto& tf : all_truth) {
            const double d = distance(tf.position, fe.position);
            if (d < best_d) {
                best_d = d;
                best = &tf;
            }
        }
        if (best) {
            const auto it = biases.rss.find({best->anchor, best->index});
            if (it != biases.rss.end()) {
                xi_sum += std::abs(fe.ref_rss - it->second.ref_rss);
                beta_sum += std::abs(fe.ple - it->second.ple);
                ++rss_count;
            }
        }
    }
    if (rss_count > 0) {
        rec.rss_xi_err = xi_sum / rss_count;
        rec.rss_beta_err = beta_sum / rss_count;
    }
    return rec;
}

}  // namespace detail

/// One full Monte Carlo run of a scenario: multi-agent frame schedule with an
/// optional shared cloud map. Cloud mutations are applied in (slot, agent)
/// order; agents between cloud interactions are independent.
inline std::pair<std::vector<RunLog>, std::vector<std::string>> run_once(
    const Scenario& sc, std::uint64_t variant_id, std::uint64_t run_id) {
    const auto features = enumerate_virtual_anchors(sc.plan, sc.anchors);
    RngStream truth_rng =
        RngStream::derive(sc.seed, {detail::kStreamTruth, variant_id, run_id});
    const BiasTruth biases = detail::draw_bias_truth(sc, features, truth_rng);

    std::vector<detail::AgentRuntime> agents(sc.agents.size());
    for (std::size_t a = 0; a < sc.agents.size(); ++a) {
        agents[a].spec = &sc.agents[a];
        agents[a].log.agent = sc.agents[a].id;
    }

    OrfMap orf;
    const WeightSchedule schedule{sc.crowd.n_ref};
    std::vector<std::string> snapshots;
    std::vector<int> all_anchors;
    for (std::size_t m = 0; m < sc.anchors.size(); ++m)
        all_anchors.push_back(static_cast<int>(m) + 1);

    for (int slot = 1; slot <= sc.horizon; ++slot) {
        for (std::size_t a = 0; a < agents.size(); ++a) {
            auto& ag = agents[a];
            const AgentSpec& spec = *ag.spec;
            if (slot < spec.entry_slot || ag.aborted) continue;
            RngStream synth_rng = RngStream::derive(
                sc.seed, {detail::kStreamSynth, variant_id, run_id, static_cast<std::uint64_t>(a),
                          static_cast<std::uint64_t>(slot)});
            RngStream filter_rng = RngStream::derive(
                sc.seed, {detail::kStreamFilter, variant_id, run_id, static_cast<std::uint64_t>(a),
                          static_cast<std::uint64_t>(slot)});

            if (!ag.active) {
                auto [belief, legacy] = init_beliefs(spec.waypoints.front(), sc.priors, sc.slam,
                                                     static_cast<int>(sc.anchors.size()),
                                                     filter_rng);
                ag.belief = std::move(belief);
                ag.legacy = std::move(legacy);
                if (sc.crowd.enabled && orf.total() > 0)
                    ag.legacy = download(orf, all_anchors, sc.priors, sc.slam, filter_rng);
                ag.active = true;
            } else {
                predict(ag.belief, ag.legacy, sc.slam, filter_rng);
            }

            const AgentTruth truth = truth_at_slot(spec, slot, sc.horizon, sc.slam.delta_t);
            const auto visible =
                visible_features({truth.x, truth.y}, sc.plan, features);
            const MeasurementBatch batch = synthesize_batch(
                visible, {truth.x, truth.y}, biases, sc.noise, spec.categories, synth_rng, slot);
            try {
                slam_update(ag.belief, ag.legacy, batch, sc.noise, spec.categories, sc.priors,
                            sc.slam, filter_rng);
            } catch (const degenerate_update_error&) {
                ag.aborted = true;
                ag.log.failed = true;
                continue;
            }
            manage_features(ag.legacy, sc.slam);

            ag.log.slots.push_back(detail::make_record(slot, truth, biases, ag.belief, ag.legacy,
                                                       visible, spec.categories.rss));

            if (sc.crowd.enabled) {
                const bool converged = ag.tracker.observe(estimate_features(ag.legacy));
                const bool pinned = spec.pinned_upload_slot == slot;
                if ((converged && slot - ag.last_upload_slot >= 5) || pinned) {
                    const LrfMap lrf = build_lrf(ag.legacy, spec.id, slot, sc.slam);
                    orf = prune_orf(weighted_upload(std::move(orf), lrf, schedule),
                                    sc.crowd.p_threshold);
                    ag.last_upload_slot = slot;
                    std::ostringstream os;
                    export_orf(orf, os);
                    snapshots.push_back(os.str());
                }
            }
        }
    }

    std::vector<RunLog> logs;
    logs.reserve(agents.size());
    for (auto& ag : agents) logs.push_back(std::move(ag.log));
    return {std::move(logs), std::move(snapshots)};
}

inline VariantResult run_variant(const Scenario& sc, std::uint64_t variant_id) {
    VariantResult res;
    res.logs.assign(sc.agents.size(), {});
    for (int r = 0; r < sc.runs; ++r) {
        auto [logs, snapshots] = run_once(sc, variant_id, static_cast<std::uint64_t>(r));
        bool failed = false;
        for (std::size_t a = 0; a < logs.size(); ++a) {
            failed = failed || logs[a].failed;
            res.logs[a].push_back(std::move(logs[a]));
        }
        if (failed) ++res.failed_runs;
        res.orf_snapshots.push_back(std::move(snapshots));
    }
    return res;
}

/// Seeded Monte Carlo execution of the scenario for the proposed method and,
/// optionally, the pinned-bias baseline. Fully deterministic given the seed.
inline MonteCarloResult run_monte_carlo(const Scenario& sc, bool include_baseline = true) {
    MonteCarloResult res;
    res.proposed = run_variant(sc, detail::kVariantProposed);
    if (include_baseline)
        res.baseline = run_variant(pinned_baseline(sc), detail::kVariantBaseline);
    return res;
}

/// Per-slot mean mapping error (detected features vs truth visible set) over
/// runs for one agent.
inline std::vector<double> mospa_trace(const std::vector<RunLog>& runs, double cutoff = 10.0,
                                       double order = 1.0) {
    std::size_t horizon = 0;
    for (const auto& log : runs)
        if (!log.failed) horizon = std::max(horizon, log.slots.size());
    std::vector<double> trace(horizon, 0.0);
    std::vector<int> counts(horizon, 0);
    for (const auto& log : runs) {
        if (log.failed) continue;
        for (std::size_t k = 0; k < log.slots.size(); ++k) {
            const auto& rec = log.slots[k];
            std::vector<Point2> est;
            for (const auto& f : rec.detected_features) est.push_back(f.position);
            trace[k] += mospa(est, rec.truth_visible, cutoff, order);
            ++counts[k];
        }
    }
    for (std::size_t k = 0; k < horizon; ++k)
        if (counts[k] > 0) trace[k] /= counts[k];
    return trace;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline void write_per_slot_csv(const VariantResult& res, const Scenario& sc, std::ostream& os,
                               double mospa_cutoff, double mospa_order) {
    os << "slot,agent,truth_x,truth_y,est_x,est_y,mae,obe,cbe,mospa,detected\n";
    for (std::size_t a = 0; a < res.logs.size(); ++a) {
        const auto& runs = res.logs[a];
        const auto mae = mae_trajectory(runs);
        const auto bias = bias_errors(runs);
        const auto mospa_t = mospa_trace(runs, mospa_cutoff, mospa_order);
        std::size_t horizon = 0;
        const RunLog* ref = nullptr;
        for (const auto& log : runs) {
            if (log.failed) continue;
            if (log.slots.size() > horizon) {
                horizon = log.slots.size();
                ref = &log;
            }
        }
        for (std::size_t k = 0; k < horizon; ++k) {
            double ex = 0, ey = 0, det = 0;
            int cnt = 0;
            for (const auto& log : runs) {
                if (log.failed || k >= log.slots.size()) continue;
                ex += log.slots[k].est_position.x;
                ey += log.slots[k].est_position.y;
                det += static_cast<double>(log.slots[k].detected_features.size());
                ++cnt;
            }
            if (cnt > 0) {
                ex /= cnt;
                ey /= cnt;
                det /= cnt;
            }
            const auto& rec = ref->slots[k];
            os << rec.slot << ',' << sc.agents[a].id << ',' << fmt(rec.truth_position.x) << ','
               << fmt(rec.truth_position.y) << ',' << fmt(ex) << ',' << fmt(ey) << ','
               << fmt(mae.per_slot[k]) << ',' << fmt(bias.obe[k]) << ',' << fmt(bias.cbe[k])
               << ',' << fmt(mospa_t[k]) << ',' << fmt(det) << '\n';
        }
    }
}

inline void write_summary_row(const VariantResult& res, const Scenario& sc, std::ostream& os,
                              const char* name, double mospa_cutoff, double mospa_order) {
    for (std::size_t a = 0; a < res.logs.size(); ++a) {
        const auto mae = mae_trajectory(res.logs[a]);
        const auto mospa_t = mospa_trace(res.logs[a], mospa_cutoff, mospa_order);
        const double final_mospa = mospa_t.empty() ? 0.0 : mospa_t.back();
        os << name << ',' << sc.agents[a].id << ',' << fmt(mae.max) << ',' << fmt(final_mospa)
           << ',' << res.failed_runs << '\n';
    }
}

}  // namespace detail

/// Writes the result artifacts: per-slot CSVs, the variant summary CSV, and
/// one cloud-map snapshot file per upload event.
inline void export_results(const MonteCarloResult& res, const Scenario& sc,
                           const std::string& out_dir, double mospa_cutoff = 10.0,
                           double mospa_order = 1.0) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    auto open = [&](const std::string& name) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error("export_results: cannot write " + name);
        return f;
    };
    {
        auto f = open("per_slot_proposed.csv");
        detail::write_per_slot_csv(res.proposed, sc, f, mospa_cutoff, mospa_order);
    }
    if (res.baseline) {
        auto f = open("per_slot_baseline.csv");
        detail::write_per_slot_csv(*res.baseline, sc, f, mospa_cutoff, mospa_order);
    }
    {
        auto f = open("summary.csv");
        f << "variant,agent,max_mae,final_mospa,failed_runs\n";
        detail::write_summary_row(res.proposed, sc, f, "proposed", mospa_cutoff, mospa_order);
        if (res.baseline)
            detail::write_summary_row(*res.baseline, sc, f, "baseline", mospa_cutoff, mospa_order);
    }
    for (std::size_t r = 0; r < res.proposed.orf_snapshots.size(); ++r) {
        for (std::size_t k = 0; k < res.proposed.orf_snapshots[r].size(); ++k) {
            char name[64];
            std::snprintf(name, sizeof(name), "orf_run%zu_event%zu.txt", r, k);
            auto f = open(name);
            f << res.proposed.orf_snapshots[r][k];
        }
    }
}

}  // namespace rfslam

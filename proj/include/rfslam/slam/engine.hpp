#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "rfslam/geometry.hpp"
#include "rfslam/measurement.hpp"
#include "rfslam/random.hpp"
#include "rfslam/slam/association.hpp"
#include "rfslam/slam/belief.hpp"
#include "rfslam/slam/params.hpp"

namespace rfslam {

/// Draws the initial agent belief: positions uniform in a disc around the
/// entrance, zero-mean Gaussian velocities, bias particles uniform over the
/// prior ranges (or point masses when pinned). The map starts empty.
inline std::pair<AgentBelief, LegacySet> init_beliefs(Point2 entrance, const InitPriors& priors,
                                                      const SlamParams& prm, int num_anchors,
                                                      RngStream& rng) {
    const std::size_t n = static_cast<std::size_t>(prm.num_particles);
    AgentBelief b;
    b.x.resize(n);
    b.y.resize(n);
    b.vx.resize(n);
    b.vy.resize(n);
    b.alpha.resize(n);
    b.clock.assign(static_cast<std::size_t>(num_anchors), std::vector<double>(n));
    b.w.assign(n, 1.0 / static_cast<double>(n));
    for (std::size_t s = 0; s < n; ++s) {
        const double r = priors.entrance_radius * std::sqrt(rng.uniform(0.0, 1.0));
        const double th = rng.uniform(-kPi, kPi);
        b.x[s] = entrance.x + r * std::cos(th);
        b.y[s] = entrance.y + r * std::sin(th);
        b.vx[s] = rng.normal(0.0, priors.velocity_sigma);
        b.vy[s] = rng.normal(0.0, priors.velocity_sigma);
        b.alpha[s] = priors.pin_alpha ? *priors.pin_alpha
                                      : rng.uniform(priors.alpha_min, priors.alpha_max);
        for (auto& c : b.clock)
            c[s] = priors.pin_omega ? *priors.pin_omega
                                    : rng.uniform(priors.omega_min, priors.omega_max);
    }
    LegacySet legacy;
    legacy.per_anchor.resize(static_cast<std::size_t>(num_anchors));
    return {std::move(b), std::move(legacy)};
}

/// One prediction step: near constant-velocity motion for the agent, Dirac
/// transitions for the biases, stabilization jitter for feature particles,
/// and survival decay of each existence probability.
inline void predict(AgentBelief& agent, LegacySet& legacy, const SlamParams& prm, RngStream& rng) {
    const double sd = std::sqrt(prm.sigma_drive2);
    const double dt = prm.delta_t;
    for (std::size_t s = 0; s < agent.size(); ++s) {
        agent.x[s] += dt * agent.vx[s] + rng.normal(0.0, sd);
        agent.y[s] += dt * agent.vy[s] + rng.normal(0.0, sd);
        agent.vx[s] += rng.normal(0.0, sd);
        agent.vy[s] += rng.normal(0.0, sd);
    }
    const double sj = std::sqrt(prm.sigma_jitter2);
    for (auto& anchor_feats : legacy.per_anchor) {
        for (auto& f : anchor_feats) {
            for (std::size_t s = 0; s < f.size(); ++s) {
                f.px[s] += rng.normal(0.0, sj);
                f.py[s] += rng.normal(0.0, sj);
                f.xi[s] += rng.normal(0.0, sj);
                f.beta[s] += rng.normal(0.0, sj);
            }
            f.existence *= prm.p_survival;
        }
    }
}

/// Legacy-feature factor for one particle hypothesis. `assoc` is the
/// associated measurement (nullptr for the missed-detection branch).
inline double legacy_factor_g(Point2 u, double orientation_bias, double clock_bias_m, bool exists,
                              Point2 p, double ref_rss, double ple, const Measurement* assoc,
                              const NoiseConfig& cfg, CategorySet enabled, const SlamParams& prm) {
    if (!exists) return 1.0;
    if (assoc == nullptr) return 1.0 - prm.p_detect;
    const double lik =
        likelihood(*assoc, u, orientation_bias, clock_bias_m, p, ref_rss, ple, cfg, enabled);
    return lik * prm.p_detect / (prm.mu_false * false_alarm_density(cfg, enabled));
}

/// New-feature factor for one candidate particle. `claimed_by_legacy` is the
/// b != 0 branch; `birth_density` is the value of the birth pdf at the
/// candidate. A nonexistent candidate contributes the dummy pdf, 1.
inline double new_factor_h(Point2 u, double orientation_bias, double clock_bias_m, bool exists,
                           Point2 p, double ref_rss, double ple, bool claimed_by_legacy,
                           const Measurement& z, double birth_density, const NoiseConfig& cfg,
                           CategorySet enabled, const SlamParams& prm) {
    if (claimed_by_legacy) return 0.0;
    if (!exists) return 1.0;
    const double lik = likelihood(z, u, orientation_bias, clock_bias_m, p, ref_rss, ple, cfg, enabled);
    return prm.mu_new * birth_density * lik / (prm.mu_false * false_alarm_density(cfg, enabled));
}

namespace detail {

/// Per-measurement birth cloud drawn by inverting the measurement around the
/// agent particles. Index s pairs with agent particle s.
struct BirthCloud {
    std::vector<double> px, py, xi, beta;
};

inline BirthCloud sample_birth(const AgentBelief& agent, std::size_t anchor_idx,
                               const Measurement& z, const NoiseConfig& cfg, CategorySet enabled,
                               const InitPriors& priors, const SlamParams& prm, RngStream& rng) {
    const std::size_t n = agent.size();
    BirthCloud c;
    c.px.resize(n);
    c.py.resize(n);
    c.xi.resize(n);
    c.beta.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        const double xi = priors.pin_xi ? *priors.pin_xi : rng.uniform(priors.xi_min, priors.xi_max);
        const double beta =
            priors.pin_beta ? *priors.pin_beta : rng.uniform(priors.beta_min, priors.beta_max);
        double theta;
        if (enabled.aoa && z.aoa) {
            theta = *z.aoa - agent.alpha[s] + rng.normal(0.0, prm.birth_angle_sigma);
        } else {
            theta = rng.uniform(-kPi, kPi);
        }
        double range;
        if (enabled.toa && z.toa) {
            range = *z.toa * kSpeedOfLight + agent.clock[anchor_idx][s] +
                    rng.normal(0.0, prm.birth_range_sigma);
        } else if (enabled.rss && z.rss) {
            range = std::pow(10.0, (xi - *z.rss) / (10.0 * beta)) +
                    rng.normal(0.0, prm.birth_range_sigma);
        } else {
            range = rng.uniform(0.0, cfg.toa_max_m);
        }
        range = std::max(range, 0.1);
        c.px[s] = agent.x[s] + range * std::cos(theta);
        c.py[s] = agent.y[s] + range * std::sin(theta);
        c.xi[s] = xi;
        c.beta[s] = beta;
    }
    return c;
}

/// Content hash over the enabled fields of a measurement. Keys the birth
/// proposal's RNG substream so results do not depend on batch ordering or on
/// values carried in disabled categories.
inline std::uint64_t measurement_hash(const Measurement& z, CategorySet enabled) {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    auto mix = [&h](double v) { h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v)); };
    if (enabled.aoa && z.aoa) mix(*z.aoa);
    if (enabled.toa && z.toa) mix(*z.toa);
    if (enabled.rss && z.rss) mix(*z.rss);
    return h;
}

}  // namespace detail

struct UpdateDiagnostics {
    int births = 0;
    bool all_associations_converged = true;
};

/// One measurement-update step of the BP-SLAM engine: measurement evaluation
/// for legacy and candidate new features, loopy data association, belief
/// fusion at the agent and feature variable nodes, and admission of new
/// features. Throws degenerate_update_error on total weight collapse.
inline UpdateDiagnostics slam_update(AgentBelief& agent, LegacySet& legacy,
                                     const MeasurementBatch& batch, const NoiseConfig& cfg,
                                     CategorySet enabled, const InitPriors& priors,
                                     const SlamParams& prm, RngStream& rng) {
    UpdateDiagnostics diag;
    const std::uint64_t birth_seed = rng.engine()();
    const std::size_t n = agent.size();
    const double ff = false_alarm_density_range_domain(cfg, enabled);
    const double detect_gain = prm.p_detect / (prm.mu_false * ff);
    const double log_norm_aoa = -std::log(cfg.sigma_aoa * std::sqrt(2.0 * kPi));
    const double log_norm_toa = -std::log(cfg.sigma_toa_m * std::sqrt(2.0 * kPi));
    const double log_norm_rss = -std::log(cfg.sigma_rss * std::sqrt(2.0 * kPi));

    std::vector<double> agent_log_mult(n, 0.0);

    const std::size_t num_anchors = legacy.per_anchor.size();
    for (std::size_t mi = 0; mi < num_anchors; ++mi) {
        auto& feats = legacy.per_anchor[mi];
        static const std::vector<Measurement> no_meas;
        const auto& meas = mi < batch.per_anchor.size() ? batch.per_anchor[mi] : no_meas;
        const std::size_t K = feats.size();
        const std::size_t M = meas.size();
        if (K == 0 && M == 0) continue;

        // Per-feature predicted measurement values, paired particle indices.
        std::vector<std::vector<double>> pred_aoa(K), pred_rng(K), pred_rss(K);
        std::vector<std::vector<double>> pair_w(K);  // normalized agent*feature weights
        for (std::size_t i = 0; i < K; ++i) {
            const auto& f = feats[i];
            pred_rng[i].resize(n);
            if (enabled.aoa) pred_aoa[i].resize(n);
            if (enabled.rss) pred_rss[i].resize(n);
            pair_w[i].resize(n);
            double wsum = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double dx = f.px[s] - agent.x[s];
                const double dy = f.py[s] - agent.y[s];
                const double r = std::max(std::hypot(dx, dy), 1e-9);
                pred_rng[i][s] = r;
                if (enabled.aoa) pred_aoa[i][s] = std::atan2(dy, dx) + agent.alpha[s];
                if (enabled.rss) pred_rss[i][s] = -10.0 * f.beta[s] * std::log10(r) + f.xi[s];
                pair_w[i][s] = agent.w[s] * f.w[s];
                wsum += pair_w[i][s];
            }
            const double inv = wsum > 0.0 ? 1.0 / wsum : 0.0;
            for (auto& w : pair_w[i]) w *= inv;
        }

        // Likelihood ratios per (feature, measurement, particle) and their
        // particle averages feeding the association stage.
        std::vector<std::vector<std::vector<double>>> ratio(K);
        AssociationInput assoc_in;
        assoc_in.legacy.assign(K, std::vector<double>(M + 1, 0.0));
        for (std::size_t i = 0; i < K; ++i) {
            ratio[i].assign(M, std::vector<double>(n));
            const double pe = feats[i].existence;
            assoc_in.legacy[i][0] = (1.0 - pe) + pe * (1.0 - prm.p_detect);
            for (std::size_t j = 0; j < M; ++j) {
                const Measurement& z = meas[j];
                double avg = 0.0;
                for (std::size_t s = 0; s < n; ++s) {
                    double log_lik = 0.0;
                    if (enabled.aoa && z.aoa) {
                        const double res = wrap_angle(*z.aoa - pred_aoa[i][s]) / cfg.sigma_aoa;
                        log_lik += log_norm_aoa - 0.5 * res * res;
                    }
                    if (enabled.toa && z.toa) {
                        const double res =
                            (*z.toa * kSpeedOfLight + agent.clock[mi][s] - pred_rng[i][s]) /
                            cfg.sigma_toa_m;
                        log_lik += log_norm_toa - 0.5 * res * res;
                    }
                    if (enabled.rss && z.rss) {
                        const double res = (*z.rss - pred_rss[i][s]) / cfg.sigma_rss;
                        log_lik += log_norm_rss - 0.5 * res * res;
                    }
                    const double v = detect_gain * std::exp(log_lik);
                    ratio[i][j][s] = v;
                    avg += pair_w[i][s] * v;
                }
                assoc_in.legacy[i][j + 1] = pe * avg;
            }
        }

        // Candidate new-feature clouds and their averaged factor values.
        std::vector<detail::BirthCloud> births(M);
        std::vector<std::vector<double>> birth_lik(M);
        assoc_in.new_weight.assign(M, 0.0);
        for (std::size_t j = 0; j < M; ++j) {
            const Measurement& z = meas[j];
            RngStream birth_rng = RngStream::derive(
                birth_seed,
                {static_cast<std::uint64_t>(mi), detail::measurement_hash(z, enabled)});
            births[j] = detail::sample_birth(agent, mi, z, cfg, enabled, priors, prm, birth_rng);
            birth_lik[j].resize(n);
            double avg = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double dx = births[j].px[s] - agent.x[s];
                const double dy = births[j].py[s] - agent.y[s];
                const double r = std::max(std::hypot(dx, dy), 1e-9);
                double log_lik = 0.0;
                if (enabled.aoa && z.aoa) {
                    const double res =
                        wrap_angle(*z.aoa - std::atan2(dy, dx) - agent.alpha[s]) / cfg.sigma_aoa;
                    log_lik += log_norm_aoa - 0.5 * res * res;
                }
                if (enabled.toa && z.toa) {
                    const double res =
                        (*z.toa * kSpeedOfLight + agent.clock[mi][s] - r) / cfg.sigma_toa_m;
                    log_lik += log_norm_toa - 0.5 * res * res;
                }
                if (enabled.rss && z.rss) {
                    const double model = -10.0 * births[j].beta[s] * std::log10(r) + births[j].xi[s];
                    const double res = (*z.rss - model) / cfg.sigma_rss;
                    log_lik += log_norm_rss - 0.5 * res * res;
                }
                birth_lik[j][s] = std::exp(log_lik);
                avg += agent.w[s] * birth_lik[j][s];
            }
            assoc_in.new_weight[j] = prm.mu_new * avg / (prm.mu_false * ff);
        }

        const AssociationMarginals marg = associate(assoc_in, prm);
        diag.all_associations_converged = diag.all_associations_converged && marg.converged;

        // Fuse at the agent node: product over features of the association-
        // message-weighted factors, rescaled per factor against underflow.
        for (std::size_t i = 0; i < K; ++i) {
            const double pe = feats[i].existence;
            const double base = (1.0 - pe) + pe * (1.0 - prm.p_detect);
            double max_m = 0.0;
            std::vector<double> m_i(n);
            for (std::size_t s = 0; s < n; ++s) {
                double acc = base;
                for (std::size_t j = 0; j < M; ++j)
                    acc += pe * marg.msg_meas_to_feature[i][j] * ratio[i][j][s];
                m_i[s] = acc;
                max_m = std::max(max_m, acc);
            }
            if (max_m <= 0.0) continue;
            const double inv = 1.0 / max_m;
            for (std::size_t s = 0; s < n; ++s) agent_log_mult[s] += std::log(m_i[s] * inv);
        }

        // Fuse at each legacy-feature node and refresh its existence.
        for (std::size_t i = 0; i < K; ++i) {
            auto& f = feats[i];
            const double pe = f.existence;
            double mass1 = 0.0;
            std::vector<double> bracket(n);
            for (std::size_t s = 0; s < n; ++s) {
                double acc = 1.0 - prm.p_detect;
                for (std::size_t j = 0; j < M; ++j)
                    acc += marg.msg_meas_to_feature[i][j] * ratio[i][j][s];
                bracket[s] = acc;
                mass1 += pair_w[i][s] * acc;
            }
            mass1 *= pe;
            const double mass0 = 1.0 - pe;
            f.existence = mass1 + mass0 > 0.0 ? mass1 / (mass1 + mass0) : 0.0;
            double wsum = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                f.w[s] *= bracket[s];
                wsum += f.w[s];
            }
            if (wsum > 0.0) {
                for (auto& w : f.w) w /= wsum;
            } else {
                f.existence = 0.0;
                const double u = 1.0 / static_cast<double>(n);
                std::fill(f.w.begin(), f.w.end(), u);
            }
        }

        // Admit new features whose posterior new-feature mass clears the
        // unreliability threshold; duplicates of tracked features are claimed
        // by the association stage and stay below it. Admissions are ordered
        // by measurement content hash so the map layout (and every later RNG
        // draw) is independent of batch ordering.
        std::vector<std::pair<std::uint64_t, std::size_t>> admitted;
        for (std::size_t j = 0; j < M; ++j)
            if (marg.p_new[j] > prm.unreliability_threshold)
                admitted.emplace_back(detail::measurement_hash(meas[j], enabled), j);
        std::sort(admitted.begin(), admitted.end());
        for (const auto& [hash, j] : admitted) {
            FeatureBelief f;
            f.anchor = static_cast<int>(mi) + 1;
            f.key = legacy.next_key++;
            f.existence = marg.p_new[j];
            f.px = std::move(births[j].px);
            f.py = std::move(births[j].py);
            f.xi = std::move(births[j].xi);
            f.beta = std::move(births[j].beta);
            f.w.resize(n);
            double wsum = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                f.w[s] = agent.w[s] * birth_lik[j][s];
                wsum += f.w[s];
            }
            if (wsum > 0.0)
                for (auto& w : f.w) w /= wsum;
            else
                std::fill(f.w.begin(), f.w.end(), 1.0 / static_cast<double>(n));
            feats.push_back(std::move(f));
            ++diag.births;
        }
    }

    // Apply the accumulated agent reweighting.
    double max_log = -1e300;
    for (double v : agent_log_mult) max_log = std::max(max_log, v);
    for (std::size_t s = 0; s < n; ++s) agent.w[s] *= std::exp(agent_log_mult[s] - max_log);
    normalize_weights(agent.w);

    maybe_resample(agent, prm, rng);
    for (auto& anchor_feats : legacy.per_anchor)
        for (auto& f : anchor_feats) maybe_resample(f, prm, rng);
    return diag;
}

}  // namespace rfslam

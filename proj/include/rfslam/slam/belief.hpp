#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rfslam/geometry.hpp"
#include "rfslam/random.hpp"
#include "rfslam/slam/params.hpp"

namespace rfslam {

class degenerate_update_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Particle cloud over the agent's kinematic state, orientation bias, and
/// per-anchor clock biases. Structure-of-arrays, one weight per particle.
struct AgentBelief {
    std::vector<double> x, y, vx, vy;
    std::vector<double> alpha;                 // rad
    std::vector<std::vector<double>> clock;    // [anchor][particle], meters
    std::vector<double> w;

    std::size_t size() const { return x.size(); }
};

/// Particle cloud over one hypothesized feature (position + RSS parameters)
/// with a scalar posterior existence probability.
struct FeatureBelief {
    int anchor = 1;
    int key = 0;
    std::vector<double> px, py;
    std::vector<double> xi, beta;  // RSS ref (dBm) and path loss exponent
    std::vector<double> w;
    double existence = 0.0;
    bool detected = false;

    std::size_t size() const { return px.size(); }
};

struct LegacySet {
    std::vector<std::vector<FeatureBelief>> per_anchor;
    int next_key = 1;

    std::size_t total_features() const {
        std::size_t n = 0;
        for (const auto& v : per_anchor) n += v.size();
        return n;
    }
};

inline void normalize_weights(std::vector<double>& w) {
    double sum = 0.0;
    for (double v : w) sum += v;
    if (!(sum > 0.0) || !std::isfinite(sum))
        throw degenerate_update_error("weight normalization failed: total weight is zero or non-finite");
    const double inv = 1.0 / sum;
    for (double& v : w) v *= inv;
}

inline double effective_sample_size(const std::vector<double>& w) {
    double s2 = 0.0;
    for (double v : w) s2 += v * v;
    return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

/// Systematic resampling offsets: n strata with one shared uniform draw.
inline std::vector<std::size_t> systematic_resample_indices(const std::vector<double>& w,
                                                            std::size_t n, double u01) {
    std::vector<std::size_t> idx(n);
    double cum = w.empty() ? 0.0 : w[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double target = (static_cast<double>(i) + u01) / static_cast<double>(n);
        while (cum < target && j + 1 < w.size()) cum += w[++j];
        idx[i] = j;
    }
    return idx;
}

inline void resample(AgentBelief& b, RngStream& rng) {
    const std::size_t n = b.size();
    const auto idx = systematic_resample_indices(b.w, n, rng.uniform(0.0, 1.0));
    auto gather = [&](std::vector<double>& v) {
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = v[idx[i]];
        v = std::move(out);
    };
    gather(b.x);
    gather(b.y);
    gather(b.vx);
    gather(b.vy);
    gather(b.alpha);
    for (auto& c : b.clock) gather(c);
    std::fill(b.w.begin(), b.w.end(), 1.0 / static_cast<double>(n));
}

inline void resample(FeatureBelief& f, RngStream& rng) {
    const std::size_t n = f.size();
    const auto idx = systematic_resample_indices(f.w, n, rng.uniform(0.0, 1.0));
    auto gather = [&](std::vector<double>& v) {
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = v[idx[i]];
        v = std::move(out);
    };
    gather(f.px);
    gather(f.py);
    gather(f.xi);
    gather(f.beta);
    std::fill(f.w.begin(), f.w.end(), 1.0 / static_cast<double>(n));
}

template <class Belief>
inline void maybe_resample(Belief& b, const SlamParams& prm, RngStream& rng) {
    if (effective_sample_size(b.w) < static_cast<double>(prm.num_particles) / 2.0)
        resample(b, rng);
}

struct AgentEstimate {
    double x = 0, y = 0, vx = 0, vy = 0;
    double alpha = 0;
    std::vector<double> clock;
};

/// MMSE estimate: weighted particle means.
inline AgentEstimate estimate_agent(const AgentBelief& b) {
    AgentEstimate e;
    e.clock.assign(b.clock.size(), 0.0);
    for (std::size_t s = 0; s < b.size(); ++s) {
        const double w = b.w[s];
        e.x += w * b.x[s];
        e.y += w * b.y[s];
        e.vx += w * b.vx[s];
        e.vy += w * b.vy[s];
        e.alpha += w * b.alpha[s];
        for (std::size_t m = 0; m < b.clock.size(); ++m) e.clock[m] += w * b.clock[m][s];
    }
    return e;
}

struct FeatureEstimate {
    int anchor = 1;
    int key = 0;
    Point2 position;
    double existence = 0.0;
    double ref_rss = 0.0;
    double ple = 0.0;
    bool detected = false;
};

/// Per-feature MMSE positions conditional on existence. Features with
/// existence exactly 0 are skipped (estimate undefined).
inline std::vector<FeatureEstimate> estimate_features(const LegacySet& legacy) {
    std::vector<FeatureEstimate> out;
    for (const auto& anchor_feats : legacy.per_anchor) {
        for (const auto& f : anchor_feats) {
            if (f.existence <= 0.0) continue;
            FeatureEstimate e;
            e.anchor = f.anchor;
            e.key = f.key;
            e.existence = f.existence;
            e.detected = f.detected;
            for (std::size_t s = 0; s < f.size(); ++s) {
                e.position.x += f.w[s] * f.px[s];
                e.position.y += f.w[s] * f.py[s];
                e.ref_rss += f.w[s] * f.xi[s];
                e.ple += f.w[s] * f.beta[s];
            }
            out.push_back(e);
        }
    }
    return out;
}

/// Prunes features below the unreliability threshold and flags the ones at or
/// above the detection threshold.
inline void manage_features(LegacySet& legacy, const SlamParams& prm) {
    for (auto& anchor_feats : legacy.per_anchor) {
        std::erase_if(anchor_feats, [&](const FeatureBelief& f) {
            return f.existence < prm.unreliability_threshold;
        });
        for (auto& f : anchor_feats) f.detected = f.existence >= prm.detection_threshold;
    }
}

}  // namespace rfslam

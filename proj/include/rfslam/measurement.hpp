#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rfslam/geometry.hpp"
#include "rfslam/random.hpp"

namespace rfslam {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.14159265358979323846;

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return a - kPi;
}

struct CategorySet {
    bool aoa = false;
    bool toa = false;
    bool rss = false;

    bool any() const { return aoa || toa || rss; }
    int count() const { return int(aoa) + int(toa) + int(rss); }
};

struct RssTruth {
    double ref_rss = -35.0;  // dBm at 1 m
    double ple = 2.0;
};

/// Scenario-level measurement biases; time-invariant.
struct BiasTruth {
    double orientation = 0.0;                       // rad, agent-wide
    std::vector<double> clock;                      // meters, per anchor
    std::map<std::pair<int, int>, RssTruth> rss;    // per (anchor, feature index)
};

struct Measurement {
    std::optional<double> aoa;  // rad
    std::optional<double> toa;  // seconds
    std::optional<double> rss;  // dBm
};

struct MeasurementBatch {
    int slot = 0;
    std::vector<std::vector<Measurement>> per_anchor;  // index m-1, unordered, no origin labels
};

struct NoiseConfig {
    double sigma_aoa = kPi / 180.0;  // rad
    double sigma_toa_m = 0.15;       // meters (applied to TOA as sigma_toa_m / c)
    double sigma_rss = 2.5;          // dBm
    double p_detect = 0.95;
    double mu_false = 1.0;           // mean false alarms per anchor per slot
    // False-alarm supports: AOA (-pi, pi], TOA [0, toa_max_m] in the range
    // domain, RSS [rss_min, rss_max] dBm.
    double toa_max_m = 80.0;
    double rss_min = -120.0;
    double rss_max = -20.0;
};

class undefined_bearing_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class rss_singularity_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline double aoa_of(Point2 u, Point2 p, double orientation_bias) {
    if (u.x == p.x && u.y == p.y)
        throw undefined_bearing_error("aoa_of: coincident agent and feature");
    return wrap_angle(std::atan2(p.y - u.y, p.x - u.x) + orientation_bias);
}

inline double toa_of(Point2 u, Point2 p, double clock_bias_m) {
    return (distance(u, p) - clock_bias_m) / kSpeedOfLight;
}

inline double rss_of(Point2 u, Point2 p, double ref_rss, double ple) {
    const double d = distance(u, p);
    if (d <= 0.0) throw rss_singularity_error("rss_of: zero distance");
    return -10.0 * ple * std::log10(d) + ref_rss;
}

inline double gaussian_pdf(double residual, double sigma) {
    static constexpr double inv_sqrt_2pi = 0.3989422804014327;
    const double z = residual / sigma;
    return inv_sqrt_2pi / sigma * std::exp(-0.5 * z * z);
}

/// Uniform false-alarm density over the enabled categories' joint support,
/// with TOA in the seconds domain (matching `likelihood` units).
inline double false_alarm_density(const NoiseConfig& cfg, CategorySet enabled) {
    double d = 1.0;
    if (enabled.aoa) d *= 1.0 / (2.0 * kPi);
    if (enabled.toa) d *= kSpeedOfLight / cfg.toa_max_m;
    if (enabled.rss) d *= 1.0 / (cfg.rss_max - cfg.rss_min);
    return d;
}

/// Same density with TOA in the range domain (meters); ratios of densities
/// against measurement likelihoods are identical in either domain.
inline double false_alarm_density_range_domain(const NoiseConfig& cfg, CategorySet enabled) {
    double d = 1.0;
    if (enabled.aoa) d *= 1.0 / (2.0 * kPi);
    if (enabled.toa) d *= 1.0 / cfg.toa_max_m;
    if (enabled.rss) d *= 1.0 / (cfg.rss_max - cfg.rss_min);
    return d;
}

/// Measurement likelihood: product over enabled categories of Gaussian
/// densities centered at the biased model values. AOA residuals wrap.
inline double likelihood(const Measurement& z, Point2 u, double orientation_bias,
                         double clock_bias_m, Point2 p, double ref_rss, double ple,
                         const NoiseConfig& cfg, CategorySet enabled) {
    double density = 1.0;
    if (enabled.aoa && z.aoa) {
        const double r = wrap_angle(*z.aoa - aoa_of(u, p, orientation_bias));
        density *= gaussian_pdf(r, cfg.sigma_aoa);
    }
    if (enabled.toa && z.toa) {
        const double r = *z.toa - toa_of(u, p, clock_bias_m);
        density *= gaussian_pdf(r, cfg.sigma_toa_m / kSpeedOfLight);
    }
    if (enabled.rss && z.rss) {
        const double r = *z.rss - rss_of(u, p, ref_rss, ple);
        density *= gaussian_pdf(r, cfg.sigma_rss);
    }
    return density;
}

/// Draws one slot's measurement batch: per visible feature an independent
/// detection with probability p_detect plus Poisson false alarms per anchor;
/// the per-anchor order is randomly permuted so origins stay hidden.
inline MeasurementBatch synthesize_batch(const std::vector<std::vector<FeatureTruth>>& visible,
                                         Point2 agent, const BiasTruth& biases,
                                         const NoiseConfig& cfg, CategorySet enabled,
                                         RngStream& rng, int slot = 0) {
    if (!enabled.any())
        throw std::invalid_argument("synthesize_batch: no measurement category enabled");
    MeasurementBatch batch;
    batch.slot = slot;
    batch.per_anchor.resize(visible.size());
    for (std::size_t mi = 0; mi < visible.size(); ++mi) {
        auto& out = batch.per_anchor[mi];
        const double clock = mi < biases.clock.size() ? biases.clock[mi] : 0.0;
        for (const auto& f : visible[mi]) {
            if (rng.uniform(0.0, 1.0) > cfg.p_detect) continue;
            Measurement z;
            if (enabled.aoa)
                z.aoa = wrap_angle(aoa_of(agent, f.position, biases.orientation) +
                                   rng.normal(0.0, cfg.sigma_aoa));
            if (enabled.toa)
                z.toa = toa_of(agent, f.position, clock) +
                        rng.normal(0.0, cfg.sigma_toa_m / kSpeedOfLight);
            if (enabled.rss) {
                RssTruth rt;
                auto it = biases.rss.find({f.anchor, f.index});
                if (it != biases.rss.end()) rt = it->second;
                z.rss = rss_of(agent, f.position, rt.ref_rss, rt.ple) +
                        rng.normal(0.0, cfg.sigma_rss);
            }
            out.push_back(z);
        }
        const int n_false = rng.poisson(cfg.mu_false);
        for (int k = 0; k < n_false; ++k) {
            Measurement z;
            if (enabled.aoa) z.aoa = rng.uniform(-kPi, kPi);
            if (enabled.toa) z.toa = rng.uniform(0.0, cfg.toa_max_m) / kSpeedOfLight;
            if (enabled.rss) z.rss = rng.uniform(cfg.rss_min, cfg.rss_max);
            out.push_back(z);
        }
        std::shuffle(out.begin(), out.end(), rng.engine());
    }
    return batch;
}

}  // namespace rfslam

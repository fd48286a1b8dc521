#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfslam/geometry.hpp"
#include "rfslam/random.hpp"
#include "rfslam/slam/belief.hpp"
#include "rfslam/slam/params.hpp"

namespace rfslam {

struct LrfEntry {
    Point2 position;
    double existence = 0.0;  // P_e in (0, 1]
};

/// One agent's converged local feature map snapshot.
struct LrfMap {
    int agent = 1;
    int slot = 0;  // upload time n'
    std::vector<std::vector<LrfEntry>> per_anchor;

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& v : per_anchor) n += v.size();
        return n;
    }
};

struct OrfEntry {
    Point2 position;
    double reliability = 0.0;  // P_w in (0, 1]
    int upload_slot = 0;
    int agent = 0;  // provenance for the supersede policy; never exported
};

/// The cloud's fused map: per anchor, a multiset of weighted entries.
struct OrfMap {
    std::vector<std::vector<OrfEntry>> per_anchor;

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& v : per_anchor) n += v.size();
        return n;
    }
};

/// Upload-time weight: strictly increasing in the upload slot, capped at 1.
struct WeightSchedule {
    double n_ref = 60.0;

    double operator()(int slot) const {
        if (slot < 1) throw std::invalid_argument("WeightSchedule: slot must be >= 1");
        return std::min(1.0, static_cast<double>(slot) / n_ref);
    }
};

/// Per-agent slot plan inside one run.
struct FrameSchedule {
    int agent = 1;
    int entry_slot = 1;
    int pinned_upload_slot = 0;  // 0 = trigger on convergence only
};

inline void validate_schedules(const std::vector<FrameSchedule>& schedules, int horizon) {
    for (const auto& fs : schedules) {
        if (fs.entry_slot < 1 || fs.entry_slot > horizon)
            throw std::invalid_argument("FrameSchedule: entry slot outside horizon");
        if (fs.pinned_upload_slot != 0 && fs.pinned_upload_slot < fs.entry_slot)
            throw std::invalid_argument("FrameSchedule: upload scheduled before entry");
    }
}

/// Detects the upload trigger: every per-feature MMSE position change below
/// move_tol for hold_slots consecutive slots.
class ConvergenceTracker {
public:
    explicit ConvergenceTracker(double move_tol = 0.1, int hold_slots = 5)
        : move_tol_(move_tol), hold_slots_(hold_slots) {}

    bool observe(const std::vector<FeatureEstimate>& feats) {
        double max_move = 0.0;
        bool comparable = !feats.empty();
        for (const auto& f : feats) {
            const auto it = last_.find({f.anchor, f.key});
            if (it == last_.end()) {
                comparable = false;
                continue;
            }
            max_move = std::max(max_move, distance(it->second, f.position));
        }
        last_.clear();
        for (const auto& f : feats) last_[{f.anchor, f.key}] = f.position;
        steady_ = comparable && max_move < move_tol_ ? steady_ + 1 : 0;
        return steady_ >= hold_slots_;
    }

private:
    double move_tol_;
    int hold_slots_;
    int steady_ = 0;
    std::map<std::pair<int, int>, Point2> last_;
};

/// Snapshots the agent's legacy map as an LRF-Map, dropping entries below the
/// unreliability threshold.
inline LrfMap build_lrf(const LegacySet& legacy, int agent, int slot, const SlamParams& prm) {
    LrfMap lrf;
    lrf.agent = agent;
    lrf.slot = slot;
    lrf.per_anchor.resize(legacy.per_anchor.size());
    for (std::size_t m = 0; m < legacy.per_anchor.size(); ++m) {
        for (const auto& f : legacy.per_anchor[m]) {
            if (f.existence < prm.unreliability_threshold) continue;
            LrfEntry e;
            e.existence = f.existence;
            for (std::size_t s = 0; s < f.size(); ++s) {
                e.position.x += f.w[s] * f.px[s];
                e.position.y += f.w[s] * f.py[s];
            }
            lrf.per_anchor[m].push_back(e);
        }
    }
    return lrf;
}

/// Inserts an LRF-Map into the ORF-Map with reliability phi(n') * P_e; the
/// agent's own previous entries are superseded, everyone else's kept.
inline OrfMap weighted_upload(OrfMap orf, const LrfMap& lrf, const WeightSchedule& schedule) {
    if (orf.per_anchor.size() < lrf.per_anchor.size())
        orf.per_anchor.resize(lrf.per_anchor.size());
    const double phi = schedule(lrf.slot);
    for (std::size_t m = 0; m < lrf.per_anchor.size(); ++m) {
        std::erase_if(orf.per_anchor[m],
                      [&](const OrfEntry& e) { return e.agent == lrf.agent; });
        for (const auto& src : lrf.per_anchor[m]) {
            OrfEntry e;
            e.position = src.position;
            e.reliability = phi * src.existence;
            e.upload_slot = lrf.slot;
            e.agent = lrf.agent;
            orf.per_anchor[m].push_back(e);
        }
    }
    return orf;
}

/// First-batch bootstrap: plain multiset union of the initial LRF-Maps at
/// full weight.
inline OrfMap bootstrap_orf(const std::vector<LrfMap>& lrfs) {
    OrfMap orf;
    for (const auto& lrf : lrfs) {
        if (orf.per_anchor.size() < lrf.per_anchor.size())
            orf.per_anchor.resize(lrf.per_anchor.size());
        for (std::size_t m = 0; m < lrf.per_anchor.size(); ++m) {
            for (const auto& src : lrf.per_anchor[m]) {
                OrfEntry e;
                e.position = src.position;
                e.reliability = src.existence;
                e.upload_slot = lrf.slot;
                e.agent = lrf.agent;
                orf.per_anchor[m].push_back(e);
            }
        }
    }
    return orf;
}

inline OrfMap prune_orf(OrfMap orf, double p_threshold) {
    for (auto& v : orf.per_anchor)
        std::erase_if(v, [&](const OrfEntry& e) { return e.reliability < p_threshold; });
    return orf;
}

/// Turns cloud entries for the requested anchors into legacy feature seeds:
/// particle clouds around each stored position, existence from reliability.
inline LegacySet download(const OrfMap& orf, const std::vector<int>& anchors,
                          const InitPriors& priors, const SlamParams& prm, RngStream& rng) {
    LegacySet seed;
    seed.per_anchor.resize(orf.per_anchor.size());
    for (int anchor : anchors) {
        const std::size_t m = static_cast<std::size_t>(anchor) - 1;
        if (m >= orf.per_anchor.size()) continue;
        for (const auto& e : orf.per_anchor[m]) {
            FeatureBelief f;
            f.anchor = anchor;
            f.key = seed.next_key++;
            f.existence = e.reliability;
            const std::size_t n = static_cast<std::size_t>(prm.num_particles);
            f.px.resize(n);
            f.py.resize(n);
            f.xi.resize(n);
            f.beta.resize(n);
            f.w.assign(n, 1.0 / static_cast<double>(n));
            for (std::size_t s = 0; s < n; ++s) {
                f.px[s] = rng.normal(e.position.x, prm.download_position_sigma);
                f.py[s] = rng.normal(e.position.y, prm.download_position_sigma);
                f.xi[s] = rng.uniform(priors.xi_min, priors.xi_max);
                f.beta[s] = rng.uniform(priors.beta_min, priors.beta_max);
            }
            seed.per_anchor[m].push_back(std::move(f));
        }
    }
    return seed;
}

/// Line-delimited export: "anchor x y reliability upload_slot". Contains no
/// agent identity or trajectory data; byte-stable for a fixed seed.
inline void export_orf(const OrfMap& orf, std::ostream& os) {
    char buf[128];
    for (std::size_t m = 0; m < orf.per_anchor.size(); ++m) {
        for (const auto& e : orf.per_anchor[m]) {
            std::snprintf(buf, sizeof(buf), "%zu %.9g %.9g %.9g %d\n", m + 1, e.position.x,
                          e.position.y, e.reliability, e.upload_slot);
            os << buf;
        }
    }
}

inline OrfMap import_orf(std::istream& is) {
    OrfMap orf;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t anchor;
        OrfEntry e;
        if (std::sscanf(line.c_str(), "%zu %lg %lg %lg %d", &anchor, &e.position.x,
                        &e.position.y, &e.reliability, &e.upload_slot) != 5)
            throw std::runtime_error("import_orf: malformed line: " + line);
        if (orf.per_anchor.size() < anchor) orf.per_anchor.resize(anchor);
        orf.per_anchor[anchor - 1].push_back(e);
    }
    return orf;
}

}  // namespace rfslam

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rfslam/geometry.hpp"

namespace rfslam {

struct FeatureSnapshot {
    Point2 position;
    double existence = 0.0;
};

/// Everything logged per slot of one simulated run.
struct SlotRecord {
    int slot = 0;
    Point2 truth_position, est_position;
    double alpha_truth = 0.0, alpha_est = 0.0;
    std::vector<double> clock_truth, clock_est;  // per anchor, meters
    std::vector<FeatureSnapshot> detected_features;
    std::vector<Point2> truth_visible;
    double rss_xi_err = std::numeric_limits<double>::quiet_NaN();
    double rss_beta_err = std::numeric_limits<double>::quiet_NaN();
};

struct RunLog {
    int agent = 1;
    bool failed = false;
    std::vector<SlotRecord> slots;
};

struct MaeResult {
    std::vector<double> per_slot;
    double max = 0.0;
};

/// Per-slot mean absolute Euclidean position error over runs, plus its
/// maximum over slots. Runs are aligned by position in the slot sequence.
inline MaeResult mae_trajectory(std::span<const RunLog> logs) {
    MaeResult r;
    std::size_t horizon = 0;
    for (const auto& log : logs)
        if (!log.failed) horizon = std::max(horizon, log.slots.size());
    r.per_slot.assign(horizon, 0.0);
    std::vector<int> counts(horizon, 0);
    for (const auto& log : logs) {
        if (log.failed) continue;
        for (std::size_t k = 0; k < log.slots.size(); ++k) {
            r.per_slot[k] += distance(log.slots[k].truth_position, log.slots[k].est_position);
            ++counts[k];
        }
    }
    for (std::size_t k = 0; k < horizon; ++k) {
        if (counts[k] > 0) r.per_slot[k] /= counts[k];
        r.max = std::max(r.max, r.per_slot[k]);
    }
    return r;
}

namespace detail {

/// Hungarian algorithm (potentials form) for a rows x cols cost matrix with
/// rows <= cols. Returns the minimal total cost.
inline double hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
    const std::size_t nr = cost.size();
    if (nr == 0) return 0.0;
    const std::size_t nc = cost[0].size();
    std::vector<double> u(nr + 1, 0.0), v(nc + 1, 0.0);
    std::vector<std::size_t> match(nc + 1, 0);  // matched row per column (1-based)
    for (std::size_t i = 1; i <= nr; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(nc + 1, std::numeric_limits<double>::infinity());
        std::vector<bool> used(nc + 1, false);
        std::vector<std::size_t> way(nc + 1, 0);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = std::numeric_limits<double>::infinity();
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= nc; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= nc; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (std::size_t j = 1; j <= nc; ++j)
        if (match[j] != 0) total += cost[match[j] - 1][j - 1];
    return total;
}

}  // namespace detail

/// OSPA distance between two 2-D point sets: optimal assignment with
/// distances clipped at the cutoff, cutoff penalty per cardinality mismatch,
/// p-norm mean. Empty vs empty is 0 by convention.
inline double mospa(std::span<const Point2> est, std::span<const Point2> truth, double cutoff,
                    double order) {
    if (cutoff <= 0.0 || order < 1.0)
        throw std::invalid_argument("mospa: cutoff must be > 0 and order >= 1");
    const std::size_t ne = est.size(), nt = truth.size();
    if (ne == 0 && nt == 0) return 0.0;
    const auto& small = ne <= nt ? est : truth;
    const auto& large = ne <= nt ? truth : est;
    std::vector<std::vector<double>> cost(small.size(), std::vector<double>(large.size()));
    for (std::size_t i = 0; i < small.size(); ++i)
        for (std::size_t j = 0; j < large.size(); ++j)
            cost[i][j] = std::pow(std::min(distance(small[i], large[j]), cutoff), order);
    const double assigned = detail::hungarian_min_cost(cost);
    const double card_penalty =
        std::pow(cutoff, order) * static_cast<double>(large.size() - small.size());
    return std::pow((assigned + card_penalty) / static_cast<double>(large.size()), 1.0 / order);
}

struct BiasErrorTraces {
    std::vector<double> obe;       // |alpha_est - alpha_truth| per slot
    std::vector<double> cbe;       // mean over anchors of |clock err|, meters
    std::vector<double> xi_err;    // dBm, NaN-skipping mean
    std::vector<double> beta_err;
};

/// Absolute bias-estimate errors per slot, averaged over runs.
inline BiasErrorTraces bias_errors(std::span<const RunLog> logs) {
    BiasErrorTraces t;
    std::size_t horizon = 0;
    for (const auto& log : logs)
        if (!log.failed) horizon = std::max(horizon, log.slots.size());
    t.obe.assign(horizon, 0.0);
    t.cbe.assign(horizon, 0.0);
    t.xi_err.assign(horizon, 0.0);
    t.beta_err.assign(horizon, 0.0);
    std::vector<int> counts(horizon, 0), rss_counts(horizon, 0);
    for (const auto& log : logs) {
        if (log.failed) continue;
        for (std::size_t k = 0; k < log.slots.size(); ++k) {
            const auto& rec = log.slots[k];
            t.obe[k] += std::abs(rec.alpha_est - rec.alpha_truth);
            double cerr = 0.0;
            for (std::size_t m = 0; m < rec.clock_truth.size(); ++m)
                cerr += std::abs(rec.clock_est[m] - rec.clock_truth[m]);
            if (!rec.clock_truth.empty()) cerr /= static_cast<double>(rec.clock_truth.size());
            t.cbe[k] += cerr;
            ++counts[k];
            if (std::isfinite(rec.rss_xi_err)) {
                t.xi_err[k] += rec.rss_xi_err;
                t.beta_err[k] += rec.rss_beta_err;
                ++rss_counts[k];
            }
        }
    }
    for (std::size_t k = 0; k < horizon; ++k) {
        if (counts[k] > 0) {
            t.obe[k] /= counts[k];
            t.cbe[k] /= counts[k];
        }
        if (rss_counts[k] > 0) {
            t.xi_err[k] /= rss_counts[k];
            t.beta_err[k] /= rss_counts[k];
        } else {
            t.xi_err[k] = std::numeric_limits<double>::quiet_NaN();
            t.beta_err[k] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return t;
}

class alignment_undefined_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct SimilarityTransform {
    double scale = 1.0;
    double rotation = 0.0;  // rad
    Point2 translation;
    std::vector<Point2> aligned;

    Point2 apply(Point2 p) const {
        const double c = std::cos(rotation), s = std::sin(rotation);
        return {scale * (c * p.x - s * p.y) + translation.x,
                scale * (s * p.x + c * p.y) + translation.y};
    }
};

/// Least-squares similarity transform (scale, rotation, translation) mapping
/// est onto truth. Diagnostic only; never used inside inference.
inline SimilarityTransform similarity_align(std::span<const Point2> est,
                                            std::span<const Point2> truth) {
    if (est.size() != truth.size() || est.size() < 2)
        throw alignment_undefined_error("similarity_align: need >= 2 paired points");
    using cd = std::complex<double>;
    cd me{0, 0}, mt{0, 0};
    for (std::size_t i = 0; i < est.size(); ++i) {
        me += cd(est[i].x, est[i].y);
        mt += cd(truth[i].x, truth[i].y);
    }
    me /= static_cast<double>(est.size());
    mt /= static_cast<double>(est.size());
    cd num{0, 0};
    double den = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const cd e = cd(est[i].x, est[i].y) - me;
        const cd t = cd(truth[i].x, truth[i].y) - mt;
        num += t * std::conj(e);
        den += std::norm(e);
    }
    if (den <= 0.0)
        throw alignment_undefined_error("similarity_align: source points are coincident");
    const cd a = num / den;
    const cd b = mt - a * me;
    SimilarityTransform tr;
    tr.scale = std::abs(a);
    tr.rotation = std::arg(a);
    tr.translation = {b.real(), b.imag()};
    tr.aligned.reserve(est.size());
    for (const auto& p : est) tr.aligned.push_back(tr.apply(p));
    return tr;
}

/// First slot index (1-based) after which the trace stays below tol for the
/// remainder; nullopt when it never settles.
inline std::optional<int> convergence_time(std::span<const double> trace, double tol) {
    std::optional<int> result;
    for (std::size_t k = trace.size(); k-- > 0;) {
        if (std::abs(trace[k]) < tol)
            result = static_cast<int>(k) + 1;
        else
            break;
    }
    return result;
}

}  // namespace rfslam

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rfslam/slam/params.hpp"

namespace rfslam {

/// One-to-one exclusion constraint between feature-oriented (a) and
/// measurement-oriented (b) association vectors: zero exactly when some pair
/// conflicts. a is 1-based over measurements, b is 1-based over features,
/// 0 meaning unassociated.
inline bool psi_exclusion(const std::vector<int>& a, const std::vector<int>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const bool a_claims = a[i] == static_cast<int>(j) + 1;
            const bool b_claims = b[j] == static_cast<int>(i) + 1;
            if (a_claims != b_claims) return false;
        }
    }
    return true;
}

/// Per-anchor input to the loopy data association stage.
struct AssociationInput {
    // legacy[i][0] is the missed-detection weight of feature i;
    // legacy[i][j] for j >= 1 is the particle-averaged factor value for
    // assigning measurement j to feature i.
    std::vector<std::vector<double>> legacy;
    // new_weight[j-1] is the new-feature factor value for measurement j;
    // the false-alarm alternative has weight 1 by normalization.
    std::vector<double> new_weight;
};

struct AssociationMarginals {
    // legacy[i][0] = miss probability, legacy[i][j] = P(feature i generated
    // measurement j); each row sums to 1.
    std::vector<std::vector<double>> legacy;
    std::vector<double> p_new;    // per measurement: new-feature posterior mass
    std::vector<double> p_false;  // per measurement: false-alarm posterior mass
    // Converged messages, kept for the belief-update stage.
    std::vector<std::vector<double>> msg_meas_to_feature;  // [i][j-1]
    std::vector<std::vector<double>> msg_feature_to_meas;  // [i][j-1]
    bool converged = true;
    int iterations = 0;
};

namespace detail {

/// Number of one-to-one association hypotheses for K features and M
/// measurements: sum over d of C(K,d) C(M,d) d!. Saturates at the cap.
inline long association_hypothesis_count(std::size_t K, std::size_t M, long cap) {
    long total = 0;
    double term = 1.0;  // d = 0
    for (std::size_t d = 0;; ++d) {
        if (term > static_cast<double>(cap)) return cap + 1;
        total += static_cast<long>(term);
        if (total > cap) return cap + 1;
        if (d == std::min(K, M)) return total;
        term *= static_cast<double>(K - d) * static_cast<double>(M - d) /
                static_cast<double>(d + 1);
    }
}

struct ExactAccumulator {
    const std::vector<std::vector<double>>& gamma;
    const std::vector<double>& miss;
    std::size_t K, M;
    std::vector<std::vector<double>> mass;  // [i][0..M]
    std::vector<double> unclaimed;          // per measurement
    double total = 0.0;
    std::vector<int> assign;

    void dfs(std::size_t i, double w, std::uint64_t used) {
        if (w == 0.0) return;
        if (i == K) {
            total += w;
            for (std::size_t k = 0; k < K; ++k)
                mass[k][static_cast<std::size_t>(assign[k])] += w;
            for (std::size_t j = 0; j < M; ++j)
                if (!(used >> j & 1)) unclaimed[j] += w;
            return;
        }
        assign[i] = 0;
        dfs(i + 1, w * miss[i], used);
        for (std::size_t j = 0; j < M; ++j) {
            if (used >> j & 1) continue;
            assign[i] = static_cast<int>(j) + 1;
            dfs(i + 1, w * gamma[i][j], used | (1ULL << j));
        }
    }
};

}  // namespace detail

/// Association-marginal computation between the feature-oriented and
/// measurement-oriented association variables. Small instances are
/// marginalized exactly over all valid hypotheses; larger ones run iterative
/// sum-product message passing, and a non-converged instance is flagged,
/// never thrown.
inline AssociationMarginals associate(const AssociationInput& in, const SlamParams& prm) {
    const std::size_t K = in.legacy.size();
    const std::size_t M = in.new_weight.size();
    for (const auto& row : in.legacy)
        if (row.size() != M + 1)
            throw std::invalid_argument("associate: legacy row size must be M+1");

    AssociationMarginals out;
    out.legacy.assign(K, std::vector<double>(M + 1, 0.0));
    out.p_new.assign(M, 0.0);
    out.p_false.assign(M, 0.0);
    out.msg_meas_to_feature.assign(K, std::vector<double>(M, 1.0));
    out.msg_feature_to_meas.assign(K, std::vector<double>(M, 0.0));

    // Fold the non-legacy alternatives (false alarm weight 1, new-feature
    // weight h_j) into the pairwise weights.
    std::vector<std::vector<double>> gamma(K, std::vector<double>(M, 0.0));
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < M; ++j)
            gamma[i][j] = in.legacy[i][j + 1] / (1.0 + in.new_weight[j]);

    const bool exact =
        M < 64 &&
        detail::association_hypothesis_count(K, M, prm.da_exact_budget) <= prm.da_exact_budget;
    if (exact) {
        std::vector<double> miss(K);
        for (std::size_t i = 0; i < K; ++i) miss[i] = in.legacy[i][0];
        detail::ExactAccumulator acc{gamma, miss, K, M, {}, {}, 0.0, {}};
        acc.mass.assign(K, std::vector<double>(M + 1, 0.0));
        acc.unclaimed.assign(M, 0.0);
        acc.assign.assign(K, 0);
        acc.dfs(0, 1.0, 0);
        if (acc.total > 0.0) {
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t j = 0; j <= M; ++j)
                    out.legacy[i][j] = acc.mass[i][j] / acc.total;
            for (std::size_t j = 0; j < M; ++j) {
                const double u = acc.unclaimed[j] / acc.total;
                out.p_new[j] = u * in.new_weight[j] / (1.0 + in.new_weight[j]);
                out.p_false[j] = u / (1.0 + in.new_weight[j]);
            }
            // Back out the measurement-to-feature weights the fusion stage
            // expects: pairing weight * message must reproduce the row's
            // marginal ratios against the miss branch.
            for (std::size_t i = 0; i < K; ++i) {
                const double p0 = out.legacy[i][0];
                for (std::size_t j = 0; j < M; ++j) {
                    if (in.legacy[i][j + 1] > 0.0 && p0 > 0.0)
                        out.msg_meas_to_feature[i][j] =
                            out.legacy[i][j + 1] / p0 * miss[i] / in.legacy[i][j + 1];
                    else
                        out.msg_meas_to_feature[i][j] = 0.0;
                }
            }
            out.converged = true;
            out.iterations = 0;
            return out;
        }
        // Total mass zero: fall through to the iterative path's handling.
    }

    auto& v = out.msg_meas_to_feature;
    auto& mu = out.msg_feature_to_meas;
    out.converged = false;
    for (int it = 0; it < prm.da_max_iters; ++it) {
        double max_change = 0.0;
        for (std::size_t i = 0; i < K; ++i) {
            double total = in.legacy[i][0];
            for (std::size_t j = 0; j < M; ++j) total += gamma[i][j] * v[i][j];
            for (std::size_t j = 0; j < M; ++j) {
                const double denom = total - gamma[i][j] * v[i][j];
                const double next = denom > 0.0 ? gamma[i][j] / denom : 0.0;
                max_change = std::max(max_change, std::abs(next - mu[i][j]));
                mu[i][j] = next;
            }
        }
        for (std::size_t j = 0; j < M; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < K; ++i) sum += mu[i][j];
            for (std::size_t i = 0; i < K; ++i) v[i][j] = 1.0 / (1.0 + sum - mu[i][j]);
        }
        out.iterations = it + 1;
        if (max_change < prm.da_tol) {
            out.converged = true;
            break;
        }
    }

    // Unfold the messages so pairing weight * message gives the marginal
    // contribution in the original (non-folded) domain.
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < M; ++j) v[i][j] /= 1.0 + in.new_weight[j];

    for (std::size_t i = 0; i < K; ++i) {
        double total = in.legacy[i][0];
        out.legacy[i][0] = in.legacy[i][0];
        for (std::size_t j = 0; j < M; ++j) {
            out.legacy[i][j + 1] = in.legacy[i][j + 1] * v[i][j];
            total += out.legacy[i][j + 1];
        }
        if (total > 0.0)
            for (auto& p : out.legacy[i]) p /= total;
    }
    for (std::size_t j = 0; j < M; ++j) {
        double claimed = 0.0;
        for (std::size_t i = 0; i < K; ++i) claimed += out.legacy[i][j + 1];
        const double unclaimed = std::max(0.0, 1.0 - claimed);
        out.p_new[j] = unclaimed * in.new_weight[j] / (1.0 + in.new_weight[j]);
        out.p_false[j] = unclaimed / (1.0 + in.new_weight[j]);
    }
    return out;
}

struct AssociationCounts {
    int measurements = 0;   // |M|
    int detected = 0;       // |D|
    int newborn = 0;        // |N|
    int false_alarms = 0;   // |F|
};

/// Scalar prior coefficient of one data-association hypothesis: the product
/// of the chain-rule combinatorial factors, detection probabilities, and the
/// Poisson masses for newborn-feature and false-alarm counts.
inline double da_prior_coefficient(const std::vector<int>& a, AssociationCounts c,
                                   const SlamParams& prm) {
    int nonzero = 0;
    std::vector<bool> used(static_cast<std::size_t>(c.measurements) + 1, false);
    for (int ai : a) {
        if (ai < 0 || ai > c.measurements)
            throw std::invalid_argument("da_prior_coefficient: association index out of range");
        if (ai != 0) {
            if (used[static_cast<std::size_t>(ai)])
                throw std::invalid_argument("da_prior_coefficient: duplicate measurement assignment");
            used[static_cast<std::size_t>(ai)] = true;
            ++nonzero;
        }
    }
    if (nonzero != c.detected)
        throw std::invalid_argument("da_prior_coefficient: |D| inconsistent with a-vector");
    if (c.measurements != c.detected + c.newborn + c.false_alarms)
        throw std::invalid_argument("da_prior_coefficient: |M| != |D|+|N|+|F|");

    auto fact = [](int n) { return std::tgamma(static_cast<double>(n) + 1.0); };
    const int K = static_cast<int>(a.size());
    const int undetached = c.measurements - c.detected;  // |M| - |D|

    // New/false labeling of the unassigned measurements, then the ordered
    // a-vector arrangement, detection indicators, and the two Poisson masses.
    double p = fact(c.newborn) * fact(c.false_alarms) / fact(undetached);
    p *= fact(undetached) / fact(c.measurements);
    p *= std::pow(prm.p_detect, c.detected) * std::pow(1.0 - prm.p_detect, K - c.detected);
    p *= std::exp(-prm.mu_new) * std::pow(prm.mu_new, c.newborn) / fact(c.newborn);
    p *= std::exp(-prm.mu_false) * std::pow(prm.mu_false, c.false_alarms) / fact(c.false_alarms);
    return p;
}

}  // namespace rfslam

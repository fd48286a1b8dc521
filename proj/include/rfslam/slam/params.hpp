#pragma once

#include <optional>

namespace rfslam {

struct SlamParams {
    double p_detect = 0.95;
    double p_survival = 0.999;
    double mu_false = 1.0;
    double mu_new = 1e-4;
    double detection_threshold = 0.5;
    double unreliability_threshold = 1e-4;
    int num_particles = 20000;
    double sigma_drive2 = 0.0278;   // agent driving-process variance
    double sigma_jitter2 = 1e-8;    // feature stabilization jitter variance
    double delta_t = 1.0;           // s
    int da_max_iters = 50;
    double da_tol = 1e-6;
    // Association instances whose hypothesis count fits this budget are
    // marginalized exactly; larger ones use the iterative approximation.
    long da_exact_budget = 20000;
    // Birth proposal dispersion (measurement inversion), deliberately broader
    // than the measurement noise so candidate clouds survive the first update.
    double birth_angle_sigma = 0.1;  // rad
    double birth_range_sigma = 1.0;  // m
    // Spread of downloaded cloud features when re-seeded as particle clouds.
    double download_position_sigma = 0.2;  // m
};

/// Initialization priors for agent state and bias particles. The pin_* fields
/// replace a prior by a point mass; pinning every bias reproduces the classic
/// no-bias-estimation baseline.
struct InitPriors {
    double entrance_radius = 0.5;  // m
    double velocity_sigma = 0.3;   // m/s
    double alpha_min = -0.5, alpha_max = 0.5;   // rad
    double omega_min = 0.0, omega_max = 50.0;   // m
    double xi_min = -45.0, xi_max = -25.0;      // dBm
    double beta_min = 2.0, beta_max = 5.0;
    std::optional<double> pin_alpha;
    std::optional<double> pin_omega;
    std::optional<double> pin_xi;
    std::optional<double> pin_beta;
};

}  // namespace rfslam

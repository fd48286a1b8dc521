#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfslam/geometry.hpp"
#include "rfslam/measurement.hpp"
#include "rfslam/slam/params.hpp"

namespace rfslam {

class scenario_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AgentSpec {
    int id = 1;
    int entry_slot = 1;
    std::vector<Point2> waypoints;  // first waypoint is the entrance
    CategorySet categories{true, true, false};
    int pinned_upload_slot = 0;  // 0 = convergence-triggered
};

/// Ground-truth bias levels. Clock bias is shared across anchors; RSS model
/// parameters are either drawn per feature from the estimation priors or
/// fixed at one value for all features.
struct BiasSpec {
    double orientation = 0.0;  // rad
    double clock = 0.0;        // m
    bool rss_from_prior = true;
    RssTruth rss_fixed;
};

struct CrowdsourceSpec {
    bool enabled = false;
    double n_ref = 60.0;
    double p_threshold = 1e-4;
};

struct Scenario {
    FloorPlan plan;
    std::vector<Point2> anchors;
    std::vector<AgentSpec> agents;
    BiasSpec bias;
    NoiseConfig noise;
    SlamParams slam;
    InitPriors priors;
    CrowdsourceSpec crowd;
    int horizon = 60;
    int runs = 1;
    std::uint64_t seed = 1;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys)
            if (it.key() == k) known = true;
        if (!known)
            throw scenario_error("unknown key '" + it.key() + "' in " + where);
    }
}

inline Point2 parse_point(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2)
        throw scenario_error(where + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

template <class T>
inline void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Strict scenario parser: unknown keys are rejected by name, omitted keys
/// fall back to the documented defaults, invariants are validated.
inline Scenario parse_scenario(const nlohmann::json& j) {
    using nlohmann::json;
    detail::reject_unknown(j,
                           {"floor_plan", "anchors", "agents", "bias", "noise", "slam", "priors",
                            "crowdsourcing", "horizon", "runs", "seed"},
                           "scenario");
    Scenario sc;

    if (!j.contains("floor_plan")) throw scenario_error("missing key 'floor_plan'");
    const json& fp = j.at("floor_plan");
    detail::reject_unknown(fp, {"walls", "roi_center", "roi_radius"}, "floor_plan");
    if (fp.contains("walls")) {
        for (const auto& w : fp.at("walls")) {
            if (!w.is_array() || w.size() != 4)
                throw scenario_error("floor_plan.walls: expected [x1, y1, x2, y2]");
            sc.plan.walls.push_back(
                {{w[0].get<double>(), w[1].get<double>()}, {w[2].get<double>(), w[3].get<double>()}});
        }
    }
    if (fp.contains("roi_center"))
        sc.plan.roi_center = detail::parse_point(fp.at("roi_center"), "floor_plan.roi_center");
    detail::read_if(fp, "roi_radius", sc.plan.roi_radius);

    if (!j.contains("anchors")) throw scenario_error("missing key 'anchors'");
    for (const auto& a : j.at("anchors"))
        sc.anchors.push_back(detail::parse_point(a, "anchors[]"));
    if (sc.anchors.empty()) throw scenario_error("anchors: at least one required");

    if (j.contains("agents")) {
        for (const auto& ja : j.at("agents")) {
            detail::reject_unknown(
                ja, {"id", "entry_slot", "waypoints", "categories", "pinned_upload_slot"},
                "agents[]");
            AgentSpec a;
            detail::read_if(ja, "id", a.id);
            detail::read_if(ja, "entry_slot", a.entry_slot);
            if (!ja.contains("waypoints") || ja.at("waypoints").empty())
                throw scenario_error("agents[]: waypoints required");
            for (const auto& w : ja.at("waypoints"))
                a.waypoints.push_back(detail::parse_point(w, "agents[].waypoints[]"));
            if (ja.contains("categories")) {
                a.categories = {};
                for (const auto& c : ja.at("categories")) {
                    const std::string s = c.get<std::string>();
                    if (s == "aoa")
                        a.categories.aoa = true;
                    else if (s == "toa")
                        a.categories.toa = true;
                    else if (s == "rss")
                        a.categories.rss = true;
                    else
                        throw scenario_error("agents[].categories: unknown category '" + s + "'");
                }
                if (!a.categories.any())
                    throw scenario_error("agents[].categories: at least one required");
            }
            detail::read_if(ja, "pinned_upload_slot", a.pinned_upload_slot);
            sc.agents.push_back(std::move(a));
        }
    } else {
        AgentSpec a;
        a.waypoints.push_back(sc.plan.roi_center);
        sc.agents.push_back(std::move(a));
    }

    if (j.contains("bias")) {
        const json& jb = j.at("bias");
        detail::reject_unknown(jb, {"orientation", "clock", "rss"}, "bias");
        detail::read_if(jb, "orientation", sc.bias.orientation);
        detail::read_if(jb, "clock", sc.bias.clock);
        if (jb.contains("rss")) {
            const json& jr = jb.at("rss");
            if (jr.is_string() && jr.get<std::string>() == "prior") {
                sc.bias.rss_from_prior = true;
            } else {
                detail::reject_unknown(jr, {"ref_rss", "ple"}, "bias.rss");
                sc.bias.rss_from_prior = false;
                detail::read_if(jr, "ref_rss", sc.bias.rss_fixed.ref_rss);
                detail::read_if(jr, "ple", sc.bias.rss_fixed.ple);
            }
        }
    }

    if (j.contains("noise")) {
        const json& jn = j.at("noise");
        detail::reject_unknown(jn,
                               {"sigma_aoa", "sigma_toa_m", "sigma_rss", "p_detect", "mu_false",
                                "toa_max_m", "rss_min", "rss_max"},
                               "noise");
        detail::read_if(jn, "sigma_aoa", sc.noise.sigma_aoa);
        detail::read_if(jn, "sigma_toa_m", sc.noise.sigma_toa_m);
        detail::read_if(jn, "sigma_rss", sc.noise.sigma_rss);
        detail::read_if(jn, "p_detect", sc.noise.p_detect);
        detail::read_if(jn, "mu_false", sc.noise.mu_false);
        detail::read_if(jn, "toa_max_m", sc.noise.toa_max_m);
        detail::read_if(jn, "rss_min", sc.noise.rss_min);
        detail::read_if(jn, "rss_max", sc.noise.rss_max);
    }

    if (j.contains("slam")) {
        const json& js = j.at("slam");
        detail::reject_unknown(js,
                               {"p_detect", "p_survival", "mu_false", "mu_new",
                                "detection_threshold", "unreliability_threshold", "num_particles",
                                "sigma_drive2", "sigma_jitter2", "delta_t", "da_max_iters",
                                "da_tol", "da_exact_budget", "birth_angle_sigma",
                                "birth_range_sigma", "download_position_sigma"},
                               "slam");
        detail::read_if(js, "p_detect", sc.slam.p_detect);
        detail::read_if(js, "p_survival", sc.slam.p_survival);
        detail::read_if(js, "mu_false", sc.slam.mu_false);
        detail::read_if(js, "mu_new", sc.slam.mu_new);
        detail::read_if(js, "detection_threshold", sc.slam.detection_threshold);
        detail::read_if(js, "unreliability_threshold", sc.slam.unreliability_threshold);
        detail::read_if(js, "num_particles", sc.slam.num_particles);
        detail::read_if(js, "sigma_drive2", sc.slam.sigma_drive2);
        detail::read_if(js, "sigma_jitter2", sc.slam.sigma_jitter2);
        detail::read_if(js, "delta_t", sc.slam.delta_t);
        detail::read_if(js, "da_max_iters", sc.slam.da_max_iters);
        detail::read_if(js, "da_tol", sc.slam.da_tol);
        detail::read_if(js, "da_exact_budget", sc.slam.da_exact_budget);
        detail::read_if(js, "birth_angle_sigma", sc.slam.birth_angle_sigma);
        detail::read_if(js, "birth_range_sigma", sc.slam.birth_range_sigma);
        detail::read_if(js, "download_position_sigma", sc.slam.download_position_sigma);
    }

    if (j.contains("priors")) {
        const json& jp = j.at("priors");
        detail::reject_unknown(jp,
                               {"entrance_radius", "velocity_sigma", "alpha_min", "alpha_max",
                                "omega_min", "omega_max", "xi_min", "xi_max", "beta_min",
                                "beta_max", "pin_alpha", "pin_omega", "pin_xi", "pin_beta"},
                               "priors");
        detail::read_if(jp, "entrance_radius", sc.priors.entrance_radius);
        detail::read_if(jp, "velocity_sigma", sc.priors.velocity_sigma);
        detail::read_if(jp, "alpha_min", sc.priors.alpha_min);
        detail::read_if(jp, "alpha_max", sc.priors.alpha_max);
        detail::read_if(jp, "omega_min", sc.priors.omega_min);
        detail::read_if(jp, "omega_max", sc.priors.omega_max);
        detail::read_if(jp, "xi_min", sc.priors.xi_min);
        detail::read_if(jp, "xi_max", sc.priors.xi_max);
        detail::read_if(jp, "beta_min", sc.priors.beta_min);
        detail::read_if(jp, "beta_max", sc.priors.beta_max);
        if (jp.contains("pin_alpha")) sc.priors.pin_alpha = jp.at("pin_alpha").get<double>();
        if (jp.contains("pin_omega")) sc.priors.pin_omega = jp.at("pin_omega").get<double>();
        if (jp.contains("pin_xi")) sc.priors.pin_xi = jp.at("pin_xi").get<double>();
        if (jp.contains("pin_beta")) sc.priors.pin_beta = jp.at("pin_beta").get<double>();
    }

    if (j.contains("crowdsourcing")) {
        const json& jc = j.at("crowdsourcing");
        detail::reject_unknown(jc, {"enabled", "n_ref", "p_threshold"}, "crowdsourcing");
        detail::read_if(jc, "enabled", sc.crowd.enabled);
        detail::read_if(jc, "n_ref", sc.crowd.n_ref);
        detail::read_if(jc, "p_threshold", sc.crowd.p_threshold);
    }

    detail::read_if(j, "horizon", sc.horizon);
    detail::read_if(j, "runs", sc.runs);
    detail::read_if(j, "seed", sc.seed);

    if (sc.horizon < 1) throw scenario_error("horizon must be >= 1");
    if (sc.runs < 1) throw scenario_error("runs must be >= 1");
    if (sc.agents.empty()) throw scenario_error("at least one agent required");
    for (const auto& a : sc.agents) {
        if (a.entry_slot < 1 || a.entry_slot > sc.horizon)
            throw scenario_error("agent " + std::to_string(a.id) +
                                 ": entry_slot outside [1, horizon]");
        if (a.pinned_upload_slot != 0 && a.pinned_upload_slot < a.entry_slot)
            throw scenario_error("agent " + std::to_string(a.id) +
                                 ": pinned_upload_slot before entry");
    }
    return sc;
}

inline Scenario parse_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw scenario_error("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw scenario_error(std::string("scenario parse error: ") + e.what());
    }
    return parse_scenario(j);
}

inline nlohmann::json serialize_scenario(const Scenario& sc) {
    using nlohmann::json;
    json j;
    json walls = json::array();
    for (const auto& w : sc.plan.walls) walls.push_back({w.a.x, w.a.y, w.b.x, w.b.y});
    j["floor_plan"] = {{"walls", walls},
                       {"roi_center", {sc.plan.roi_center.x, sc.plan.roi_center.y}},
                       {"roi_radius", sc.plan.roi_radius}};
    json anchors = json::array();
    for (const auto& a : sc.anchors) anchors.push_back({a.x, a.y});
    j["anchors"] = anchors;
    json agents = json::array();
    for (const auto& a : sc.agents) {
        json ja;
        ja["id"] = a.id;
        ja["entry_slot"] = a.entry_slot;
        json wp = json::array();
        for (const auto& p : a.waypoints) wp.push_back({p.x, p.y});
        ja["waypoints"] = wp;
        json cats = json::array();
        if (a.categories.aoa) cats.push_back("aoa");
        if (a.categories.toa) cats.push_back("toa");
        if (a.categories.rss) cats.push_back("rss");
        ja["categories"] = cats;
        ja["pinned_upload_slot"] = a.pinned_upload_slot;
        agents.push_back(std::move(ja));
    }
    j["agents"] = agents;
    j["bias"]["orientation"] = sc.bias.orientation;
    j["bias"]["clock"] = sc.bias.clock;
    if (sc.bias.rss_from_prior)
        j["bias"]["rss"] = "prior";
    else
        j["bias"]["rss"] = {{"ref_rss", sc.bias.rss_fixed.ref_rss}, {"ple", sc.bias.rss_fixed.ple}};
    j["noise"] = {{"sigma_aoa", sc.noise.sigma_aoa},   {"sigma_toa_m", sc.noise.sigma_toa_m},
                  {"sigma_rss", sc.noise.sigma_rss},   {"p_detect", sc.noise.p_detect},
                  {"mu_false", sc.noise.mu_false},     {"toa_max_m", sc.noise.toa_max_m},
                  {"rss_min", sc.noise.rss_min},       {"rss_max", sc.noise.rss_max}};
    j["slam"] = {{"p_detect", sc.slam.p_detect},
                 {"p_survival", sc.slam.p_survival},
                 {"mu_false", sc.slam.mu_false},
                 {"mu_new", sc.slam.mu_new},
                 {"detection_threshold", sc.slam.detection_threshold},
                 {"unreliability_threshold", sc.slam.unreliability_threshold},
                 {"num_particles", sc.slam.num_particles},
                 {"sigma_drive2", sc.slam.sigma_drive2},
                 {"sigma_jitter2", sc.slam.sigma_jitter2},
                 {"delta_t", sc.slam.delta_t},
                 {"da_max_iters", sc.slam.da_max_iters},
                 {"da_tol", sc.slam.da_tol},
                 {"da_exact_budget", sc.slam.da_exact_budget},
                 {"birth_angle_sigma", sc.slam.birth_angle_sigma},
                 {"birth_range_sigma", sc.slam.birth_range_sigma},
                 {"download_position_sigma", sc.slam.download_position_sigma}};
    json jp = {{"entrance_radius", sc.priors.entrance_radius},
               {"velocity_sigma", sc.priors.velocity_sigma},
               {"alpha_min", sc.priors.alpha_min},
               {"alpha_max", sc.priors.alpha_max},
               {"omega_min", sc.priors.omega_min},
               {"omega_max", sc.priors.omega_max},
               {"xi_min", sc.priors.xi_min},
               {"xi_max", sc.priors.xi_max},
               {"beta_min", sc.priors.beta_min},
               {"beta_max", sc.priors.beta_max}};
    if (sc.priors.pin_alpha) jp["pin_alpha"] = *sc.priors.pin_alpha;
    if (sc.priors.pin_omega) jp["pin_omega"] = *sc.priors.pin_omega;
    if (sc.priors.pin_xi) jp["pin_xi"] = *sc.priors.pin_xi;
    if (sc.priors.pin_beta) jp["pin_beta"] = *sc.priors.pin_beta;
    j["priors"] = jp;
    j["crowdsourcing"] = {{"enabled", sc.crowd.enabled},
                          {"n_ref", sc.crowd.n_ref},
                          {"p_threshold", sc.crowd.p_threshold}};
    j["horizon"] = sc.horizon;
    j["runs"] = sc.runs;
    j["seed"] = sc.seed;
    return j;
}

/// Ground-truth pose along a waypoint polyline traversed at constant speed,
/// entering at entry_slot and reaching the last waypoint at the horizon.
inline AgentTruth truth_at_slot(const AgentSpec& spec, int slot, int horizon, double delta_t) {
    if (slot < spec.entry_slot)
        throw std::invalid_argument("truth_at_slot: slot before agent entry");
    AgentTruth t;
    t.entry_slot = spec.entry_slot;
    const auto& wp = spec.waypoints;
    if (wp.size() == 1 || horizon == spec.entry_slot) {
        t.x = wp.front().x;
        t.y = wp.front().y;
        return t;
    }
    std::vector<double> cum{0.0};
    for (std::size_t i = 1; i < wp.size(); ++i)
        cum.push_back(cum.back() + distance(wp[i - 1], wp[i]));
    const double total = cum.back();
    const double frac = static_cast<double>(slot - spec.entry_slot) /
                        static_cast<double>(horizon - spec.entry_slot);
    const double target = std::min(frac, 1.0) * total;
    std::size_t i = 1;
    while (i + 1 < wp.size() && cum[i] < target) ++i;
    const double seg_len = cum[i] - cum[i - 1];
    const double local = seg_len > 0.0 ? (target - cum[i - 1]) / seg_len : 0.0;
    const Point2 pos = wp[i - 1] + local * (wp[i] - wp[i - 1]);
    t.x = pos.x;
    t.y = pos.y;
    const double speed =
        total / (static_cast<double>(horizon - spec.entry_slot) * delta_t);
    if (seg_len > 0.0) {
        const Point2 dir = (1.0 / seg_len) * (wp[i] - wp[i - 1]);
        t.vx = speed * dir.x;
        t.vy = speed * dir.y;
    }
    return t;
}

}  // namespace rfslam

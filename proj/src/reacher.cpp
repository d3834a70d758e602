#include "flowarm/reacher.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace flowarm {

void ArmConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("ArmConfig: " + msg); };
    if (link_lengths[0] <= 0 || link_lengths[1] <= 0) fail("link lengths must be positive");
    if (dt <= 0) fail("dt must be positive");
    if (horizon < 1) fail("horizon must be >= 1");
    const auto [r_min, r_max] = target_radius_range;
    if (!(r_min < r_max && r_max <= link_lengths[0] + link_lengths[1]))
        fail("target radius range must satisfy r_min < r_max <= L1 + L2");
    for (int i = 0; i < 2; ++i) {
        if (!(joint_ranges[i].first < joint_ranges[i].second)) fail("joint range must satisfy lo < hi");
        if (damping[i] <= 0) fail("damping must be positive");
        if (gears[i] <= 0) fail("gears must be positive");
        if (inertia[i] <= 0) fail("inertia must be positive");
    }
    if (torque_limit <= 0) fail("torque limit must be positive");
    if (omega_max <= 0) fail("omega_max must be positive");
}

FaultSpec FaultSpec::none() { return {FaultKind::None, std::monostate{}}; }
FaultSpec FaultSpec::reduced_rom(double lo, double hi) {
    return {FaultKind::ReducedROM, RomFaultParams{lo, hi}};
}
FaultSpec FaultSpec::increased_damping(double damping) {
    return {FaultKind::IncreasedDamping, DampingFaultParams{damping}};
}
FaultSpec FaultSpec::actuator_damage(double gear) {
    return {FaultKind::ActuatorDamage, GearFaultParams{gear}};
}
FaultSpec FaultSpec::structural_damage(double bend_angle) {
    return {FaultKind::StructuralDamage, BendFaultParams{bend_angle}};
}

const char* fault_kind_name(FaultKind kind) {
    switch (kind) {
        case FaultKind::None: return "none";
        case FaultKind::ReducedROM: return "reduced-rom";
        case FaultKind::IncreasedDamping: return "increased-damping";
        case FaultKind::ActuatorDamage: return "actuator-damage";
        case FaultKind::StructuralDamage: return "structural";
    }
    throw std::invalid_argument("unknown fault kind");
}

FaultKind fault_kind_from_name(const std::string& name) {
    if (name == "none") return FaultKind::None;
    if (name == "reduced-rom") return FaultKind::ReducedROM;
    if (name == "increased-damping") return FaultKind::IncreasedDamping;
    if (name == "actuator-damage") return FaultKind::ActuatorDamage;
    if (name == "structural") return FaultKind::StructuralDamage;
    throw std::invalid_argument("unknown fault kind: " + name);
}

ArmConfig apply_fault(const ArmConfig& base, const FaultSpec& fault) {
    base.validate();
    ArmConfig out = base;
    switch (fault.kind) {
        case FaultKind::None:
            break;
        case FaultKind::ReducedROM: {
            const auto& p = std::get<RomFaultParams>(fault.params);
            out.joint_ranges[1] = {p.joint1_lo, p.joint1_hi};
            break;
        }
        case FaultKind::IncreasedDamping: {
            const auto& p = std::get<DampingFaultParams>(fault.params);
            out.damping[1] = p.joint1_damping;
            break;
        }
        case FaultKind::ActuatorDamage: {
            const auto& p = std::get<GearFaultParams>(fault.params);
            out.gears = {p.gear, p.gear};
            break;
        }
        case FaultKind::StructuralDamage: {
            const auto& p = std::get<BendFaultParams>(fault.params);
            out.bend_angle = p.bend_angle;
            break;
        }
    }
    out.validate();
    return out;
}

Vector2d forward_kinematics(const ArmConfig& config, const Vector2d& theta) {
    const double t1 = theta(0);
    const double t2 = t1 + theta(1) + config.bend_angle;
    return {config.link_lengths[0] * std::cos(t1) + config.link_lengths[1] * std::cos(t2),
            config.link_lengths[0] * std::sin(t1) + config.link_lengths[1] * std::sin(t2)};
}

ReachGrid::ReachGrid(const ArmConfig& config, int resolution) {
    points_.reserve(static_cast<std::size_t>(resolution) * resolution);
    for (int i = 0; i < resolution; ++i) {
        const double t1 = config.joint_ranges[0].first +
            (config.joint_ranges[0].second - config.joint_ranges[0].first) * i / (resolution - 1);
        for (int j = 0; j < resolution; ++j) {
            const double t2 = config.joint_ranges[1].first +
                (config.joint_ranges[1].second - config.joint_ranges[1].first) * j / (resolution - 1);
            points_.push_back(forward_kinematics(config, {t1, t2}));
        }
    }
}

bool ReachGrid::reachable(const Vector2d& p, double tol) const {
    const double tol2 = tol * tol;
    for (const Vector2d& q : points_)
        if ((q - p).squaredNorm() < tol2) return true;
    return false;
}

EnvState reset(const ArmConfig& config, Rng& rng, const ReachGrid* grid) {
    EnvState s;
    s.theta = {std::clamp(0.0, config.joint_ranges[0].first, config.joint_ranges[0].second),
               std::clamp(0.0, config.joint_ranges[1].first, config.joint_ranges[1].second)};
    s.omega.setZero();
    s.step_index = 0;

    std::optional<ReachGrid> local_grid;
    if (!grid) local_grid.emplace(config);
    const ReachGrid& g = grid ? *grid : *local_grid;

    const auto [r_min, r_max] = config.target_radius_range;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double r = rng.uniform(r_min, r_max);
        const double phi = rng.uniform(0.0, 2.0 * M_PI);
        const Vector2d candidate{r * std::cos(phi), r * std::sin(phi)};
        if (g.reachable(candidate)) {
            s.target = candidate;
            return s;
        }
    }
    throw std::runtime_error("reset: no reachable target found after 1000 attempts");
}

VectorXd observe(const ArmConfig& config, const EnvState& state) {
    const Vector2d tip = forward_kinematics(config, state.theta);
    VectorXd obs(10);
    obs << std::cos(state.theta(0)), std::sin(state.theta(0)),
           std::cos(state.theta(1)), std::sin(state.theta(1)),
           state.target(0), state.target(1),
           state.omega(0) / config.omega_max, state.omega(1) / config.omega_max,
           state.target(0) - tip(0), state.target(1) - tip(1);
    return obs;
}

double dense_reward(const ArmConfig& config, const EnvState& state_after, const Vector2d& action) {
    const double d = (forward_kinematics(config, state_after.theta) - state_after.target).norm();
    return -d - config.ctrl_cost_weight * action.squaredNorm();
}

double sparse_terminal_reward(const ArmConfig& config, const EnvState& terminal_state) {
    const double d = (forward_kinematics(config, terminal_state.theta) - terminal_state.target).norm();
    return std::exp(-config.sparse_reward_scale * d);
}

std::pair<EnvState, StepResult> step(const ArmConfig& config, const EnvState& state,
                                     const Vector2d& action) {
    if (!action.allFinite() || !state.theta.allFinite() || !state.omega.allFinite())
        throw std::invalid_argument("step: non-finite action or state");

    const Vector2d a = action.cwiseMax(-1.0).cwiseMin(1.0);
    EnvState next = state;
    for (int i = 0; i < 2; ++i) {
        const double torque = (config.gears[i] / kGearDivisor) * config.torque_limit * a(i);
        // implicit damping: stable for all positive damping values at this dt
        double w = (state.omega(i) + config.dt * torque / config.inertia[i]) /
                   (1.0 + config.dt * config.damping[i] / config.inertia[i]);
        w = std::clamp(w, -config.omega_max, config.omega_max);
        double th = state.theta(i) + config.dt * w;
        const auto [lo, hi] = config.joint_ranges[i];
        if (th <= lo) { th = lo; w = 0.0; }
        else if (th >= hi) { th = hi; w = 0.0; }
        next.theta(i) = th;
        next.omega(i) = w;
    }
    next.step_index = state.step_index + 1;

    StepResult r;
    r.done = next.step_index >= config.horizon;
    r.observation = observe(config, next);
    r.dense_reward = dense_reward(config, next, a);
    r.sparse_reward = r.done ? sparse_terminal_reward(config, next) : 0.0;
    return {next, r};
}

} // namespace flowarm

#pragma once

#include <Eigen/Dense>
#include <array>
#include <utility>
#include <variant>
#include <vector>

#include "flowarm/rng.hpp"

namespace flowarm {

using Eigen::Vector2d;
using Eigen::VectorXd;

// Physical parameters of the 2-link planar arm.
struct ArmConfig {
    std::array<double, 2> link_lengths{0.1, 0.1}; // meters
    std::array<std::pair<double, double>, 2> joint_ranges{{{-3.0, 3.0}, {-3.0, 3.0}}};
    std::array<double, 2> damping{1.0, 1.0};
    std::array<double, 2> gears{200.0, 200.0};
    double bend_angle = 0.0;                      // rigid offset on link1 orientation, rad
    std::array<double, 2> inertia{0.05, 0.05};    // kg*m^2
    double dt = 0.02;                             // seconds per control step
    int horizon = 50;                             // steps per episode
    double torque_limit = 1.0;                    // N*m
    double omega_max = 8.0;                       // rad/s
    std::pair<double, double> target_radius_range{0.05, 0.18}; // meters
    double ctrl_cost_weight = 0.1;
    double sparse_reward_scale = 8.0;             // k in exp(-k*d)

    void validate() const; // throws std::invalid_argument on violated invariants
};

// Gear values are MuJoCo-style power scalars; only their ratio is physical
// here. The divisor maps the normal gear of 200 to an effective torque
// multiplier of 4.
inline constexpr double kGearDivisor = 50.0;

enum class FaultKind { None, ReducedROM, IncreasedDamping, ActuatorDamage, StructuralDamage };

struct RomFaultParams { double joint1_lo; double joint1_hi; };
struct DampingFaultParams { double joint1_damping; };
struct GearFaultParams { double gear; };
struct BendFaultParams { double bend_angle; };

// Parameters are carried only for the declared kind.
struct FaultSpec {
    FaultKind kind = FaultKind::None;
    std::variant<std::monostate, RomFaultParams, DampingFaultParams,
                 GearFaultParams, BendFaultParams> params;

    static FaultSpec none();
    static FaultSpec reduced_rom(double lo = -1.0, double hi = 1.0);
    static FaultSpec increased_damping(double damping = 5.0);
    static FaultSpec actuator_damage(double gear = 100.0);
    static FaultSpec structural_damage(double bend_angle = M_PI / 4.0);
};

const char* fault_kind_name(FaultKind kind);
FaultKind fault_kind_from_name(const std::string& name); // throws on unknown

struct EnvState {
    Vector2d theta = Vector2d::Zero();
    Vector2d omega = Vector2d::Zero();
    Vector2d target = Vector2d::Zero();
    int step_index = 0;
};

struct StepResult {
    VectorXd observation; // 10-vector
    double dense_reward = 0.0;
    double sparse_reward = 0.0; // nonzero only when done
    bool done = false;
};

// Returns a copy of base with exactly the attribute group named by the fault
// modified; validates the result.
ArmConfig apply_fault(const ArmConfig& base, const FaultSpec& fault);

// fingertip = L1*(cos t1, sin t1) + L2*(cos(t1+t2+bend), sin(t1+t2+bend))
Vector2d forward_kinematics(const ArmConfig& config, const Vector2d& theta);

// Precomputed fingertip positions over a grid of admissible joint angles,
// used to reject unreachable targets under restrictive faults.
class ReachGrid {
public:
    ReachGrid(const ArmConfig& config, int resolution = 101);
    // true if some admissible pose brings the fingertip within tol of p
    bool reachable(const Vector2d& p, double tol = 0.015) const;

private:
    std::vector<Vector2d> points_;
};

// theta = omega = 0, target sampled uniformly in polar coordinates and
// rejection-resampled until reachable. Throws std::runtime_error if the
// retry cap (1000) is exhausted.
EnvState reset(const ArmConfig& config, Rng& rng, const ReachGrid* grid = nullptr);

VectorXd observe(const ArmConfig& config, const EnvState& state);

double dense_reward(const ArmConfig& config, const EnvState& state_after, const Vector2d& action);
double sparse_terminal_reward(const ArmConfig& config, const EnvState& terminal_state);

// One control step. Actions are clipped to [-1, 1]. Velocity update uses an
// implicit damping term so the integrator stays stable at the fault damping
// values; joint-limit contact zeroes the joint's velocity.
std::pair<EnvState, StepResult> step(const ArmConfig& config, const EnvState& state,
                                     const Vector2d& action);

// Convenience wrapper owning config + reachability grid for training loops.
class ReacherEnv {
public:
    explicit ReacherEnv(const ArmConfig& config)
        : config_(config), grid_(config) { config_.validate(); }

    const ArmConfig& config() const { return config_; }
    EnvState reset(Rng& rng) const { return flowarm::reset(config_, rng, &grid_); }
    std::pair<EnvState, StepResult> step(const EnvState& s, const Vector2d& a) const {
        return flowarm::step(config_, s, a);
    }
    int obs_dim() const { return 10; }
    int action_dim() const { return 2; }

private:
    ArmConfig config_;
    ReachGrid grid_;
};

} // namespace flowarm

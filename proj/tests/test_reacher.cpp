#include <doctest.h>

#include <cmath>

#include "flowarm/reacher.hpp"

using namespace flowarm;

namespace {

ArmConfig normal_config() { return ArmConfig{}; }

} // namespace

TEST_CASE("apply_fault: reduced ROM changes only joint1 range") {
    const ArmConfig base = normal_config();
    const ArmConfig faulted = apply_fault(base, FaultSpec::reduced_rom());
    CHECK(faulted.joint_ranges[1].first == doctest::Approx(-1.0));
    CHECK(faulted.joint_ranges[1].second == doctest::Approx(1.0));
    CHECK(faulted.joint_ranges[0] == base.joint_ranges[0]);
    CHECK(faulted.damping == base.damping);
    CHECK(faulted.gears == base.gears);
    CHECK(faulted.bend_angle == base.bend_angle);
    // base untouched
    CHECK(base.joint_ranges[1].second == doctest::Approx(3.0));
}

TEST_CASE("apply_fault: increased damping 1 -> 5 on joint1") {
    const ArmConfig faulted = apply_fault(normal_config(), FaultSpec::increased_damping());
    CHECK(faulted.damping[0] == doctest::Approx(1.0));
    CHECK(faulted.damping[1] == doctest::Approx(5.0));
}

TEST_CASE("apply_fault: actuator damage gear 200 -> 100") {
    const ArmConfig faulted = apply_fault(normal_config(), FaultSpec::actuator_damage());
    CHECK(faulted.gears[0] == doctest::Approx(100.0));
    CHECK(faulted.gears[1] == doctest::Approx(100.0));
}

TEST_CASE("apply_fault: none is identity") {
    const ArmConfig base = normal_config();
    const ArmConfig same = apply_fault(base, FaultSpec::none());
    CHECK(same.joint_ranges == base.joint_ranges);
    CHECK(same.damping == base.damping);
    CHECK(same.gears == base.gears);
    CHECK(same.bend_angle == base.bend_angle);
}

TEST_CASE("apply_fault rejects invalid parameters") {
    CHECK_THROWS_AS(apply_fault(normal_config(), FaultSpec::increased_damping(-1.0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(apply_fault(normal_config(), FaultSpec::actuator_damage(0.0)),
                    std::invalid_argument);
}

TEST_CASE("forward kinematics closed forms") {
    ArmConfig c = normal_config();
    {
        const Vector2d tip = forward_kinematics(c, {0.0, 0.0});
        CHECK(tip(0) == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(tip(1) == doctest::Approx(0.0).epsilon(1e-12));
    }
    {
        const Vector2d tip = forward_kinematics(c, {M_PI / 2.0, 0.0});
        CHECK(tip(0) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(tip(1) == doctest::Approx(0.2).epsilon(1e-12));
    }
    {
        c.bend_angle = M_PI / 4.0;
        const Vector2d tip = forward_kinematics(c, {0.0, 0.0});
        CHECK(tip(0) == doctest::Approx(0.1 + 0.1 * std::cos(M_PI / 4.0)).epsilon(1e-12));
        CHECK(tip(1) == doctest::Approx(0.1 * std::sin(M_PI / 4.0)).epsilon(1e-12));
    }
}

TEST_CASE("reset is deterministic and targets lie in the radius band") {
    const ArmConfig c = normal_config();
    Rng a(42), b(42);
    const EnvState sa = reset(c, a);
    const EnvState sb = reset(c, b);
    CHECK(sa.target(0) == sb.target(0));
    CHECK(sa.target(1) == sb.target(1));
    CHECK(sa.theta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(sa.omega.cwiseAbs().maxCoeff() == 0.0);
    CHECK(sa.step_index == 0);

    const ReachGrid grid(c);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const EnvState s = reset(c, rng, &grid);
        const double r = s.target.norm();
        CHECK(r >= c.target_radius_range.first);
        CHECK(r <= c.target_radius_range.second);
    }
}

TEST_CASE("reduced-ROM targets stay reachable under a brute-force FK grid") {
    const ArmConfig c = apply_fault(normal_config(), FaultSpec::reduced_rom());
    const ReachGrid grid(c);
    // independent oracle: coarser grid, looser tolerance
    const int n = 81;
    std::vector<Vector2d> oracle;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double t1 = c.joint_ranges[0].first +
                (c.joint_ranges[0].second - c.joint_ranges[0].first) * i / (n - 1);
            const double t2 = c.joint_ranges[1].first +
                (c.joint_ranges[1].second - c.joint_ranges[1].first) * j / (n - 1);
            oracle.push_back(forward_kinematics(c, {t1, t2}));
        }
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        Rng rng(seed);
        const EnvState s = reset(c, rng, &grid);
        bool ok = false;
        for (const auto& p : oracle)
            if ((p - s.target).norm() < 0.02) { ok = true; break; }
        CHECK(ok);
        if (!ok) break;
    }
}

TEST_CASE("step: zero action from rest leaves pose unchanged") {
    const ArmConfig c = normal_config();
    Rng rng(1);
    EnvState s = reset(c, rng);
    const auto [next, result] = step(c, s, {0.0, 0.0});
    CHECK(next.theta(0) == s.theta(0));
    CHECK(next.theta(1) == s.theta(1));
    CHECK(next.omega.cwiseAbs().maxCoeff() == 0.0);
    CHECK(next.step_index == 1);
    CHECK_FALSE(result.done);
    CHECK(result.sparse_reward == 0.0);
}

TEST_CASE("step rejects non-finite inputs") {
    const ArmConfig c = normal_config();
    Rng rng(1);
    EnvState s = reset(c, rng);
    CHECK_THROWS_AS(step(c, s, {std::nan(""), 0.0}), std::invalid_argument);
}

TEST_CASE("reduced ROM: joint1 never leaves [-1, 1] under random actions") {
    const ArmConfig c = apply_fault(normal_config(), FaultSpec::reduced_rom());
    Rng rng(17);
    EnvState s = reset(c, rng);
    for (int t = 0; t < 500; ++t) {
        const Vector2d a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        auto [next, result] = step(c, s, a);
        CHECK(std::abs(next.theta(1)) <= 1.0);
        s = result.done ? reset(c, rng) : next;
    }
}

TEST_CASE("actuator damage halves single-step angular acceleration") {
    const ArmConfig normal = normal_config();
    const ArmConfig damaged = apply_fault(normal, FaultSpec::actuator_damage());
    Rng rng(3);
    const EnvState s = reset(normal, rng);
    const auto [n1, r1] = step(normal, s, {1.0, 0.0});
    const auto [n2, r2] = step(damaged, s, {1.0, 0.0});
    CHECK(n2.omega(0) / n1.omega(0) == 0.5); // exact in binary floating point
}

TEST_CASE("damping monotonicity on joint1 coast-down") {
    const ArmConfig normal = normal_config();
    const ArmConfig damped = apply_fault(normal, FaultSpec::increased_damping());
    Rng rng(5);
    EnvState s = reset(normal, rng);
    s.omega = {0.0, 4.0};
    const auto [n1, r1] = step(normal, s, {0.0, 0.0});
    const auto [n2, r2] = step(damped, s, {0.0, 0.0});
    CHECK(std::abs(n2.omega(1)) <= std::abs(n1.omega(1)));
}

TEST_CASE("joint limits hold for every trajectory and config") {
    for (const FaultSpec& fault : {FaultSpec::none(), FaultSpec::reduced_rom(),
                                   FaultSpec::increased_damping(), FaultSpec::actuator_damage(),
                                   FaultSpec::structural_damage()}) {
        const ArmConfig c = apply_fault(normal_config(), fault);
        Rng rng(99);
        EnvState s = reset(c, rng);
        for (int t = 0; t < 200; ++t) {
            const Vector2d a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            auto [next, result] = step(c, s, a);
            for (int i = 0; i < 2; ++i) {
                CHECK(next.theta(i) >= c.joint_ranges[i].first);
                CHECK(next.theta(i) <= c.joint_ranges[i].second);
                CHECK(std::abs(next.omega(i)) <= c.omega_max);
            }
            s = result.done ? reset(c, rng) : next;
        }
    }
}

TEST_CASE("determinism: identical seeds give bitwise-identical rollouts") {
    const ArmConfig c = normal_config();
    auto rollout = [&](std::uint64_t seed) {
        Rng rng(seed);
        EnvState s = reset(c, rng);
        std::vector<double> trace;
        for (int t = 0; t < 100; ++t) {
            const Vector2d a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            auto [next, result] = step(c, s, a);
            trace.push_back(next.theta(0));
            trace.push_back(next.theta(1));
            trace.push_back(next.omega(0));
            trace.push_back(next.omega(1));
            s = result.done ? reset(c, rng) : next;
        }
        return trace;
    };
    CHECK(rollout(123) == rollout(123));
}

TEST_CASE("energy dissipation under zero action") {
    const ArmConfig c = normal_config();
    Rng rng(8);
    EnvState s = reset(c, rng);
    s.omega = {5.0, -3.0};
    double energy = c.inertia[0] * s.omega(0) * s.omega(0) + c.inertia[1] * s.omega(1) * s.omega(1);
    for (int t = 0; t < 49; ++t) {
        auto [next, result] = step(c, s, {0.0, 0.0});
        const double e = c.inertia[0] * next.omega(0) * next.omega(0) +
                         c.inertia[1] * next.omega(1) * next.omega(1);
        CHECK(e <= energy + 1e-15);
        energy = e;
        s = next;
    }
}

TEST_CASE("reward formulas") {
    ArmConfig c = normal_config();
    Rng rng(2);
    EnvState s = reset(c, rng);

    // place the target a known distance from the fingertip
    const Vector2d tip = forward_kinematics(c, s.theta);
    s.target = tip + Vector2d{0.1, 0.0};
    CHECK(dense_reward(c, s, {0.0, 0.0}) == doctest::Approx(-0.1).epsilon(1e-12));
    s.target = tip;
    CHECK(dense_reward(c, s, {1.0, 1.0}) == doctest::Approx(-0.2).epsilon(1e-12));
    s.target = tip + Vector2d{0.0, 0.15};
    CHECK(dense_reward(c, s, {0.5, -0.5}) == doctest::Approx(-0.2).epsilon(1e-12));

    s.target = tip;
    CHECK(sparse_terminal_reward(c, s) == doctest::Approx(1.0).epsilon(1e-12));
    s.target = tip + Vector2d{0.2, 0.0};
    CHECK(sparse_terminal_reward(c, s) == doctest::Approx(std::exp(-1.6)).epsilon(1e-9));
    s.target = tip + Vector2d{5.0, 5.0};
    CHECK(sparse_terminal_reward(c, s) > 0.0);
}

TEST_CASE("observation layout and normalization bounds") {
    const ArmConfig c = normal_config();
    Rng rng(4);
    EnvState s = reset(c, rng);
    s.omega = {c.omega_max, -c.omega_max};
    const VectorXd obs = observe(c, s);
    REQUIRE(obs.size() == 10);
    for (int i = 0; i < 4; ++i) {
        CHECK(obs(i) >= -1.0);
        CHECK(obs(i) <= 1.0);
    }
    CHECK(obs(6) == doctest::Approx(1.0));
    CHECK(obs(7) == doctest::Approx(-1.0));
    const Vector2d tip = forward_kinematics(c, s.theta);
    CHECK(obs(8) == doctest::Approx(s.target(0) - tip(0)));
    CHECK(obs(9) == doctest::Approx(s.target(1) - tip(1)));
}

TEST_CASE("config invariants are validated") {
    ArmConfig c = normal_config();
    c.dt = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = normal_config();
    c.target_radius_range = {0.1, 0.3}; // beyond reach
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = normal_config();
    c.joint_ranges[0] = {1.0, -1.0};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

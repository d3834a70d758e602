#include <doctest.h>

#include <cmath>

#include "flowarm/baselines.hpp"

using namespace flowarm;

TEST_CASE("td3 target arithmetic") {
    CHECK(td3_target(1.0, 0.99, 2.0, 3.0, false) == doctest::Approx(1.0 + 0.99 * 2.0).epsilon(1e-12));
    CHECK(td3_target(1.0, 0.99, 3.0, 2.0, false) == doctest::Approx(2.98).epsilon(1e-12));
    CHECK(td3_target(-1.0, 0.99, 5.0, 7.0, true) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(td3_target(0.0, 0.5, -4.0, -2.0, false) == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("ddpg target arithmetic") {
    CHECK(ddpg_target(-5.0, 0.99, -4.0, true) == doctest::Approx(-5.0).epsilon(1e-12));
    CHECK(ddpg_target(-1.0, 0.9, -4.5, false) == doctest::Approx(-5.05).epsilon(1e-12));
    CHECK(ddpg_target(0.0, 0.99, 10.0, false) == doctest::Approx(9.9).epsilon(1e-12));
}

TEST_CASE("twin minimum never exceeds either critic") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double q1 = rng.uniform(-10.0, 10.0);
        const double q2 = rng.uniform(-10.0, 10.0);
        const double y = td3_target(0.0, 1.0, q1, q2, false);
        CHECK(y <= q1);
        CHECK(y <= q2);
        CHECK(y == std::min(q1, q2));
    }
}

TEST_CASE("soft update endpoint cases") {
    Rng rng(5);
    const Mlp source = make_mlp(3, {4}, 2, OutputActivation::Identity, rng);
    Mlp target = make_mlp(3, {4}, 2, OutputActivation::Identity, rng);

    SUBCASE("tau = 1 copies the source") {
        soft_update(target, source, 1.0);
        for (std::size_t l = 0; l < source.layers.size(); ++l) {
            CHECK((target.layers[l].w.array() == source.layers[l].w.array()).all());
            CHECK((target.layers[l].b.array() == source.layers[l].b.array()).all());
        }
    }
    SUBCASE("tau = 0 leaves the target untouched") {
        const Mlp before = target;
        soft_update(target, source, 0.0);
        for (std::size_t l = 0; l < before.layers.size(); ++l)
            CHECK((target.layers[l].w.array() == before.layers[l].w.array()).all());
    }
    SUBCASE("tau = 0.005 interpolates") {
        const Mlp before = target;
        soft_update(target, source, 0.005);
        for (std::size_t l = 0; l < before.layers.size(); ++l) {
            const Eigen::MatrixXd expect =
                0.005 * source.layers[l].w + 0.995 * before.layers[l].w;
            CHECK((target.layers[l].w - expect).cwiseAbs().maxCoeff() < 1e-15);
        }
    }
}

TEST_CASE("repeated soft updates contract toward the source") {
    Rng rng(8);
    const Mlp source = make_mlp(2, {3}, 1, OutputActivation::Identity, rng);
    Mlp target = make_mlp(2, {3}, 1, OutputActivation::Identity, rng);
    auto distance = [&] {
        double acc = 0.0;
        for (std::size_t l = 0; l < source.layers.size(); ++l)
            acc += (target.layers[l].w - source.layers[l].w).norm() +
                   (target.layers[l].b - source.layers[l].b).norm();
        return acc;
    };
    double prev = distance();
    CHECK(prev > 0.0);
    for (int i = 0; i < 50; ++i) {
        soft_update(target, source, 0.1);
        const double d = distance();
        CHECK(d < prev);
        prev = d;
    }
    CHECK(prev < 0.01 * 50.0); // geometric decay leaves little residual
}

TEST_CASE("select_action output is clipped, squashed, and deterministic at sigma 0") {
    Rng rng(13);
    const Mlp actor = make_mlp(4, {16}, 2, OutputActivation::Identity, rng);
    const VectorXd obs = VectorXd::Constant(4, 0.2);

    Rng a(1), b(1);
    const VectorXd x = select_action(actor, obs, 0.0, a);
    const VectorXd y = select_action(actor, obs, 0.0, b);
    CHECK((x.array() == y.array()).all());
    for (int i = 0; i < x.size(); ++i) {
        CHECK(x(i) > -1.0);
        CHECK(x(i) < 1.0);
        // sigma 0 is pure tanh of the network head
        CHECK(x(i) == doctest::Approx(std::tanh(mlp_forward(actor, obs)(i))).epsilon(1e-12));
    }
    Rng c(2);
    for (int trial = 0; trial < 200; ++trial) {
        const VectorXd z = select_action(actor, obs, 5.0, c);
        CHECK(z.minCoeff() >= -1.0);
        CHECK(z.maxCoeff() <= 1.0);
    }
}

TEST_CASE("make_actor_critic shapes and twin flag") {
    Rng rng(2);
    const ActorCriticModel m = make_actor_critic(10, 2, {32, 32}, true, rng);
    CHECK(m.twin);
    CHECK(m.actor.layers.front().w.cols() == 10);
    CHECK(m.actor.layers.back().w.rows() == 2);
    CHECK(m.critic1.layers.front().w.cols() == 12);
    CHECK(m.critic1.layers.back().w.rows() == 1);
    // targets start as exact copies
    for (std::size_t l = 0; l < m.actor.layers.size(); ++l)
        CHECK((m.actor.layers[l].w.array() == m.actor_target.layers[l].w.array()).all());
    for (std::size_t l = 0; l < m.critic1.layers.size(); ++l) {
        CHECK((m.critic1.layers[l].w.array() == m.critic1_target.layers[l].w.array()).all());
        CHECK((m.critic2.layers[l].w.array() == m.critic2_target.layers[l].w.array()).all());
    }
    const ActorCriticModel d = make_actor_critic(10, 2, {32, 32}, false, rng);
    CHECK_FALSE(d.twin);
}

TEST_CASE("critic regression on a fixed batch decreases monotonically in trend") {
    // supervised sanity: critic trained against fixed targets must fit them
    Rng rng(31);
    Mlp critic = make_mlp(6, {32, 32}, 1, OutputActivation::Identity, rng);
    const int n = 64;
    MatrixXd x(6, n);
    Eigen::RowVectorXd y(n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < 6; ++i) x(i, j) = rng.uniform(-1.0, 1.0);
        y(j) = x.col(j).head(3).sum() - x.col(j).tail(3).squaredNorm();
    }
    AdamState opt = make_adam(critic, 1e-3);
    auto loss_now = [&] {
        return (mlp_forward(critic, x).row(0) - y).squaredNorm() / n;
    };
    const double initial = loss_now();
    for (int step = 0; step < 500; ++step) {
        ForwardCache cache;
        const Eigen::RowVectorXd pred = mlp_forward(critic, x, &cache).row(0);
        const Eigen::RowVectorXd diff = pred - y;
        adam_step(critic, mlp_backward(critic, cache, (2.0 / n) * diff), opt);
    }
    CHECK(loss_now() < 0.1 * initial);
}

TEST_CASE("baseline training is bitwise deterministic under a fixed seed") {
    ArmConfig arm;
    ReacherEnv env(arm);
    BaselineConfig cfg;
    cfg.hidden = {8};
    cfg.batch_size = 16;
    cfg.start_steps = 100;
    cfg.eval_freq = 100;

    for (BaselineAlgo algo : {BaselineAlgo::TD3, BaselineAlgo::DDPG}) {
        auto run = [&] {
            Rng rng(41);
            std::vector<long> evals;
            const BaselineTrainResult r =
                baseline_train(env, algo, cfg, 300, rng, [&](long t, const Policy&) { evals.push_back(t); });
            return std::make_pair(r, evals);
        };
        const auto [ra, ea] = run();
        const auto [rb, eb] = run();
        CHECK(ea == eb);
        CHECK(ea == std::vector<long>{100, 200, 300});
        CHECK(ra.model.twin == (algo == BaselineAlgo::TD3));
        for (std::size_t l = 0; l < ra.model.actor.layers.size(); ++l)
            CHECK((ra.model.actor.layers[l].w.array() == rb.model.actor.layers[l].w.array()).all());
        for (std::size_t l = 0; l < ra.model.critic1.layers.size(); ++l)
            CHECK((ra.model.critic1.layers[l].w.array() == rb.model.critic1.layers[l].w.array()).all());
    }
}

TEST_CASE("actor_policy ignores the rng and matches the squashed actor head") {
    Rng rng(17);
    const Mlp actor = make_mlp(10, {8}, 2, OutputActivation::Identity, rng);
    const Policy pi = actor_policy(actor);
    const VectorXd obs = VectorXd::LinSpaced(10, -1.0, 1.0);
    Rng r1(1), r2(999);
    const VectorXd a1 = pi(obs, r1);
    const VectorXd a2 = pi(obs, r2);
    CHECK((a1.array() == a2.array()).all());
    const VectorXd head = mlp_forward(actor, obs);
    for (int i = 0; i < 2; ++i)
        CHECK(a1(i) == doctest::Approx(std::tanh(head(i))).epsilon(1e-12));
}

TEST_CASE("config validation") {
    BaselineConfig cfg;
    cfg.gamma = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = BaselineConfig{};
    cfg.policy_delay = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = BaselineConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

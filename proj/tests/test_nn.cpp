#include <doctest.h>

#include <cmath>

#include "flowarm/nn.hpp"

using namespace flowarm;

namespace {

// central finite differences over every parameter of a scalar-valued loss
template <typename LossFn>
void check_gradients(Mlp& net, const GradientBundle& analytic, LossFn loss, double h = 1e-6,
                     double rel_tol = 1e-4) {
    double max_rel = 0.0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto probe = [&](double& param, double analytic_g) {
            const double saved = param;
            param = saved + h;
            const double up = loss();
            param = saved - h;
            const double down = loss();
            param = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(analytic_g), 1e-8});
            max_rel = std::max(max_rel, std::abs(numeric - analytic_g) / denom);
        };
        for (int i = 0; i < net.layers[l].w.rows(); ++i)
            for (int j = 0; j < net.layers[l].w.cols(); ++j)
                probe(net.layers[l].w(i, j), analytic.layers[l].w(i, j));
        for (int i = 0; i < net.layers[l].b.size(); ++i)
            probe(net.layers[l].b(i), analytic.layers[l].b(i));
    }
    CHECK(max_rel < rel_tol);
}

} // namespace

TEST_CASE("identity single layer reproduces its input") {
    Mlp net;
    net.layers.push_back({Eigen::MatrixXd::Identity(2, 2), VectorXd::Zero(2)});
    const VectorXd out = mlp_forward(net, VectorXd{{1.0, 2.0}});
    CHECK(out(0) == doctest::Approx(1.0));
    CHECK(out(1) == doctest::Approx(2.0));
}

TEST_CASE("zero-weight softplus layer outputs ln 2") {
    Mlp net;
    net.layers.push_back({Eigen::MatrixXd::Zero(3, 2), VectorXd::Zero(3)});
    net.output_activation = OutputActivation::Softplus;
    const VectorXd out = mlp_forward(net, VectorXd{{5.0, -7.0}});
    for (int i = 0; i < 3; ++i) CHECK(out(i) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("two-layer relu hand evaluation") {
    Mlp net;
    Eigen::MatrixXd w1(2, 1);
    w1 << 1.0, -1.0;
    Eigen::MatrixXd w2(1, 2);
    w2 << 1.0, 1.0;
    net.layers.push_back({w1, VectorXd::Zero(2)});
    net.layers.push_back({w2, VectorXd::Zero(1)});
    const VectorXd out = mlp_forward(net, VectorXd{{-3.0}});
    CHECK(out(0) == doctest::Approx(3.0));
}

TEST_CASE("linear layer backward matches calculus") {
    Mlp net;
    net.layers.push_back({Eigen::MatrixXd::Identity(2, 2), VectorXd::Zero(2)});
    const VectorXd x{{3.0, -4.0}};
    ForwardCache cache;
    mlp_forward(net, x, &cache);
    const Eigen::MatrixXd gout = Eigen::MatrixXd{{1.0}, {0.0}};
    const GradientBundle g = mlp_backward(net, cache, gout);
    CHECK(g.layers[0].w(0, 0) == doctest::Approx(3.0));
    CHECK(g.layers[0].w(0, 1) == doctest::Approx(-4.0));
    CHECK(g.layers[0].w(1, 0) == doctest::Approx(0.0));
    CHECK(g.layers[0].b(0) == doctest::Approx(1.0));
    CHECK(g.layers[0].b(1) == doctest::Approx(0.0));
}

TEST_CASE("zero output grad gives zero bundle") {
    Rng rng(7);
    Mlp net = make_mlp(3, {4}, 2, OutputActivation::Identity, rng);
    ForwardCache cache;
    mlp_forward(net, VectorXd{{0.3, -0.1, 0.8}}, &cache);
    const GradientBundle g = mlp_backward(net, cache, Eigen::MatrixXd::Zero(2, 1));
    for (const auto& layer : g.layers) {
        CHECK(layer.w.cwiseAbs().maxCoeff() == 0.0);
        CHECK(layer.b.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("analytic gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const OutputActivation act = seed % 2 ? OutputActivation::Softplus
                                              : OutputActivation::Identity;
        Mlp net = make_mlp(4, {6, 5}, 3, act, rng);
        VectorXd x(4), target(3);
        for (int i = 0; i < 4; ++i) x(i) = rng.uniform(-1.0, 1.0);
        for (int i = 0; i < 3; ++i) target(i) = rng.uniform(-1.0, 1.0);

        const auto loss = [&] {
            return mse_loss(mlp_forward(net, x), target).first;
        };
        ForwardCache cache;
        const VectorXd pred = mlp_forward(net, x, &cache);
        const auto [l, grad] = mse_loss(pred, target);
        const GradientBundle analytic = mlp_backward(net, cache, Eigen::MatrixXd(grad));
        check_gradients(net, analytic, loss);
    }
}

TEST_CASE("softplus output is strictly positive") {
    Rng rng(11);
    Mlp net = make_mlp(3, {8}, 4, OutputActivation::Softplus, rng);
    for (int trial = 0; trial < 50; ++trial) {
        VectorXd x(3);
        for (int i = 0; i < 3; ++i) x(i) = rng.uniform(-10.0, 10.0);
        CHECK(mlp_forward(net, x).minCoeff() > 0.0);
    }
}

TEST_CASE("forward determinism") {
    Rng rng(3);
    Mlp net = make_mlp(5, {7}, 2, OutputActivation::Identity, rng);
    const VectorXd x = VectorXd::LinSpaced(5, -1.0, 1.0);
    const VectorXd a = mlp_forward(net, x);
    const VectorXd b = mlp_forward(net, x);
    CHECK((a.array() == b.array()).all());
}

TEST_CASE("adam zero gradient is a fixed point") {
    Rng rng(5);
    Mlp net = make_mlp(2, {3}, 1, OutputActivation::Identity, rng);
    const Mlp before = net;
    AdamState opt = make_adam(net, 0.003);
    adam_step(net, zero_gradients(net), opt);
    CHECK(opt.t == 1);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK((net.layers[l].w.array() == before.layers[l].w.array()).all());
        CHECK((net.layers[l].b.array() == before.layers[l].b.array()).all());
    }
}

TEST_CASE("first adam step approximates -lr * sign(g)") {
    Mlp net;
    net.layers.push_back({Eigen::MatrixXd::Zero(1, 1), VectorXd::Zero(1)});
    AdamState opt = make_adam(net, 0.003);
    GradientBundle g = zero_gradients(net);
    g.layers[0].w(0, 0) = 0.5;
    adam_step(net, g, opt);
    // bias correction makes the first step -lr * g/(|g| + eps') ~ -lr
    CHECK(net.layers[0].w(0, 0) == doctest::Approx(-0.003).epsilon(1e-4));
}

TEST_CASE("adam determinism") {
    Rng rng(9);
    Mlp net_a = make_mlp(3, {4}, 2, OutputActivation::Identity, rng);
    Mlp net_b = net_a;
    AdamState opt_a = make_adam(net_a, 0.01);
    AdamState opt_b = make_adam(net_b, 0.01);
    GradientBundle g = zero_gradients(net_a);
    for (auto& layer : g.layers) {
        layer.w.setConstant(0.25);
        layer.b.setConstant(-0.5);
    }
    adam_step(net_a, g, opt_a);
    adam_step(net_b, g, opt_b);
    for (std::size_t l = 0; l < net_a.layers.size(); ++l)
        CHECK((net_a.layers[l].w.array() == net_b.layers[l].w.array()).all());
}

TEST_CASE("adam has no hidden global state across parameter order") {
    // permuting which layer gets which gradient, then permuting back, changes nothing
    Rng rng(21);
    Mlp net = make_mlp(2, {2}, 2, OutputActivation::Identity, rng);
    Mlp net_copy = net;
    AdamState opt = make_adam(net, 0.01);
    AdamState opt_copy = make_adam(net_copy, 0.01);
    GradientBundle g = zero_gradients(net);
    g.layers[0].w.setConstant(1.0);
    g.layers[1].w.setConstant(-2.0);
    adam_step(net, g, opt);
    adam_step(net_copy, g, opt_copy);
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        CHECK((net.layers[l].w.array() == net_copy.layers[l].w.array()).all());
}

TEST_CASE("mse loss examples") {
    {
        const auto [l, g] = mse_loss(VectorXd{{1.0, 2.0}}, VectorXd{{1.0, 2.0}});
        CHECK(l == 0.0);
        CHECK(g.cwiseAbs().maxCoeff() == 0.0);
    }
    {
        const auto [l, g] = mse_loss(VectorXd{{1.0, 0.0}}, VectorXd{{0.0, 0.0}});
        CHECK(l == doctest::Approx(0.5));
        CHECK(g(0) == doctest::Approx(1.0));
        CHECK(g(1) == doctest::Approx(0.0));
    }
    {
        // quadratic homogeneity
        const auto [l1, g1] = mse_loss(VectorXd{{0.3, -0.4}}, VectorXd::Zero(2));
        const auto [l4, g4] = mse_loss(VectorXd{{0.6, -0.8}}, VectorXd::Zero(2));
        CHECK(l4 == doctest::Approx(4.0 * l1));
    }
    CHECK_THROWS_AS(mse_loss(VectorXd::Zero(2), VectorXd::Zero(3)), std::invalid_argument);
}

#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "flowarm/rng.hpp"

namespace flowarm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class OutputActivation { Identity, Softplus };

struct Layer {
    MatrixXd w; // out x in
    VectorXd b; // out
};

// Dense multilayer perceptron, ReLU hidden activations, configurable output
// activation, 64-bit floats throughout.
struct Mlp {
    std::vector<Layer> layers;
    OutputActivation output_activation = OutputActivation::Identity;

    int in_dim() const { return static_cast<int>(layers.front().w.cols()); }
    int out_dim() const { return static_cast<int>(layers.back().w.rows()); }
};

// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization per layer
Mlp make_mlp(int in_dim, const std::vector<int>& hidden, int out_dim,
             OutputActivation out_act, Rng& rng);

// Activation record from a forward pass, one column per sample.
struct ForwardCache {
    MatrixXd input;
    std::vector<MatrixXd> pre;  // pre-activation per layer
    std::vector<MatrixXd> post; // post-activation per layer (post.back() = output)
};

struct GradientBundle {
    std::vector<Layer> layers; // shapes mirror Mlp
    MatrixXd input;            // d(loss)/d(input), filled on request
    bool has_input_grad = false;
};

GradientBundle zero_gradients(const Mlp& net);

// Batched forward: input is in_dim x n, output is out_dim x n.
MatrixXd mlp_forward(const Mlp& net, const MatrixXd& input, ForwardCache* cache = nullptr);
VectorXd mlp_forward(const Mlp& net, const VectorXd& input, ForwardCache* cache = nullptr);

// Exact reverse-mode pass. output_grad has one column per sample; per-sample
// contributions are summed into the bundle (callers scale columns to get a
// batch mean).
GradientBundle mlp_backward(const Mlp& net, const ForwardCache& cache,
                            const MatrixXd& output_grad, bool want_input_grad = false);

// Accumulate src into dst with the given scale.
void accumulate(GradientBundle& dst, const GradientBundle& src, double scale = 1.0);

struct AdamState {
    std::vector<Layer> m;
    std::vector<Layer> v;
    long t = 0;
    double lr = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
};

AdamState make_adam(const Mlp& net, double lr);

// Bias-corrected Adam update in place; increments t.
void adam_step(Mlp& net, const GradientBundle& grads, AdamState& opt);

// Mean squared error and its gradient with respect to pred.
std::pair<double, VectorXd> mse_loss(const VectorXd& pred, const VectorXd& target);

double softplus(double x);

} // namespace flowarm

#include "flowarm/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace flowarm {

double softplus(double x) {
    // log(1 + e^x) without overflow for large |x|
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

static double sigmoid(double x) {
    if (x >= 0.0) {
        const double z = std::exp(-x);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

Mlp make_mlp(int in_dim, const std::vector<int>& hidden, int out_dim,
             OutputActivation out_act, Rng& rng) {
    Mlp net;
    net.output_activation = out_act;
    std::vector<int> dims;
    dims.push_back(in_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out_dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.w.resize(dims[l + 1], dims[l]);
        layer.b = VectorXd::Zero(dims[l + 1]);
        const double bound = std::sqrt(1.0 / dims[l]);
        for (int i = 0; i < layer.w.rows(); ++i)
            for (int j = 0; j < layer.w.cols(); ++j)
                layer.w(i, j) = rng.uniform(-bound, bound);
        for (int i = 0; i < layer.b.size(); ++i)
            layer.b(i) = rng.uniform(-bound, bound);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

GradientBundle zero_gradients(const Mlp& net) {
    GradientBundle g;
    for (const Layer& l : net.layers)
        g.layers.push_back({MatrixXd::Zero(l.w.rows(), l.w.cols()),
                            VectorXd::Zero(l.b.size())});
    return g;
}

MatrixXd mlp_forward(const Mlp& net, const MatrixXd& input, ForwardCache* cache) {
    if (input.rows() != net.in_dim())
        throw std::invalid_argument("mlp_forward: input dimension mismatch");
    if (!input.allFinite())
        throw std::invalid_argument("mlp_forward: non-finite input");
    if (cache) {
        cache->input = input;
        cache->pre.clear();
        cache->post.clear();
    }
    MatrixXd x = input;
    const std::size_t n_layers = net.layers.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        MatrixXd z = (net.layers[l].w * x).colwise() + net.layers[l].b;
        if (cache) cache->pre.push_back(z);
        if (l + 1 < n_layers) {
            x = z.cwiseMax(0.0);
        } else if (net.output_activation == OutputActivation::Softplus) {
            x = z.unaryExpr([](double v) { return softplus(v); });
        } else {
            x = z;
        }
        if (cache) cache->post.push_back(x);
    }
    return x;
}

VectorXd mlp_forward(const Mlp& net, const VectorXd& input, ForwardCache* cache) {
    return mlp_forward(net, MatrixXd(input), cache).col(0);
}

GradientBundle mlp_backward(const Mlp& net, const ForwardCache& cache,
                            const MatrixXd& output_grad, bool want_input_grad) {
    const std::size_t n_layers = net.layers.size();
    if (cache.pre.size() != n_layers)
        throw std::invalid_argument("mlp_backward: cache does not match network");
    if (output_grad.rows() != net.out_dim() || output_grad.cols() != cache.input.cols())
        throw std::invalid_argument("mlp_backward: output_grad shape mismatch");

    GradientBundle g = zero_gradients(net);
    MatrixXd delta = output_grad;
    if (net.output_activation == OutputActivation::Softplus) {
        // d softplus(z)/dz = sigmoid(z)
        delta = delta.cwiseProduct(
            cache.pre.back().unaryExpr([](double z) { return sigmoid(z); }));
    }
    for (std::size_t l = n_layers; l-- > 0;) {
        const MatrixXd& below = (l == 0) ? cache.input : cache.post[l - 1];
        g.layers[l].w = delta * below.transpose();
        g.layers[l].b = delta.rowwise().sum();
        if (l > 0) {
            delta = net.layers[l].w.transpose() * delta;
            // ReLU mask from the pre-activation of the layer below
            delta = delta.cwiseProduct(cache.pre[l - 1].unaryExpr(
                [](double z) { return z > 0.0 ? 1.0 : 0.0; }));
        } else if (want_input_grad) {
            g.input = net.layers[0].w.transpose() * delta;
            g.has_input_grad = true;
        }
    }
    return g;
}

void accumulate(GradientBundle& dst, const GradientBundle& src, double scale) {
    for (std::size_t l = 0; l < dst.layers.size(); ++l) {
        dst.layers[l].w += scale * src.layers[l].w;
        dst.layers[l].b += scale * src.layers[l].b;
    }
}

AdamState make_adam(const Mlp& net, double lr) {
    AdamState s;
    s.lr = lr;
    for (const Layer& l : net.layers) {
        s.m.push_back({MatrixXd::Zero(l.w.rows(), l.w.cols()), VectorXd::Zero(l.b.size())});
        s.v.push_back({MatrixXd::Zero(l.w.rows(), l.w.cols()), VectorXd::Zero(l.b.size())});
    }
    return s;
}

void adam_step(Mlp& net, const GradientBundle& grads, AdamState& opt) {
    if (grads.layers.size() != net.layers.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    opt.t += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const MatrixXd& gw = grads.layers[l].w;
        const VectorXd& gb = grads.layers[l].b;
        if (!gw.allFinite() || !gb.allFinite())
            throw std::invalid_argument("adam_step: non-finite gradients");
        Layer& m = opt.m[l];
        Layer& v = opt.v[l];
        m.w = opt.beta1 * m.w + (1.0 - opt.beta1) * gw;
        m.b = opt.beta1 * m.b + (1.0 - opt.beta1) * gb;
        v.w = opt.beta2 * v.w + (1.0 - opt.beta2) * gw.cwiseProduct(gw);
        v.b = opt.beta2 * v.b + (1.0 - opt.beta2) * gb.cwiseProduct(gb);
        const MatrixXd mw_hat = m.w / bc1;
        const VectorXd mb_hat = m.b / bc1;
        const MatrixXd vw_hat = v.w / bc2;
        const VectorXd vb_hat = v.b / bc2;
        net.layers[l].w.array() -= opt.lr * mw_hat.array() / (vw_hat.array().sqrt() + opt.eps_hat);
        net.layers[l].b.array() -= opt.lr * mb_hat.array() / (vb_hat.array().sqrt() + opt.eps_hat);
    }
}

std::pair<double, VectorXd> mse_loss(const VectorXd& pred, const VectorXd& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("mse_loss: length mismatch");
    const VectorXd diff = pred - target;
    const double n = static_cast<double>(pred.size());
    return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

} // namespace flowarm

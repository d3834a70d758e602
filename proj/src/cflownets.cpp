#include "flowarm/cflownets.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace flowarm {

void ActionSpace::validate() const {
    if (lo.size() != hi.size() || lo.size() == 0)
        throw std::invalid_argument("ActionSpace: bounds shape mismatch");
    for (int i = 0; i < lo.size(); ++i)
        if (!(lo(i) < hi(i)))
            throw std::invalid_argument("ActionSpace: lo < hi violated");
}

ActionSpace ActionSpace::symmetric(int dim, double bound) {
    ActionSpace s;
    s.lo = VectorXd::Constant(dim, -bound);
    s.hi = VectorXd::Constant(dim, bound);
    return s;
}

void CFlowNetsConfig::validate() const {
    if (M < 1 || K < 1 || batch_size < 1)
        throw std::invalid_argument("CFlowNetsConfig: M, K, batch_size must be >= 1");
    if (!(lambda > 0.0) || !(epsilon > 0.0))
        throw std::invalid_argument("CFlowNetsConfig: lambda and epsilon must be positive");
}

FlowNetwork make_flow_network(int obs_dim, int action_dim, const std::vector<int>& hidden, Rng& rng) {
    return {make_mlp(obs_dim + action_dim, hidden, 1, OutputActivation::Identity, rng)};
}

RetrievalNetwork make_retrieval_network(int obs_dim, int action_dim, const std::vector<int>& hidden, Rng& rng) {
    return {make_mlp(obs_dim + action_dim, hidden, obs_dim, OutputActivation::Identity, rng)};
}

double flow_log(const FlowNetwork& flow, const VectorXd& obs, const VectorXd& action) {
    VectorXd input(obs.size() + action.size());
    input << obs, action;
    return mlp_forward(flow.net, input)(0);
}

MatrixXd sample_actions_uniform(const ActionSpace& space, int n, Rng& rng) {
    space.validate();
    if (n < 1) throw std::invalid_argument("sample_actions_uniform: n must be >= 1");
    MatrixXd actions(space.dim(), n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < space.dim(); ++i)
            actions(i, j) = rng.uniform(space.lo(i), space.hi(i));
    return actions;
}

// log(c + sum_i exp(v_i)) with c >= 0, stable for any magnitude of v
static double log_sum_exp_with_offset(double c, const Eigen::Ref<const VectorXd>& v) {
    double hi = v.maxCoeff();
    if (c > 0.0) hi = std::max(hi, std::log(c));
    double acc = (c > 0.0) ? std::exp(std::log(c) - hi) : 0.0;
    for (int i = 0; i < v.size(); ++i) acc += std::exp(v(i) - hi);
    return hi + std::log(acc);
}

ActionProbabilityBuffer build_action_probability_buffer(const FlowNetwork& flow, const VectorXd& obs,
                                                        const ActionSpace& space, int M, Rng& rng) {
    if (M < 1) throw std::invalid_argument("build_action_probability_buffer: M must be >= 1");
    ActionProbabilityBuffer buf;
    buf.actions = sample_actions_uniform(space, M, rng);
    MatrixXd input(obs.size() + space.dim(), M);
    input.topRows(obs.size()).colwise() = obs;
    input.bottomRows(space.dim()) = buf.actions;
    buf.log_flows = mlp_forward(flow.net, input).row(0).transpose();
    if (!buf.log_flows.allFinite())
        throw std::invalid_argument("build_action_probability_buffer: non-finite flow outputs");
    // p_i = exp(f_i - logsumexp(f))
    const double hi = buf.log_flows.maxCoeff();
    const VectorXd shifted = (buf.log_flows.array() - hi).exp();
    buf.probabilities = shifted / shifted.sum();
    return buf;
}

VectorXd sample_action(const ActionProbabilityBuffer& buffer, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < buffer.probabilities.size(); ++i) {
        acc += buffer.probabilities(i);
        if (u < acc) return buffer.actions.col(i);
    }
    return buffer.actions.col(buffer.actions.cols() - 1);
}

Trajectory collect_episode(const ReacherEnv& env, const FlowNetwork& flow,
                           const CFlowNetsConfig& cfg, Rng& rng) {
    const ActionSpace space = ActionSpace::symmetric(env.action_dim());
    Trajectory traj;
    EnvState state = env.reset(rng);
    VectorXd obs = observe(env.config(), state);
    bool done = false;
    while (!done) {
        const ActionProbabilityBuffer buf = build_action_probability_buffer(flow, obs, space, cfg.M, rng);
        const VectorXd action = sample_action(buf, rng);
        auto [next_state, result] = env.step(state, action);
        traj.push_back({obs, action, result.sparse_reward, result.observation, result.done});
        state = next_state;
        obs = result.observation;
        done = result.done;
    }
    return traj;
}

double compute_log_inflow(const FlowNetwork& flow, const RetrievalNetwork& retrieval,
                          const VectorXd& obs, const MatrixXd& actions, double epsilon) {
    const int K = static_cast<int>(actions.cols());
    if (K < 1) throw std::invalid_argument("compute_log_inflow: K must be >= 1");
    MatrixXd retrieval_in(obs.size() + actions.rows(), K);
    retrieval_in.topRows(obs.size()).colwise() = obs;
    retrieval_in.bottomRows(actions.rows()) = actions;
    const MatrixXd parents = mlp_forward(retrieval.net, retrieval_in);
    MatrixXd flow_in(obs.size() + actions.rows(), K);
    flow_in.topRows(obs.size()) = parents;
    flow_in.bottomRows(actions.rows()) = actions;
    const VectorXd f = mlp_forward(flow.net, flow_in).row(0).transpose();
    if (!f.allFinite()) throw std::invalid_argument("compute_log_inflow: non-finite flow outputs");
    return log_sum_exp_with_offset(epsilon, f);
}

double compute_log_outflow(const FlowNetwork& flow, const VectorXd& obs, const MatrixXd& actions,
                           double reward, double lambda, double epsilon) {
    const int K = static_cast<int>(actions.cols());
    if (K < 1) throw std::invalid_argument("compute_log_outflow: K must be >= 1");
    if (reward < 0.0) throw std::invalid_argument("compute_log_outflow: reward must be >= 0");
    MatrixXd flow_in(obs.size() + actions.rows(), K);
    flow_in.topRows(obs.size()).colwise() = obs;
    flow_in.bottomRows(actions.rows()) = actions;
    const VectorXd f = mlp_forward(flow.net, flow_in).row(0).transpose();
    if (!f.allFinite()) throw std::invalid_argument("compute_log_outflow: non-finite flow outputs");
    return log_sum_exp_with_offset(epsilon + lambda * reward, f);
}

FlowMatchingResult flow_matching_loss(const FlowNetwork& flow, const RetrievalNetwork& retrieval,
                                      const std::vector<const Transition*>& minibatch,
                                      const ActionSpace& space, const CFlowNetsConfig& cfg, Rng& rng,
                                      const MatrixXd* frozen_actions) {
    if (minibatch.empty()) throw std::invalid_argument("flow_matching_loss: empty minibatch");
    const int B = static_cast<int>(minibatch.size());
    const int K = cfg.K;
    const int obs_dim = static_cast<int>(minibatch.front()->next_obs.size());
    const int act_dim = space.dim();

    MatrixXd actions;
    if (frozen_actions) {
        if (frozen_actions->rows() != act_dim || frozen_actions->cols() != static_cast<long>(B) * K)
            throw std::invalid_argument("flow_matching_loss: frozen action shape mismatch");
        actions = *frozen_actions;
    } else {
        actions = sample_actions_uniform(space, B * K, rng);
    }

    // Column layout: sample b occupies columns [b*K, (b+1)*K).
    MatrixXd retrieval_in(obs_dim + act_dim, B * K);
    for (int b = 0; b < B; ++b)
        retrieval_in.block(0, b * K, obs_dim, K).colwise() = minibatch[b]->next_obs;
    retrieval_in.bottomRows(act_dim) = actions;
    const MatrixXd parents = mlp_forward(retrieval.net, retrieval_in);

    MatrixXd inflow_in(obs_dim + act_dim, B * K);
    inflow_in.topRows(obs_dim) = parents;
    inflow_in.bottomRows(act_dim) = actions;
    MatrixXd outflow_in = retrieval_in; // same states and actions

    ForwardCache in_cache, out_cache;
    const VectorXd f_in = mlp_forward(flow.net, inflow_in, &in_cache).row(0).transpose();
    const VectorXd f_out = mlp_forward(flow.net, outflow_in, &out_cache).row(0).transpose();
    if (!f_in.allFinite() || !f_out.allFinite())
        throw std::invalid_argument("flow_matching_loss: non-finite flow outputs");

    double loss = 0.0;
    Eigen::RowVectorXd g_in(B * K), g_out(B * K);
    for (int b = 0; b < B; ++b) {
        const auto fin = f_in.segment(b * K, K);
        const auto fout = f_out.segment(b * K, K);
        const double li = log_sum_exp_with_offset(cfg.epsilon, fin);
        const double lo = log_sum_exp_with_offset(cfg.epsilon + cfg.lambda * minibatch[b]->reward, fout);
        const double delta = li - lo;
        loss += delta * delta;
        const double scale = 2.0 * delta / B;
        for (int k = 0; k < K; ++k) {
            g_in(b * K + k) = scale * std::exp(fin(k) - li);
            g_out(b * K + k) = -scale * std::exp(fout(k) - lo);
        }
    }
    loss /= B;

    FlowMatchingResult result;
    result.loss = loss;
    result.flow_grads = mlp_backward(flow.net, in_cache, g_in);
    accumulate(result.flow_grads, mlp_backward(flow.net, out_cache, g_out));
    return result;
}

static std::pair<MatrixXd, MatrixXd> retrieval_batch(const std::vector<const Transition*>& batch) {
    const int obs_dim = static_cast<int>(batch.front()->obs.size());
    const int act_dim = static_cast<int>(batch.front()->action.size());
    MatrixXd x(obs_dim + act_dim, batch.size());
    MatrixXd y(obs_dim, batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        x.col(i).head(obs_dim) = batch[i]->next_obs;
        x.col(i).tail(act_dim) = batch[i]->action;
        y.col(i) = batch[i]->obs;
    }
    return {x, y};
}

static double retrieval_update(RetrievalNetwork& retrieval, AdamState& opt,
                               const std::vector<const Transition*>& batch) {
    auto [x, y] = retrieval_batch(batch);
    ForwardCache cache;
    const MatrixXd pred = mlp_forward(retrieval.net, x, &cache);
    const MatrixXd diff = pred - y;
    const double n = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / n;
    GradientBundle grads = mlp_backward(retrieval.net, cache, (2.0 / n) * diff);
    adam_step(retrieval.net, grads, opt);
    return loss;
}

static double retrieval_mse(const RetrievalNetwork& retrieval, const std::vector<const Transition*>& batch) {
    auto [x, y] = retrieval_batch(batch);
    const MatrixXd pred = mlp_forward(retrieval.net, x);
    return (pred - y).squaredNorm() / static_cast<double>(pred.size());
}

RetrievalFitReport pretrain_retrieval(RetrievalNetwork& retrieval, const std::vector<Transition>& dataset,
                                      const CFlowNetsConfig& cfg, Rng& rng) {
    if (dataset.empty()) throw std::invalid_argument("pretrain_retrieval: empty dataset");
    // trailing 10% (at least one sample) held out
    const std::size_t heldout_size = std::max<std::size_t>(1, dataset.size() / 10);
    const std::size_t train_size = std::max<std::size_t>(1, dataset.size() - heldout_size);
    std::vector<const Transition*> heldout;
    for (std::size_t i = train_size; i < dataset.size(); ++i) heldout.push_back(&dataset[i]);
    if (heldout.empty()) heldout.push_back(&dataset[0]);

    AdamState opt = make_adam(retrieval.net, cfg.lr);
    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(train_size));
    const int steps_per_epoch = std::max<int>(1, static_cast<int>(train_size) / batch);

    RetrievalFitReport report;
    double best = retrieval_mse(retrieval, heldout);
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<const Transition*> mb;
            mb.reserve(batch);
            for (int i = 0; i < batch; ++i) mb.push_back(&dataset[rng.uniform_index(train_size)]);
            retrieval_update(retrieval, opt, mb);
        }
        report.epochs_run = epoch + 1;
        const double mse = retrieval_mse(retrieval, heldout);
        report.final_heldout_mse = mse;
        if (mse > best - 1e-6) break; // plateau
        best = mse;
    }
    return report;
}

void fine_tune_retrieval(RetrievalNetwork& retrieval, AdamState& opt, const ReplayBuffer& buffer,
                         int steps, const CFlowNetsConfig& cfg, Rng& rng) {
    if (steps <= 0) return;
    if (buffer.empty()) throw std::invalid_argument("fine_tune_retrieval: empty buffer");
    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(buffer.size()));
    for (int s = 0; s < steps; ++s) {
        auto mb = buffer.sample(batch, rng);
        retrieval_update(retrieval, opt, mb);
    }
}

std::vector<Transition> collect_random_transitions(const ReacherEnv& env, const ActionSpace& space,
                                                   int n, Rng& rng) {
    std::vector<Transition> out;
    out.reserve(n);
    EnvState state = env.reset(rng);
    VectorXd obs = observe(env.config(), state);
    while (static_cast<int>(out.size()) < n) {
        const VectorXd action = sample_actions_uniform(space, 1, rng).col(0);
        auto [next_state, result] = env.step(state, action);
        out.push_back({obs, action, result.sparse_reward, result.observation, result.done});
        if (result.done) {
            state = env.reset(rng);
            obs = observe(env.config(), state);
        } else {
            state = next_state;
            obs = result.observation;
        }
    }
    return out;
}

Policy greedy_policy(const FlowNetwork& flow, const ActionSpace& space, int M) {
    if (M < 1) throw std::invalid_argument("greedy_policy: M must be >= 1");
    FlowNetwork snapshot = flow;
    return [snapshot, space, M](const VectorXd& obs, Rng& rng) {
        const ActionProbabilityBuffer buf = build_action_probability_buffer(snapshot, obs, space, M, rng);
        return sample_action(buf, rng);
    };
}

CFlowNetsTrainResult cflownets_train(const ReacherEnv& env, const CFlowNetsConfig& cfg,
                                     long timestep_budget, Rng& rng, const EvalHook& eval_hook,
                                     const FlowNetwork* initial_flow,
                                     const RetrievalNetwork* initial_retrieval,
                                     ReplayBuffer* replay) {
    cfg.validate();
    const ActionSpace space = ActionSpace::symmetric(env.action_dim());

    CFlowNetsTrainResult result;
    result.flow = initial_flow ? *initial_flow
                               : make_flow_network(env.obs_dim(), env.action_dim(), cfg.flow_hidden, rng);
    if (initial_retrieval) {
        result.retrieval = *initial_retrieval;
    } else {
        result.retrieval = make_retrieval_network(env.obs_dim(), env.action_dim(), cfg.retrieval_hidden, rng);
        const auto t0 = std::chrono::steady_clock::now();
        const auto dataset = collect_random_transitions(env, space, cfg.pretrain_transitions, rng);
        pretrain_retrieval(result.retrieval, dataset, cfg, rng);
        result.pretrain_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    ReplayBuffer local_replay(cfg.replay_capacity);
    ReplayBuffer& buffer = replay ? *replay : local_replay;
    AdamState flow_opt = make_adam(result.flow.net, cfg.lr);
    AdamState retrieval_opt = make_adam(result.retrieval.net, cfg.lr);

    long t = 0;
    long next_eval = cfg.eval_freq;
    while (t < timestep_budget) {
        const Trajectory traj = collect_episode(env, result.flow, cfg, rng);
        for (const Transition& tr : traj) buffer.push(tr);
        t += static_cast<long>(traj.size());

        if (cfg.fine_tune_steps > 0 && !buffer.empty())
            fine_tune_retrieval(result.retrieval, retrieval_opt, buffer, cfg.fine_tune_steps, cfg, rng);

        if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
            for (int u = 0; u < cfg.updates_per_episode; ++u) {
                auto mb = buffer.sample(cfg.batch_size, rng);
                auto fm = flow_matching_loss(result.flow, result.retrieval, mb, space, cfg, rng);
                adam_step(result.flow.net, fm.flow_grads, flow_opt);
            }
        }

        while (next_eval <= t && next_eval <= timestep_budget) {
            if (eval_hook) eval_hook(next_eval, greedy_policy(result.flow, space, cfg.M));
            next_eval += cfg.eval_freq;
        }
    }
    return result;
}

} // namespace flowarm

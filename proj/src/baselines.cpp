#include "flowarm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowarm {

void BaselineConfig::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("BaselineConfig: gamma out of [0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("BaselineConfig: tau out of (0, 1]");
    if (policy_delay < 1) throw std::invalid_argument("BaselineConfig: policy_delay must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("BaselineConfig: batch_size must be >= 1");
}

ActorCriticModel make_actor_critic(int obs_dim, int action_dim, const std::vector<int>& hidden,
                                   bool twin, Rng& rng) {
    ActorCriticModel m;
    m.twin = twin;
    m.actor = make_mlp(obs_dim, hidden, action_dim, OutputActivation::Identity, rng);
    m.critic1 = make_mlp(obs_dim + action_dim, hidden, 1, OutputActivation::Identity, rng);
    m.critic2 = make_mlp(obs_dim + action_dim, hidden, 1, OutputActivation::Identity, rng);
    m.actor_target = m.actor;
    m.critic1_target = m.critic1;
    m.critic2_target = m.critic2;
    return m;
}

VectorXd select_action(const Mlp& actor, const VectorXd& obs, double sigma, Rng& rng) {
    VectorXd a = mlp_forward(actor, obs).array().tanh();
    if (sigma > 0.0)
        for (int i = 0; i < a.size(); ++i) a(i) += sigma * rng.normal();
    return a.cwiseMax(-1.0).cwiseMin(1.0);
}

double td3_target(double r, double gamma, double q1_next, double q2_next, bool done) {
    return r + gamma * (done ? 0.0 : 1.0) * std::min(q1_next, q2_next);
}

double ddpg_target(double r, double gamma, double q_next, bool done) {
    return r + gamma * (done ? 0.0 : 1.0) * q_next;
}

void soft_update(Mlp& target, const Mlp& source, double tau) {
    if (target.layers.size() != source.layers.size())
        throw std::invalid_argument("soft_update: shape mismatch");
    for (std::size_t l = 0; l < target.layers.size(); ++l) {
        if (target.layers[l].w.rows() != source.layers[l].w.rows() ||
            target.layers[l].w.cols() != source.layers[l].w.cols())
            throw std::invalid_argument("soft_update: shape mismatch");
        target.layers[l].w = tau * source.layers[l].w + (1.0 - tau) * target.layers[l].w;
        target.layers[l].b = tau * source.layers[l].b + (1.0 - tau) * target.layers[l].b;
    }
}

Policy actor_policy(const Mlp& actor) {
    Mlp snapshot = actor;
    return [snapshot](const VectorXd& obs, Rng&) -> VectorXd {
        return mlp_forward(snapshot, obs).array().tanh();
    };
}

namespace {

constexpr double kPreSquashReg = 0.05;
constexpr double kPreSquashKnee = 2.0;

struct Batch {
    MatrixXd obs;       // obs_dim x B
    MatrixXd action;    // act_dim x B
    VectorXd reward;    // B
    MatrixXd next_obs;  // obs_dim x B
};

Batch gather(const std::vector<const Transition*>& mb) {
    const int obs_dim = static_cast<int>(mb.front()->obs.size());
    const int act_dim = static_cast<int>(mb.front()->action.size());
    const int B = static_cast<int>(mb.size());
    Batch b{MatrixXd(obs_dim, B), MatrixXd(act_dim, B), VectorXd(B), MatrixXd(obs_dim, B)};
    for (int i = 0; i < B; ++i) {
        b.obs.col(i) = mb[i]->obs;
        b.action.col(i) = mb[i]->action;
        b.reward(i) = mb[i]->reward;
        b.next_obs.col(i) = mb[i]->next_obs;
    }
    return b;
}

MatrixXd critic_input(const MatrixXd& obs, const MatrixXd& action) {
    MatrixXd x(obs.rows() + action.rows(), obs.cols());
    x.topRows(obs.rows()) = obs;
    x.bottomRows(action.rows()) = action;
    return x;
}

void critic_regress(Mlp& critic, AdamState& opt, const MatrixXd& input, const VectorXd& targets) {
    ForwardCache cache;
    const VectorXd q = mlp_forward(critic, input, &cache).row(0).transpose();
    const double B = static_cast<double>(targets.size());
    const Eigen::RowVectorXd grad = (2.0 / B) * (q - targets).transpose();
    GradientBundle g = mlp_backward(critic, cache, grad);
    adam_step(critic, g, opt);
}

} // namespace

BaselineTrainResult baseline_train(const ReacherEnv& env, BaselineAlgo algo, const BaselineConfig& cfg,
                                   long timestep_budget, Rng& rng, const EvalHook& eval_hook,
                                   const ActorCriticModel* initial, ReplayBuffer* replay) {
    cfg.validate();
    const bool twin = (algo == BaselineAlgo::TD3);
    const int policy_delay = twin ? cfg.policy_delay : 1;
    const double policy_noise = twin ? cfg.policy_noise : 0.0;

    BaselineTrainResult result;
    result.model = initial ? *initial
                           : make_actor_critic(env.obs_dim(), env.action_dim(), cfg.hidden, twin, rng);
    ActorCriticModel& m = result.model;

    ReplayBuffer local_replay(cfg.replay_capacity);
    ReplayBuffer& buffer = replay ? *replay : local_replay;

    AdamState actor_opt = make_adam(m.actor, cfg.lr_actor);
    AdamState critic1_opt = make_adam(m.critic1, cfg.lr_critic);
    AdamState critic2_opt = make_adam(m.critic2, cfg.lr_critic);

    EnvState state = env.reset(rng);
    VectorXd obs = observe(env.config(), state);
    long next_eval = cfg.eval_freq;
    long updates = 0;

    for (long t = 0; t < timestep_budget; ++t) {
        VectorXd action;
        if (t < cfg.start_steps && !initial) {
            action = VectorXd::NullaryExpr(env.action_dim(), [&](Eigen::Index) { return rng.uniform(-1.0, 1.0); });
        } else {
            action = select_action(m.actor, obs, cfg.exploration_sigma, rng);
        }
        auto [next_state, sr] = env.step(state, action);
        buffer.push({obs, action, sr.dense_reward, sr.observation, sr.done});
        if (sr.done) {
            state = env.reset(rng);
            obs = observe(env.config(), state);
        } else {
            state = next_state;
            obs = sr.observation;
        }

        if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
            const Batch b = gather(buffer.sample(cfg.batch_size, rng));
            const int B = static_cast<int>(b.reward.size());

            // target actions with clipped smoothing noise (TD3 only)
            MatrixXd next_a = mlp_forward(m.actor_target, b.next_obs).array().tanh();
            if (policy_noise > 0.0) {
                for (int j = 0; j < next_a.cols(); ++j)
                    for (int i = 0; i < next_a.rows(); ++i)
                        next_a(i, j) += std::clamp(policy_noise * rng.normal(),
                                                   -cfg.noise_clip, cfg.noise_clip);
                next_a = next_a.cwiseMax(-1.0).cwiseMin(1.0);
            }
            const MatrixXd next_in = critic_input(b.next_obs, next_a);
            const VectorXd q1n = mlp_forward(m.critic1_target, next_in).row(0).transpose();
            VectorXd targets(B);
            if (twin) {
                const VectorXd q2n = mlp_forward(m.critic2_target, next_in).row(0).transpose();
                // horizon timeouts only: bootstrap through episode ends
                for (int i = 0; i < B; ++i)
                    targets(i) = td3_target(b.reward(i), cfg.gamma, q1n(i), q2n(i), false);
            } else {
                for (int i = 0; i < B; ++i)
                    targets(i) = ddpg_target(b.reward(i), cfg.gamma, q1n(i), false);
            }

            const MatrixXd in = critic_input(b.obs, b.action);
            critic_regress(m.critic1, critic1_opt, in, targets);
            if (twin) critic_regress(m.critic2, critic2_opt, in, targets);
            ++updates;

            if (updates % policy_delay == 0) {
                // deterministic policy gradient through critic1
                ForwardCache actor_cache;
                const MatrixXd pre = mlp_forward(m.actor, b.obs, &actor_cache);
                const MatrixXd a = pre.array().tanh();
                ForwardCache critic_cache;
                mlp_forward(m.critic1, critic_input(b.obs, a), &critic_cache);
                const Eigen::RowVectorXd neg = Eigen::RowVectorXd::Constant(B, -1.0 / B);
                GradientBundle cg = mlp_backward(m.critic1, critic_cache, neg, true);
                const MatrixXd da = cg.input.bottomRows(a.rows());
                // hinged pre-squash penalty: push back only once |pre| exceeds
                // kPreSquashKnee (tanh is nearly flat there), so the actor can
                // still command full torque without drifting into saturation
                const MatrixXd excess = pre.array().abs().max(kPreSquashKnee).matrix() -
                                        MatrixXd::Constant(pre.rows(), pre.cols(), kPreSquashKnee);
                const MatrixXd dpre = da.cwiseProduct((1.0 - a.array().square()).matrix()) +
                                      (2.0 * kPreSquashReg / B) *
                                          excess.cwiseProduct(pre.array().sign().matrix());
                GradientBundle ag = mlp_backward(m.actor, actor_cache, dpre);
                adam_step(m.actor, ag, actor_opt);

                soft_update(m.actor_target, m.actor, cfg.tau);
                soft_update(m.critic1_target, m.critic1, cfg.tau);
                if (twin) soft_update(m.critic2_target, m.critic2, cfg.tau);
            }
        }

        while (next_eval <= t + 1 && next_eval <= timestep_budget) {
            if (eval_hook) eval_hook(next_eval, actor_policy(m.actor));
            next_eval += cfg.eval_freq;
        }
    }
    return result;
}

} // namespace flowarm

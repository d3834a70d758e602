#pragma once

#include <functional>
#include <vector>

#include "flowarm/cflownets.hpp" // Policy, EvalHook
#include "flowarm/nn.hpp"
#include "flowarm/reacher.hpp"
#include "flowarm/replay.hpp"

namespace flowarm {

enum class BaselineAlgo { TD3, DDPG };

struct BaselineConfig {
    double gamma = 0.99;
    double tau = 0.005;
    double policy_noise = 0.2;      // target policy smoothing (TD3)
    double noise_clip = 0.5;
    double exploration_sigma = 0.1;
    int policy_delay = 2;           // 1 for DDPG
    int batch_size = 100;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    std::size_t replay_capacity = 100000;
    int start_steps = 1000;         // uniform-random warmup before using the actor
    int eval_freq = 5000;
    std::vector<int> hidden{64, 64};

    void validate() const;
};

// Actor maps obs -> pre-squash action (tanh applied outside the net); critics
// map concat(obs, action) -> scalar value. DDPG uses the same structure with
// the twin critic and target smoothing disabled.
struct ActorCriticModel {
    Mlp actor;
    Mlp critic1;
    Mlp critic2;
    Mlp actor_target;
    Mlp critic1_target;
    Mlp critic2_target;
    bool twin = true;
};

ActorCriticModel make_actor_critic(int obs_dim, int action_dim, const std::vector<int>& hidden,
                                   bool twin, Rng& rng);

// tanh-squashed actor output plus Gaussian noise, clipped to [-1, 1]
VectorXd select_action(const Mlp& actor, const VectorXd& obs, double sigma, Rng& rng);

// y = r + gamma * (1 - done) * min(q1_next, q2_next)
double td3_target(double r, double gamma, double q1_next, double q2_next, bool done);
// y = r + gamma * (1 - done) * q_next
double ddpg_target(double r, double gamma, double q_next, bool done);

// theta' <- tau * theta + (1 - tau) * theta'
void soft_update(Mlp& target, const Mlp& source, double tau);

struct BaselineTrainResult {
    ActorCriticModel model;
};

// Standard off-policy loop with dense rewards. Episode ends are horizon
// timeouts, so the bootstrap never cuts off (done mask 0 in targets).
BaselineTrainResult baseline_train(const ReacherEnv& env, BaselineAlgo algo, const BaselineConfig& cfg,
                                   long timestep_budget, Rng& rng, const EvalHook& eval_hook,
                                   const ActorCriticModel* initial = nullptr,
                                   ReplayBuffer* replay = nullptr);

// Deterministic evaluation policy (no exploration noise).
Policy actor_policy(const Mlp& actor);

} // namespace flowarm

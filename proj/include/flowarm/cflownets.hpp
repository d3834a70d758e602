#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "flowarm/nn.hpp"
#include "flowarm/reacher.hpp"
#include "flowarm/replay.hpp"
#include "flowarm/rng.hpp"

namespace flowarm {

struct ActionSpace {
    VectorXd lo;
    VectorXd hi;

    int dim() const { return static_cast<int>(lo.size()); }
    double measure() const { return (hi - lo).prod(); }
    void validate() const;

    static ActionSpace symmetric(int dim, double bound = 1.0);
};

struct CFlowNetsConfig {
    int M = 100;              // actions per probability buffer
    int K = 50;               // sample flows per loss term
    double lambda = 50.0;     // reward scaling, kept commensurate with K
    double epsilon = 1.0;     // loss offset
    int batch_size = 64;
    std::size_t replay_capacity = 100000;
    double lr = 0.003;
    int eval_freq = 5000;
    int horizon = 50;
    std::vector<int> retrieval_hidden{64, 64, 64};
    std::vector<int> flow_hidden{64, 64};
    int updates_per_episode = 5;
    int pretrain_transitions = 50000;
    int pretrain_epochs = 8;
    int fine_tune_steps = 0;  // retrieval fine-tuning per episode; 0 disables

    void validate() const;
};

// Emits a raw scalar interpreted as the log of the edge flow F(s, a).
struct FlowNetwork {
    Mlp net; // concat(obs, action) -> 1
};

// Inverse-dynamics regressor: concat(next_obs, action) -> parent obs.
struct RetrievalNetwork {
    Mlp net;
};

FlowNetwork make_flow_network(int obs_dim, int action_dim, const std::vector<int>& hidden, Rng& rng);
RetrievalNetwork make_retrieval_network(int obs_dim, int action_dim, const std::vector<int>& hidden, Rng& rng);

double flow_log(const FlowNetwork& flow, const VectorXd& obs, const VectorXd& action);

struct ActionProbabilityBuffer {
    MatrixXd actions;       // dim x M
    VectorXd log_flows;     // M
    VectorXd probabilities; // M, sums to 1
};

// One uniformly sampled action per column, dim x n.
MatrixXd sample_actions_uniform(const ActionSpace& space, int n, Rng& rng);

ActionProbabilityBuffer build_action_probability_buffer(const FlowNetwork& flow, const VectorXd& obs,
                                                        const ActionSpace& space, int M, Rng& rng);

VectorXd sample_action(const ActionProbabilityBuffer& buffer, Rng& rng);

Trajectory collect_episode(const ReacherEnv& env, const FlowNetwork& flow,
                           const CFlowNetsConfig& cfg, Rng& rng);

// log(eps + sum_k exp(F_log(G(obs, a_k), a_k))) over the given actions
double compute_log_inflow(const FlowNetwork& flow, const RetrievalNetwork& retrieval,
                          const VectorXd& obs, const MatrixXd& actions, double epsilon);

// log(eps + lambda * reward + sum_k exp(F_log(obs, a_k)))
double compute_log_outflow(const FlowNetwork& flow, const VectorXd& obs, const MatrixXd& actions,
                           double reward, double lambda, double epsilon);

struct FlowMatchingResult {
    double loss = 0.0;
    GradientBundle flow_grads;
};

// Mean over transitions of (log_inflow - log_outflow)^2 at the reached state
// (next_obs, with that transition's reward). The same K actions are used for
// the inflow and outflow of a given state; gradients flow only into the flow
// network. When `frozen_actions` is given (dim x (K * batch)), those samples
// are used instead of drawing fresh ones — gradient checks rely on this.
FlowMatchingResult flow_matching_loss(const FlowNetwork& flow, const RetrievalNetwork& retrieval,
                                      const std::vector<const Transition*>& minibatch,
                                      const ActionSpace& space, const CFlowNetsConfig& cfg, Rng& rng,
                                      const MatrixXd* frozen_actions = nullptr);

struct RetrievalFitReport {
    double final_heldout_mse = 0.0;
    int epochs_run = 0;
};

// MSE regression (next_obs, action) -> obs until the held-out loss plateaus
// or the epoch cap is reached.
RetrievalFitReport pretrain_retrieval(RetrievalNetwork& retrieval, const std::vector<Transition>& dataset,
                                      const CFlowNetsConfig& cfg, Rng& rng);

// Continues MSE training on minibatches from the replay buffer.
void fine_tune_retrieval(RetrievalNetwork& retrieval, AdamState& opt, const ReplayBuffer& buffer,
                         int steps, const CFlowNetsConfig& cfg, Rng& rng);

// Collects transitions with uniformly random actions; used to pretrain the
// retrieval network.
std::vector<Transition> collect_random_transitions(const ReacherEnv& env, const ActionSpace& space,
                                                   int n, Rng& rng);

using Policy = std::function<VectorXd(const VectorXd& obs, Rng& rng)>;

// Buffer-sampled stochastic action selection, matching training behavior.
Policy greedy_policy(const FlowNetwork& flow, const ActionSpace& space, int M);

struct CFlowNetsTrainResult {
    FlowNetwork flow;
    RetrievalNetwork retrieval;
    double pretrain_seconds = 0.0;
};

// eval_hook(timestep, policy) is invoked every cfg.eval_freq environment steps.
using EvalHook = std::function<void(long timestep, const Policy& policy)>;

// Full training loop: pretrain retrieval (unless `initial` nets are supplied),
// then repeat collect episode -> store -> optional retrieval fine-tune ->
// flow-matching minibatch updates until the timestep budget.
CFlowNetsTrainResult cflownets_train(const ReacherEnv& env, const CFlowNetsConfig& cfg,
                                     long timestep_budget, Rng& rng, const EvalHook& eval_hook,
                                     const FlowNetwork* initial_flow = nullptr,
                                     const RetrievalNetwork* initial_retrieval = nullptr,
                                     ReplayBuffer* replay = nullptr);

} // namespace flowarm

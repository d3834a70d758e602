#include "flowarm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace flowarm {

const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::CFlowNets: return "cflownets";
        case Algorithm::TD3: return "td3";
        case Algorithm::DDPG: return "ddpg";
    }
    throw std::invalid_argument("unknown algorithm");
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "cflownets") return Algorithm::CFlowNets;
    if (name == "td3") return Algorithm::TD3;
    if (name == "ddpg") return Algorithm::DDPG;
    throw std::invalid_argument("unknown algorithm: " + name);
}

const char* stage_name(Stage s) {
    return s == Stage::Stage1 ? "stage1" : "stage3";
}

Stage stage_from_name(const std::string& name) {
    if (name == "stage1") return Stage::Stage1;
    if (name == "stage3") return Stage::Stage3;
    throw std::invalid_argument("unknown stage: " + name);
}

const char* transfer_mode_name(TransferMode m) {
    switch (m) {
        case TransferMode::FromScratch: return "from-scratch";
        case TransferMode::ParamsOnly: return "params";
        case TransferMode::ParamsAndBuffer: return "params+buffer";
    }
    throw std::invalid_argument("unknown transfer mode");
}

TransferMode transfer_mode_from_name(const std::string& name) {
    if (name == "from-scratch") return TransferMode::FromScratch;
    if (name == "params") return TransferMode::ParamsOnly;
    if (name == "params+buffer") return TransferMode::ParamsAndBuffer;
    throw std::invalid_argument("unknown transfer mode: " + name);
}

void RunManifest::validate() const {
    arm.validate();
    cflownets.validate();
    baseline.validate();
    if (stage == Stage::Stage1 &&
        (fault.kind != FaultKind::None || transfer_mode != TransferMode::FromScratch))
        throw std::invalid_argument("RunManifest: stage1 requires fault none and from-scratch mode");
    if (timestep_budget < 0) throw std::invalid_argument("RunManifest: negative budget");
    if (eval_freq < 1 || eval_episodes < 1)
        throw std::invalid_argument("RunManifest: eval_freq and eval_episodes must be >= 1");
}

EvalRecord evaluate_policy(const ReacherEnv& env, const Policy& policy, int n_episodes,
                           std::uint64_t seed, long eval_index, RewardMode mode, long timestep) {
    if (n_episodes < 1) throw std::invalid_argument("evaluate_policy: n_episodes must be >= 1");
    EvalRecord record;
    record.timestep = timestep;
    for (int e = 0; e < n_episodes; ++e) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(eval_index), static_cast<std::uint64_t>(e)));
        EnvState state = env.reset(rng);
        VectorXd obs = observe(env.config(), state);
        double ret = 0.0;
        bool done = false;
        while (!done) {
            const VectorXd action = policy(obs, rng);
            auto [next_state, sr] = env.step(state, action);
            ret += (mode == RewardMode::Dense) ? sr.dense_reward : sr.sparse_reward;
            state = next_state;
            obs = sr.observation;
            done = sr.done;
        }
        record.episode_returns.push_back(ret);
    }
    record.mean_return = std::accumulate(record.episode_returns.begin(),
                                         record.episode_returns.end(), 0.0) /
                         record.episode_returns.size();
    return record;
}

namespace {

RewardMode reward_mode_for(Algorithm a) {
    // CFlowNets trains on (and is evaluated by) the sparse terminal reward;
    // the actor-critic baselines consume the dense reward.
    return a == Algorithm::CFlowNets ? RewardMode::Sparse : RewardMode::Dense;
}

BufferSnapshot snapshot_buffer(const ReplayBuffer& buffer) {
    return {buffer.capacity(), buffer.cursor(), buffer.storage()};
}

StageResult train_run(const RunManifest& manifest, const ReacherEnv& env,
                      const Checkpoint* source, TransferMode mode) {
    StageResult out;
    out.checkpoint.algorithm = manifest.algorithm;
    out.checkpoint.manifest = manifest;
    Rng rng(manifest.seed);
    const RewardMode rmode = reward_mode_for(manifest.algorithm);

    auto eval_hook = [&](long timestep, const Policy& policy) {
        const long eval_index = timestep / manifest.eval_freq;
        out.evals.push_back(evaluate_policy(env, policy, manifest.eval_episodes,
                                            manifest.seed, eval_index, rmode, timestep));
    };

    auto find_net = [&](const std::string& name) -> const Mlp& {
        for (const auto& [n, net] : source->networks)
            if (n == name) return net;
        throw std::invalid_argument("checkpoint is missing network: " + name);
    };

    const auto t0 = std::chrono::steady_clock::now();
    if (manifest.algorithm == Algorithm::CFlowNets) {
        CFlowNetsConfig cfg = manifest.cflownets;
        cfg.eval_freq = manifest.eval_freq;
        cfg.horizon = manifest.arm.horizon;
        ReplayBuffer replay(cfg.replay_capacity);
        const FlowNetwork* init_flow = nullptr;
        const RetrievalNetwork* init_retrieval = nullptr;
        FlowNetwork flow_holder;
        RetrievalNetwork retrieval_holder;
        if (source && mode != TransferMode::FromScratch) {
            flow_holder = {find_net("flow")};
            retrieval_holder = {find_net("retrieval")};
            init_flow = &flow_holder;
            init_retrieval = &retrieval_holder;
            if (mode == TransferMode::ParamsAndBuffer)
                replay.restore(source->buffer->transitions, source->buffer->cursor);
        }
        auto trained = cflownets_train(env, cfg, manifest.timestep_budget, rng, eval_hook,
                                       init_flow, init_retrieval, &replay);
        out.checkpoint.pretrain_seconds = trained.pretrain_seconds;
        out.checkpoint.networks = {{"flow", trained.flow.net}, {"retrieval", trained.retrieval.net}};
        if (manifest.save_buffer) out.checkpoint.buffer = snapshot_buffer(replay);
    } else {
        BaselineConfig cfg = manifest.baseline;
        cfg.eval_freq = manifest.eval_freq;
        const BaselineAlgo algo = manifest.algorithm == Algorithm::TD3 ? BaselineAlgo::TD3
                                                                       : BaselineAlgo::DDPG;
        ReplayBuffer replay(cfg.replay_capacity);
        const ActorCriticModel* init = nullptr;
        ActorCriticModel model_holder;
        if (source && mode != TransferMode::FromScratch) {
            model_holder.twin = manifest.algorithm == Algorithm::TD3;
            model_holder.actor = find_net("actor");
            model_holder.critic1 = find_net("critic1");
            model_holder.critic2 = find_net("critic2");
            model_holder.actor_target = find_net("actor_target");
            model_holder.critic1_target = find_net("critic1_target");
            model_holder.critic2_target = find_net("critic2_target");
            init = &model_holder;
            if (mode == TransferMode::ParamsAndBuffer)
                replay.restore(source->buffer->transitions, source->buffer->cursor);
        }
        auto trained = baseline_train(env, algo, cfg, manifest.timestep_budget, rng, eval_hook,
                                      init, &replay);
        const ActorCriticModel& m = trained.model;
        out.checkpoint.networks = {{"actor", m.actor},
                                   {"critic1", m.critic1},
                                   {"critic2", m.critic2},
                                   {"actor_target", m.actor_target},
                                   {"critic1_target", m.critic1_target},
                                   {"critic2_target", m.critic2_target}};
        if (manifest.save_buffer) out.checkpoint.buffer = snapshot_buffer(replay);
    }
    out.checkpoint.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

} // namespace

StageResult run_stage1(const RunManifest& manifest) {
    manifest.validate();
    if (manifest.stage != Stage::Stage1)
        throw std::invalid_argument("run_stage1: manifest stage must be stage1");
    ReacherEnv env(manifest.arm);
    return train_run(manifest, env, nullptr, TransferMode::FromScratch);
}

StageResult run_stage3(const Checkpoint& checkpoint, const FaultSpec& fault, TransferMode mode,
                       const RunManifest& manifest) {
    if (fault.kind == FaultKind::None)
        throw std::invalid_argument("run_stage3: fault kind must not be none");
    if (mode != TransferMode::FromScratch && checkpoint.algorithm != manifest.algorithm)
        throw std::invalid_argument("run_stage3: checkpoint/algorithm mismatch");
    if (mode == TransferMode::ParamsAndBuffer && !checkpoint.buffer.has_value())
        throw std::invalid_argument("run_stage3: checkpoint has no replay buffer");

    RunManifest m = manifest;
    m.stage = Stage::Stage3;
    m.fault = fault;
    m.transfer_mode = mode;
    m.arm.validate();
    m.cflownets.validate();
    m.baseline.validate();
    // stage-3 retrieval fine-tuning default
    if (m.algorithm == Algorithm::CFlowNets && m.cflownets.fine_tune_steps == 0)
        m.cflownets.fine_tune_steps = 2;

    RunManifest faulted = m;
    faulted.arm = apply_fault(manifest.arm, fault);
    ReacherEnv env(faulted.arm);
    StageResult out = train_run(faulted, env, &checkpoint, mode);
    out.checkpoint.manifest.arm = manifest.arm; // record the pre-fault base config
    return out;
}

AsymptoteReport detect_asymptote(const std::vector<EvalRecord>& evals, int window, double threshold) {
    if (window < 2) throw std::invalid_argument("detect_asymptote: window must be >= 2");
    if (static_cast<int>(evals.size()) < window)
        throw std::invalid_argument("detect_asymptote: series shorter than window");
    AsymptoteReport report;
    report.window_size = window;
    report.variance_threshold = threshold;
    for (std::size_t end = window - 1; end < evals.size(); ++end) {
        double mean = 0.0;
        for (int k = 0; k < window; ++k) mean += evals[end - k].mean_return;
        mean /= window;
        double var = 0.0;
        for (int k = 0; k < window; ++k) {
            const double d = evals[end - k].mean_return - mean;
            var += d * d;
        }
        var /= window;
        if (var < threshold) {
            report.converged = true;
            report.convergence_timestep = evals[end].timestep;
            report.asymptotic_value = mean;
            return report;
        }
    }
    return report;
}

double default_variance_threshold(const std::vector<EvalRecord>& evals) {
    std::vector<double> vals;
    vals.reserve(evals.size());
    for (const auto& e : evals) vals.push_back(e.mean_return);
    std::sort(vals.begin(), vals.end());
    const auto quantile = [&](double q) {
        const double pos = q * (vals.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        const double frac = pos - i;
        return i + 1 < vals.size() ? vals[i] * (1.0 - frac) + vals[i + 1] * frac : vals[i];
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    return std::max(0.01 * iqr, 1e-12);
}

double retention_percent(double normal_asym, double fault_asym) {
    if (!(normal_asym < 0.0) || !(fault_asym < 0.0))
        throw std::invalid_argument("retention_percent: both asymptotes must be negative");
    return 100.0 * (normal_asym / fault_asym);
}

std::vector<AggregatePoint> aggregate_runs(const std::vector<std::vector<EvalRecord>>& logs) {
    if (logs.size() < 2) throw std::invalid_argument("aggregate_runs: need >= 2 logs");
    const std::size_t n_points = logs.front().size();
    for (const auto& log : logs)
        if (log.size() != n_points)
            throw std::invalid_argument("aggregate_runs: misaligned timesteps");
    std::vector<AggregatePoint> out;
    out.reserve(n_points);
    const double n = static_cast<double>(logs.size());
    for (std::size_t i = 0; i < n_points; ++i) {
        const long ts = logs.front()[i].timestep;
        double mean = 0.0;
        for (const auto& log : logs) {
            if (log[i].timestep != ts)
                throw std::invalid_argument("aggregate_runs: misaligned timesteps");
            mean += log[i].mean_return;
        }
        mean /= n;
        double var = 0.0;
        for (const auto& log : logs) {
            const double d = log[i].mean_return - mean;
            var += d * d;
        }
        var /= (n - 1.0);
        out.push_back({ts, mean, 1.96 * std::sqrt(var) / std::sqrt(n)});
    }
    return out;
}

std::vector<AdaptationRow> adaptation_speed_summary(const std::vector<RunSummaryInput>& runs,
                                                    int window) {
    // normal-env asymptotes per algorithm, for the retention column
    std::map<std::string, double> normal_asym;
    for (const auto& run : runs) {
        if (run.fault != "none" || static_cast<int>(run.evals.size()) < window) continue;
        const auto rep = detect_asymptote(run.evals, window, default_variance_threshold(run.evals));
        if (rep.converged) normal_asym[run.algorithm] = rep.asymptotic_value;
    }

    std::vector<AdaptationRow> rows;
    for (const auto& run : runs) {
        AdaptationRow row;
        row.algorithm = run.algorithm;
        row.fault = run.fault;
        row.wall_clock_seconds = run.wall_clock_seconds;
        if (static_cast<int>(run.evals.size()) >= window) {
            const auto rep = detect_asymptote(run.evals, window, default_variance_threshold(run.evals));
            row.converged = rep.converged;
            row.timesteps_to_asymptote = rep.convergence_timestep;
            row.asymptotic_return = rep.asymptotic_value;
            if (rep.converged && run.fault != "none") {
                const auto it = normal_asym.find(run.algorithm);
                if (it != normal_asym.end() && it->second < 0.0 && rep.asymptotic_value < 0.0)
                    row.retention = retention_percent(it->second, rep.asymptotic_value);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Policy checkpoint_policy(const Checkpoint& checkpoint) {
    if (checkpoint.algorithm == Algorithm::CFlowNets) {
        for (const auto& [name, net] : checkpoint.networks)
            if (name == "flow")
                return greedy_policy({net}, ActionSpace::symmetric(2), checkpoint.manifest.cflownets.M);
        throw std::invalid_argument("checkpoint_policy: missing flow network");
    }
    for (const auto& [name, net] : checkpoint.networks)
        if (name == "actor") return actor_policy(net);
    throw std::invalid_argument("checkpoint_policy: missing actor network");
}

} // namespace flowarm

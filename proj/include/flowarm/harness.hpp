#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowarm/baselines.hpp"
#include "flowarm/cflownets.hpp"
#include "flowarm/reacher.hpp"

namespace flowarm {

enum class Algorithm { CFlowNets, TD3, DDPG };
enum class Stage { Stage1, Stage3 };
enum class TransferMode { FromScratch, ParamsOnly, ParamsAndBuffer };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);
const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);
const char* transfer_mode_name(TransferMode m);
TransferMode transfer_mode_from_name(const std::string& name);

// Full provenance of a run, including the hyperparameter snapshot.
struct RunManifest {
    Algorithm algorithm = Algorithm::CFlowNets;
    Stage stage = Stage::Stage1;
    FaultSpec fault = FaultSpec::none();
    std::uint64_t seed = 0;
    long timestep_budget = 200000;
    int eval_freq = 5000;
    int eval_episodes = 10;
    TransferMode transfer_mode = TransferMode::FromScratch;
    bool save_buffer = true;
    ArmConfig arm;
    CFlowNetsConfig cflownets;
    BaselineConfig baseline;

    void validate() const; // Stage1 implies fault none and FromScratch
};

struct EvalRecord {
    long timestep = 0;
    double mean_return = 0.0;
    std::vector<double> episode_returns;
};

struct BufferSnapshot {
    std::size_t capacity = 0;
    std::size_t cursor = 0;
    std::vector<Transition> transitions;
};

struct Checkpoint {
    Algorithm algorithm = Algorithm::CFlowNets;
    std::vector<std::pair<std::string, Mlp>> networks;
    std::optional<BufferSnapshot> buffer;
    RunManifest manifest;
    double train_seconds = 0.0;
    double pretrain_seconds = 0.0;
};

struct AsymptoteReport {
    bool converged = false;
    long convergence_timestep = 0;
    double asymptotic_value = 0.0;
    int window_size = 0;
    double variance_threshold = 0.0;
};

enum class RewardMode { Dense, Sparse };

// Runs n_episodes frozen-policy episodes; episode e of evaluation eval_index
// is seeded from (seed, eval_index, e) so evaluation never perturbs the
// training stream.
EvalRecord evaluate_policy(const ReacherEnv& env, const Policy& policy, int n_episodes,
                           std::uint64_t seed, long eval_index, RewardMode mode, long timestep = 0);

struct StageResult {
    Checkpoint checkpoint;
    std::vector<EvalRecord> evals;
};

// Trains on the normal environment and captures model + buffer + timing.
StageResult run_stage1(const RunManifest& manifest);

// Builds the faulted environment and trains from the checkpoint according to
// the transfer mode. FromScratch ignores the checkpoint contents entirely.
StageResult run_stage3(const Checkpoint& checkpoint, const FaultSpec& fault, TransferMode mode,
                       const RunManifest& manifest);

// Earliest index whose trailing-window variance of mean returns drops below
// the threshold; unconverged if none.
AsymptoteReport detect_asymptote(const std::vector<EvalRecord>& evals, int window, double threshold);

// Default convergence threshold: 1% of the interquartile range of the series.
double default_variance_threshold(const std::vector<EvalRecord>& evals);

// 100 * normal / fault on the negative-return scale of this task.
double retention_percent(double normal_asym, double fault_asym);

struct AggregatePoint {
    long timestep = 0;
    double mean = 0.0;
    double ci_half_width = 0.0; // 1.96 * sample std / sqrt(n)
};

std::vector<AggregatePoint> aggregate_runs(const std::vector<std::vector<EvalRecord>>& logs);

struct AdaptationRow {
    std::string algorithm;
    std::string fault;
    bool converged = false;
    long timesteps_to_asymptote = 0;
    double wall_clock_seconds = 0.0;
    double asymptotic_return = 0.0;
    std::optional<double> retention; // vs the algorithm's normal-env asymptote
};

struct RunSummaryInput {
    std::string algorithm;
    std::string fault;
    std::vector<EvalRecord> evals;
    double wall_clock_seconds = 0.0;
};

// Groups per-run asymptote reports into the comparative table; unconverged
// runs are flagged, not dropped.
std::vector<AdaptationRow> adaptation_speed_summary(const std::vector<RunSummaryInput>& runs,
                                                    int window = 20);

// Construction of trainers from checkpoints (shared by run_stage3 and tests).
Policy checkpoint_policy(const Checkpoint& checkpoint);

} // namespace flowarm

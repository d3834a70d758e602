#pragma once

#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "flowarm/harness.hpp"

namespace flowarm::io {

// --- run configuration (JSON) -----------------------------------------------
// Every field has a default; unknown keys are rejected. A loaded config
// re-serializes to the same canonical bytes.

nlohmann::json manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

std::string canonical_config(const RunManifest& manifest);
RunManifest load_config_file(const std::filesystem::path& path);

// --- evaluation logs (CSV) --------------------------------------------------
// header: timestep,mean_return,ep_return_0..ep_return_{n-1}
// Doubles use shortest round-trip decimal encoding.

std::string eval_log_to_csv(const std::vector<EvalRecord>& evals);
std::vector<EvalRecord> eval_log_from_csv(const std::string& csv);
void write_eval_log(const std::filesystem::path& path, const std::vector<EvalRecord>& evals);
std::vector<EvalRecord> read_eval_log(const std::filesystem::path& path);

// --- checkpoints (binary container) -----------------------------------------
// magic "FLOWARM1", manifest JSON block, per-network shape headers with
// little-endian float64 parameter arrays, optional replay-buffer block.

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// --- learning-curve plots (SVG) ---------------------------------------------

struct PlotSeries {
    std::string label;
    std::vector<AggregatePoint> points;       // half-width 0 draws no band
    std::optional<double> asymptote;          // dashed horizontal line
};

std::string render_learning_curves_svg(const std::vector<PlotSeries>& series);

// --- run summaries ----------------------------------------------------------

nlohmann::json run_summary_json(const StageResult& result);

} // namespace flowarm::io

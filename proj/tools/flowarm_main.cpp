// flowarm command-line interface: train, transfer, plot, compare.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "flowarm/harness.hpp"
#include "flowarm/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowarm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

void apply_seed_override(RunManifest& manifest) {
    if (const char* env = std::getenv("FLOWARM_SEED"))
        manifest.seed = std::stoull(env);
}

void write_outputs(const fs::path& out_dir, const StageResult& result) {
    fs::create_directories(out_dir);
    io::write_eval_log(out_dir / "eval.csv", result.evals);
    io::save_checkpoint(out_dir / "checkpoint.bin", result.checkpoint);
    std::ofstream summary(out_dir / "summary.json", std::ios::binary);
    summary << io::run_summary_json(result).dump(2) << "\n";
    if (!summary) throw std::runtime_error("cannot write summary.json");
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    RunManifest manifest;
    try {
        manifest = io::load_config_file(config_path);
        apply_seed_override(manifest);
        manifest.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }
    try {
        write_outputs(out_dir, run_stage1(manifest));
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}

int cmd_transfer(const std::string& checkpoint_path, const std::string& fault_name,
                 const std::string& mode_name, const std::string& config_path,
                 const std::string& out_dir) {
    Checkpoint checkpoint;
    RunManifest manifest;
    FaultSpec fault;
    TransferMode mode;
    try {
        checkpoint = io::load_checkpoint(checkpoint_path);
        manifest = io::load_config_file(config_path);
        apply_seed_override(manifest);
        manifest.stage = Stage::Stage3;
        const FaultKind kind = fault_kind_from_name(fault_name);
        switch (kind) {
            case FaultKind::ReducedROM: fault = FaultSpec::reduced_rom(); break;
            case FaultKind::IncreasedDamping: fault = FaultSpec::increased_damping(); break;
            case FaultKind::ActuatorDamage: fault = FaultSpec::actuator_damage(); break;
            case FaultKind::StructuralDamage: fault = FaultSpec::structural_damage(); break;
            case FaultKind::None:
                throw std::invalid_argument("transfer requires a non-none fault");
        }
        mode = transfer_mode_from_name(mode_name);
        // incompatibilities are reported before any training begins
        if (mode != TransferMode::FromScratch && checkpoint.algorithm != manifest.algorithm)
            throw std::invalid_argument("checkpoint algorithm does not match config");
        if (mode == TransferMode::ParamsAndBuffer && !checkpoint.buffer.has_value())
            throw std::invalid_argument("checkpoint has no replay buffer; cannot use params+buffer");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }
    try {
        write_outputs(out_dir, run_stage3(checkpoint, fault, mode, manifest));
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}

// '*' wildcards within path components; no recursive globbing
std::vector<fs::path> expand_glob(const std::string& pattern) {
    const auto match = [](const std::string& name, const std::string& pat) {
        // iterative greedy '*' matching
        std::size_t n = 0, p = 0, star = std::string::npos, mark = 0;
        while (n < name.size()) {
            if (p < pat.size() && (pat[p] == name[n])) { ++n; ++p; }
            else if (p < pat.size() && pat[p] == '*') { star = p++; mark = n; }
            else if (star != std::string::npos) { p = star + 1; n = ++mark; }
            else return false;
        }
        while (p < pat.size() && pat[p] == '*') ++p;
        return p == pat.size();
    };

    fs::path pat(pattern);
    std::vector<fs::path> current{pat.is_absolute() ? pat.root_path() : fs::path(".")};
    for (const auto& comp : pat.relative_path()) {
        const std::string c = comp.string();
        std::vector<fs::path> next;
        if (c.find('*') == std::string::npos) {
            for (const auto& base : current)
                if (fs::exists(base / c)) next.push_back(base / c);
        } else {
            for (const auto& base : current) {
                if (!fs::is_directory(base)) continue;
                std::vector<fs::path> found;
                for (const auto& entry : fs::directory_iterator(base))
                    if (match(entry.path().filename().string(), c)) found.push_back(entry.path());
                std::sort(found.begin(), found.end());
                next.insert(next.end(), found.begin(), found.end());
            }
        }
        current = std::move(next);
    }
    return current;
}

std::string series_label(const fs::path& log_path) {
    const fs::path summary_path = log_path.parent_path() / "summary.json";
    if (fs::exists(summary_path)) {
        std::ifstream in(summary_path);
        json j;
        in >> j;
        std::string label = j.value("algorithm", "run");
        const std::string fault = j.value("fault", "none");
        if (fault != "none") label += "/" + fault;
        const std::string mode = j.value("transfer_mode", "from-scratch");
        if (j.value("stage", "stage1") == "stage3") label += "/" + mode;
        return label;
    }
    return log_path.stem().string();
}

int cmd_plot(const std::vector<std::string>& globs, const std::string& out_path) {
    std::map<std::string, std::vector<std::vector<EvalRecord>>> grouped;
    try {
        for (const auto& g : globs)
            for (const auto& p : expand_glob(g))
                grouped[series_label(p)].push_back(io::read_eval_log(p));
        if (grouped.empty()) throw std::invalid_argument("no logs matched");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }
    try {
        std::vector<io::PlotSeries> series;
        for (const auto& [label, logs] : grouped) {
            io::PlotSeries s;
            s.label = label;
            std::vector<EvalRecord> means;
            if (logs.size() == 1) {
                for (const auto& e : logs.front()) {
                    s.points.push_back({e.timestep, e.mean_return, 0.0});
                    means.push_back({e.timestep, e.mean_return, {}});
                }
            } else {
                for (const auto& p : aggregate_runs(logs)) {
                    s.points.push_back(p);
                    means.push_back({p.timestep, p.mean, {}});
                }
            }
            const int window = std::min<int>(20, static_cast<int>(means.size()));
            if (window >= 2) {
                const auto rep = detect_asymptote(means, window, default_variance_threshold(means));
                if (rep.converged) s.asymptote = rep.asymptotic_value;
            }
            series.push_back(std::move(s));
        }
        std::ofstream out(out_path, std::ios::binary);
        out << io::render_learning_curves_svg(series);
        if (!out) throw std::runtime_error("cannot write " + out_path);
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}

struct DiscoveredRun {
    json summary;
    std::vector<EvalRecord> evals;
};

int cmd_compare(const std::string& runs_dir) {
    std::vector<DiscoveredRun> runs;
    try {
        if (fs::exists(runs_dir)) {
            for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
                if (entry.path().filename() != "summary.json") continue;
                const fs::path log = entry.path().parent_path() / "eval.csv";
                if (!fs::exists(log)) continue;
                DiscoveredRun r;
                std::ifstream in(entry.path());
                in >> r.summary;
                r.evals = io::read_eval_log(log);
                runs.push_back(std::move(r));
            }
        }
        std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
            return a.summary.dump() < b.summary.dump();
        });

        std::vector<RunSummaryInput> inputs;
        for (const auto& r : runs)
            inputs.push_back({r.summary.value("algorithm", "?"), r.summary.value("fault", "none"),
                              r.evals, r.summary.value("train_seconds", 0.0)});
        const int window = 20;
        const auto rows = adaptation_speed_summary(inputs, window);

        std::ostringstream table;
        table << "algorithm,fault,converged,timesteps_to_asymptote,wall_clock_seconds,"
                 "asymptotic_return,retention_percent\n";
        for (const auto& row : rows) {
            table << row.algorithm << "," << row.fault << ","
                  << (row.converged ? "yes" : "no") << ","
                  << (row.converged ? std::to_string(row.timesteps_to_asymptote) : "unconverged")
                  << "," << row.wall_clock_seconds << "," << row.asymptotic_return << ",";
            if (row.retention) table << *row.retention;
            table << "\n";
        }

        // transfer-mode comparison: mean of the first 5 eval returns per group
        std::map<std::string, std::pair<double, int>> jumpstart;
        for (const auto& r : runs) {
            if (r.summary.value("stage", "stage1") != "stage3") continue;
            const std::string key = r.summary.value("algorithm", "?") + "," +
                                    r.summary.value("fault", "none") + "," +
                                    r.summary.value("transfer_mode", "from-scratch");
            double first5 = 0.0;
            const int n = std::min<int>(5, static_cast<int>(r.evals.size()));
            if (n == 0) continue;
            for (int i = 0; i < n; ++i) first5 += r.evals[i].mean_return;
            first5 /= n;
            auto& [sum, count] = jumpstart[key];
            sum += first5;
            ++count;
        }
        std::ostringstream jump;
        jump << "algorithm,fault,transfer_mode,mean_first5_eval_return,n_runs\n";
        for (const auto& [key, agg] : jumpstart)
            jump << key << "," << agg.first / agg.second << "," << agg.second << "\n";

        std::cout << table.str();
        std::cout << "\n" << jump.str();
        if (fs::exists(runs_dir)) {
            std::ofstream ct(fs::path(runs_dir) / "compare.csv", std::ios::binary);
            ct << table.str();
            std::ofstream jt(fs::path(runs_dir) / "jumpstart.csv", std::ios::binary);
            jt << jump.str();
        }
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fault-adaptation experiments for a 2-link planar reacher"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, fault_name, mode_name, runs_dir, out_path;
    std::vector<std::string> globs;

    auto* train = app.add_subcommand("train", "Stage-1 training on the normal environment");
    train->add_option("--config", config_path, "run configuration (JSON)")->required();
    train->add_option("--out", out_dir, "output directory")->required();

    auto* transfer = app.add_subcommand("transfer", "Stage-3 training on a faulted environment");
    transfer->add_option("--checkpoint", checkpoint_path, "stage-1 checkpoint")->required();
    transfer->add_option("--fault", fault_name,
                         "reduced-rom | increased-damping | actuator-damage | structural")->required();
    transfer->add_option("--mode", mode_name, "from-scratch | params | params+buffer")->required();
    transfer->add_option("--config", config_path, "run configuration (JSON)")->required();
    transfer->add_option("--out", out_dir, "output directory")->required();

    auto* plot = app.add_subcommand("plot", "Render learning curves to SVG");
    plot->add_option("--logs", globs, "eval-log glob(s)")->required();
    plot->add_option("--out", out_path, "output SVG path")->required();

    auto* compare = app.add_subcommand("compare", "Adaptation-speed and retention table");
    compare->add_option("--runs", runs_dir, "directory of completed runs")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    if (train->parsed()) return cmd_train(config_path, out_dir);
    if (transfer->parsed())
        return cmd_transfer(checkpoint_path, fault_name, mode_name, config_path, out_dir);
    if (plot->parsed()) return cmd_plot(globs, out_path);
    return cmd_compare(runs_dir);
}

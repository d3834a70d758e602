#include "flowarm/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace flowarm::io {

using nlohmann::json;

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("invalid number: " + s);
    return v;
}

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json fault_to_json(const FaultSpec& fault) {
    json j;
    j["kind"] = fault_kind_name(fault.kind);
    switch (fault.kind) {
        case FaultKind::None:
            break;
        case FaultKind::ReducedROM: {
            const auto& p = std::get<RomFaultParams>(fault.params);
            j["joint1_range"] = {p.joint1_lo, p.joint1_hi};
            break;
        }
        case FaultKind::IncreasedDamping:
            j["joint1_damping"] = std::get<DampingFaultParams>(fault.params).joint1_damping;
            break;
        case FaultKind::ActuatorDamage:
            j["gear"] = std::get<GearFaultParams>(fault.params).gear;
            break;
        case FaultKind::StructuralDamage:
            j["bend_angle"] = std::get<BendFaultParams>(fault.params).bend_angle;
            break;
    }
    return j;
}

FaultSpec fault_from_json(const json& j) {
    const FaultKind kind = fault_kind_from_name(j.at("kind").get<std::string>());
    switch (kind) {
        case FaultKind::None:
            check_keys(j, {"kind"}, "run.fault");
            return FaultSpec::none();
        case FaultKind::ReducedROM: {
            check_keys(j, {"kind", "joint1_range"}, "run.fault");
            FaultSpec f = FaultSpec::reduced_rom();
            if (j.contains("joint1_range")) {
                const auto r = j.at("joint1_range").get<std::vector<double>>();
                if (r.size() != 2) throw std::invalid_argument("joint1_range must have 2 entries");
                f = FaultSpec::reduced_rom(r[0], r[1]);
            }
            return f;
        }
        case FaultKind::IncreasedDamping: {
            check_keys(j, {"kind", "joint1_damping"}, "run.fault");
            double d = 5.0;
            maybe(j, "joint1_damping", d);
            return FaultSpec::increased_damping(d);
        }
        case FaultKind::ActuatorDamage: {
            check_keys(j, {"kind", "gear"}, "run.fault");
            double g = 100.0;
            maybe(j, "gear", g);
            return FaultSpec::actuator_damage(g);
        }
        case FaultKind::StructuralDamage: {
            check_keys(j, {"kind", "bend_angle"}, "run.fault");
            double b = M_PI / 4.0;
            maybe(j, "bend_angle", b);
            return FaultSpec::structural_damage(b);
        }
    }
    throw std::invalid_argument("unreachable fault kind");
}

json arm_to_json(const ArmConfig& a) {
    json j;
    j["link_lengths"] = {a.link_lengths[0], a.link_lengths[1]};
    j["joint_ranges"] = {{a.joint_ranges[0].first, a.joint_ranges[0].second},
                         {a.joint_ranges[1].first, a.joint_ranges[1].second}};
    j["damping"] = {a.damping[0], a.damping[1]};
    j["gears"] = {a.gears[0], a.gears[1]};
    j["bend_angle"] = a.bend_angle;
    j["inertia"] = {a.inertia[0], a.inertia[1]};
    j["dt"] = a.dt;
    j["horizon"] = a.horizon;
    j["torque_limit"] = a.torque_limit;
    j["omega_max"] = a.omega_max;
    j["target_radius_range"] = {a.target_radius_range.first, a.target_radius_range.second};
    j["ctrl_cost_weight"] = a.ctrl_cost_weight;
    j["sparse_reward_scale"] = a.sparse_reward_scale;
    return j;
}

ArmConfig arm_from_json(const json& j) {
    check_keys(j, {"link_lengths", "joint_ranges", "damping", "gears", "bend_angle", "inertia",
                   "dt", "horizon", "torque_limit", "omega_max", "target_radius_range",
                   "ctrl_cost_weight", "sparse_reward_scale"}, "arm");
    ArmConfig a;
    if (j.contains("link_lengths")) {
        const auto v = j.at("link_lengths").get<std::vector<double>>();
        a.link_lengths = {v.at(0), v.at(1)};
    }
    if (j.contains("joint_ranges")) {
        const auto v = j.at("joint_ranges").get<std::vector<std::vector<double>>>();
        a.joint_ranges = {{{v.at(0).at(0), v.at(0).at(1)}, {v.at(1).at(0), v.at(1).at(1)}}};
    }
    if (j.contains("damping")) {
        const auto v = j.at("damping").get<std::vector<double>>();
        a.damping = {v.at(0), v.at(1)};
    }
    if (j.contains("gears")) {
        const auto v = j.at("gears").get<std::vector<double>>();
        a.gears = {v.at(0), v.at(1)};
    }
    maybe(j, "bend_angle", a.bend_angle);
    if (j.contains("inertia")) {
        const auto v = j.at("inertia").get<std::vector<double>>();
        a.inertia = {v.at(0), v.at(1)};
    }
    maybe(j, "dt", a.dt);
    maybe(j, "horizon", a.horizon);
    maybe(j, "torque_limit", a.torque_limit);
    maybe(j, "omega_max", a.omega_max);
    if (j.contains("target_radius_range")) {
        const auto v = j.at("target_radius_range").get<std::vector<double>>();
        a.target_radius_range = {v.at(0), v.at(1)};
    }
    maybe(j, "ctrl_cost_weight", a.ctrl_cost_weight);
    maybe(j, "sparse_reward_scale", a.sparse_reward_scale);
    return a;
}

json cflownets_to_json(const CFlowNetsConfig& c) {
    json j;
    j["M"] = c.M;
    j["K"] = c.K;
    j["lambda"] = c.lambda;
    j["epsilon"] = c.epsilon;
    j["batch_size"] = c.batch_size;
    j["replay_capacity"] = c.replay_capacity;
    j["lr"] = c.lr;
    j["retrieval_hidden"] = c.retrieval_hidden;
    j["flow_hidden"] = c.flow_hidden;
    j["updates_per_episode"] = c.updates_per_episode;
    j["pretrain_transitions"] = c.pretrain_transitions;
    j["pretrain_epochs"] = c.pretrain_epochs;
    j["fine_tune_steps"] = c.fine_tune_steps;
    return j;
}

CFlowNetsConfig cflownets_from_json(const json& j) {
    check_keys(j, {"M", "K", "lambda", "epsilon", "batch_size", "replay_capacity", "lr",
                   "retrieval_hidden", "flow_hidden", "updates_per_episode",
                   "pretrain_transitions", "pretrain_epochs", "fine_tune_steps"}, "cflownets");
    CFlowNetsConfig c;
    maybe(j, "M", c.M);
    maybe(j, "K", c.K);
    maybe(j, "lambda", c.lambda);
    maybe(j, "epsilon", c.epsilon);
    maybe(j, "batch_size", c.batch_size);
    maybe(j, "replay_capacity", c.replay_capacity);
    maybe(j, "lr", c.lr);
    maybe(j, "retrieval_hidden", c.retrieval_hidden);
    maybe(j, "flow_hidden", c.flow_hidden);
    maybe(j, "updates_per_episode", c.updates_per_episode);
    maybe(j, "pretrain_transitions", c.pretrain_transitions);
    maybe(j, "pretrain_epochs", c.pretrain_epochs);
    maybe(j, "fine_tune_steps", c.fine_tune_steps);
    return c;
}

json baseline_to_json(const BaselineConfig& b) {
    json j;
    j["gamma"] = b.gamma;
    j["tau"] = b.tau;
    j["policy_noise"] = b.policy_noise;
    j["noise_clip"] = b.noise_clip;
    j["exploration_sigma"] = b.exploration_sigma;
    j["policy_delay"] = b.policy_delay;
    j["batch_size"] = b.batch_size;
    j["lr_actor"] = b.lr_actor;
    j["lr_critic"] = b.lr_critic;
    j["replay_capacity"] = b.replay_capacity;
    j["start_steps"] = b.start_steps;
    j["hidden"] = b.hidden;
    return j;
}

BaselineConfig baseline_from_json(const json& j) {
    check_keys(j, {"gamma", "tau", "policy_noise", "noise_clip", "exploration_sigma",
                   "policy_delay", "batch_size", "lr_actor", "lr_critic", "replay_capacity",
                   "start_steps", "hidden"}, "baseline");
    BaselineConfig b;
    maybe(j, "gamma", b.gamma);
    maybe(j, "tau", b.tau);
    maybe(j, "policy_noise", b.policy_noise);
    maybe(j, "noise_clip", b.noise_clip);
    maybe(j, "exploration_sigma", b.exploration_sigma);
    maybe(j, "policy_delay", b.policy_delay);
    maybe(j, "batch_size", b.batch_size);
    maybe(j, "lr_actor", b.lr_actor);
    maybe(j, "lr_critic", b.lr_critic);
    maybe(j, "replay_capacity", b.replay_capacity);
    maybe(j, "start_steps", b.start_steps);
    maybe(j, "hidden", b.hidden);
    return b;
}

} // namespace

json manifest_to_json(const RunManifest& m) {
    json run;
    run["algorithm"] = algorithm_name(m.algorithm);
    run["stage"] = stage_name(m.stage);
    run["fault"] = fault_to_json(m.fault);
    run["seed"] = m.seed;
    run["timestep_budget"] = m.timestep_budget;
    run["eval_freq"] = m.eval_freq;
    run["eval_episodes"] = m.eval_episodes;
    run["transfer_mode"] = transfer_mode_name(m.transfer_mode);
    run["save_buffer"] = m.save_buffer;

    json j;
    j["run"] = run;
    j["arm"] = arm_to_json(m.arm);
    j["cflownets"] = cflownets_to_json(m.cflownets);
    j["baseline"] = baseline_to_json(m.baseline);
    return j;
}

RunManifest manifest_from_json(const json& j) {
    check_keys(j, {"run", "arm", "cflownets", "baseline"}, "config");
    RunManifest m;
    if (j.contains("run")) {
        const json& run = j.at("run");
        check_keys(run, {"algorithm", "stage", "fault", "seed", "timestep_budget", "eval_freq",
                         "eval_episodes", "transfer_mode", "save_buffer"}, "run");
        if (run.contains("algorithm")) m.algorithm = algorithm_from_name(run.at("algorithm"));
        if (run.contains("stage")) m.stage = stage_from_name(run.at("stage"));
        if (run.contains("fault")) m.fault = fault_from_json(run.at("fault"));
        maybe(run, "seed", m.seed);
        maybe(run, "timestep_budget", m.timestep_budget);
        maybe(run, "eval_freq", m.eval_freq);
        maybe(run, "eval_episodes", m.eval_episodes);
        if (run.contains("transfer_mode"))
            m.transfer_mode = transfer_mode_from_name(run.at("transfer_mode"));
        maybe(run, "save_buffer", m.save_buffer);
    }
    if (j.contains("arm")) m.arm = arm_from_json(j.at("arm"));
    if (j.contains("cflownets")) m.cflownets = cflownets_from_json(j.at("cflownets"));
    if (j.contains("baseline")) m.baseline = baseline_from_json(j.at("baseline"));
    return m;
}

std::string canonical_config(const RunManifest& manifest) {
    return manifest_to_json(manifest).dump(2) + "\n";
}

RunManifest load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    json j;
    in >> j;
    return manifest_from_json(j);
}

std::string eval_log_to_csv(const std::vector<EvalRecord>& evals) {
    std::ostringstream out;
    const std::size_t n_episodes = evals.empty() ? 0 : evals.front().episode_returns.size();
    out << "timestep,mean_return";
    for (std::size_t i = 0; i < n_episodes; ++i) out << ",ep_return_" << i;
    out << "\n";
    long last_ts = -1;
    for (const auto& e : evals) {
        if (e.timestep <= last_ts)
            throw std::invalid_argument("eval_log_to_csv: timesteps must be strictly increasing");
        if (e.episode_returns.size() != n_episodes)
            throw std::invalid_argument("eval_log_to_csv: inconsistent column count");
        last_ts = e.timestep;
        out << e.timestep << "," << format_double(e.mean_return);
        for (double r : e.episode_returns) out << "," << format_double(r);
        out << "\n";
    }
    return out.str();
}

std::vector<EvalRecord> eval_log_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("eval_log_from_csv: missing header");
    std::vector<EvalRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        EvalRecord e;
        if (!std::getline(ls, cell, ',')) break;
        e.timestep = std::stol(cell);
        if (!std::getline(ls, cell, ','))
            throw std::invalid_argument("eval_log_from_csv: missing mean_return");
        e.mean_return = parse_double(cell);
        while (std::getline(ls, cell, ',')) e.episode_returns.push_back(parse_double(cell));
        out.push_back(std::move(e));
    }
    return out;
}

void write_eval_log(const std::filesystem::path& path, const std::vector<EvalRecord>& evals) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write eval log: " + path.string());
    out << eval_log_to_csv(evals);
}

std::vector<EvalRecord> read_eval_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read eval log: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return eval_log_from_csv(ss.str());
}

// --- checkpoint binary ------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'L', 'O', 'W', 'A', 'R', 'M', '1'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const auto n = get<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

void put_vector(std::ostream& out, const Eigen::VectorXd& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(sizeof(double) * v.size()));
}

void get_vector(std::istream& in, Eigen::VectorXd& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
    if (!in) throw std::runtime_error("checkpoint: truncated array");
}

void put_mlp(std::ostream& out, const Mlp& net) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const Layer& l : net.layers) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(l.w.rows()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(l.w.cols()));
        out.write(reinterpret_cast<const char*>(l.w.data()),
                  static_cast<std::streamsize>(sizeof(double) * l.w.size()));
        put_vector(out, l.b);
    }
    put<std::uint8_t>(out, net.output_activation == OutputActivation::Softplus ? 1 : 0);
}

Mlp get_mlp(std::istream& in) {
    Mlp net;
    const auto n_layers = get<std::uint32_t>(in);
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        Layer layer;
        const auto rows = get<std::uint32_t>(in);
        const auto cols = get<std::uint32_t>(in);
        layer.w.resize(rows, cols);
        in.read(reinterpret_cast<char*>(layer.w.data()),
                static_cast<std::streamsize>(sizeof(double) * layer.w.size()));
        layer.b.resize(rows);
        get_vector(in, layer.b);
        if (!in) throw std::runtime_error("checkpoint: truncated layer");
        net.layers.push_back(std::move(layer));
    }
    net.output_activation = get<std::uint8_t>(in) ? OutputActivation::Softplus
                                                  : OutputActivation::Identity;
    return net;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put_string(out, canonical_config(c.manifest));
    put_string(out, algorithm_name(c.algorithm));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.networks.size()));
    for (const auto& [name, net] : c.networks) {
        put_string(out, name);
        put_mlp(out, net);
    }
    put<std::uint8_t>(out, c.buffer.has_value() ? 1 : 0);
    if (c.buffer) {
        put<std::uint64_t>(out, c.buffer->capacity);
        put<std::uint64_t>(out, c.buffer->cursor);
        put<std::uint64_t>(out, c.buffer->transitions.size());
        if (!c.buffer->transitions.empty()) {
            const auto& t0 = c.buffer->transitions.front();
            put<std::uint32_t>(out, static_cast<std::uint32_t>(t0.obs.size()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(t0.action.size()));
            for (const Transition& t : c.buffer->transitions) {
                put_vector(out, t.obs);
                put_vector(out, t.action);
                put<double>(out, t.reward);
                put_vector(out, t.next_obs);
                put<std::uint8_t>(out, t.done ? 1 : 0);
            }
        }
    }
    put<double>(out, c.train_seconds);
    put<double>(out, c.pretrain_seconds);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());
    Checkpoint c;
    c.manifest = manifest_from_json(json::parse(get_string(in)));
    c.algorithm = algorithm_from_name(get_string(in));
    const auto n_networks = get<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_networks; ++i) {
        std::string name = get_string(in);
        c.networks.emplace_back(std::move(name), get_mlp(in));
    }
    if (get<std::uint8_t>(in)) {
        BufferSnapshot b;
        b.capacity = get<std::uint64_t>(in);
        b.cursor = get<std::uint64_t>(in);
        const auto n = get<std::uint64_t>(in);
        if (n > 0) {
            const auto obs_dim = get<std::uint32_t>(in);
            const auto act_dim = get<std::uint32_t>(in);
            b.transitions.reserve(n);
            for (std::uint64_t i = 0; i < n; ++i) {
                Transition t;
                t.obs.resize(obs_dim);
                get_vector(in, t.obs);
                t.action.resize(act_dim);
                get_vector(in, t.action);
                t.reward = get<double>(in);
                t.next_obs.resize(obs_dim);
                get_vector(in, t.next_obs);
                t.done = get<std::uint8_t>(in) != 0;
                b.transitions.push_back(std::move(t));
            }
        }
        c.buffer = std::move(b);
    }
    c.train_seconds = get<double>(in);
    c.pretrain_seconds = get<double>(in);
    return c;
}

// --- SVG --------------------------------------------------------------------

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

} // namespace

std::string render_learning_curves_svg(const std::vector<PlotSeries>& series) {
    if (series.empty()) throw std::invalid_argument("render_learning_curves_svg: no series");
    const double width = 800, height = 500;
    const double ml = 70, mr = 20, mt = 30, mb = 50;
    double x_max = 1, y_min = 0, y_max = 0;
    bool first = true;
    for (const auto& s : series) {
        if (s.points.empty()) throw std::invalid_argument("render_learning_curves_svg: empty series");
        for (const auto& p : s.points) {
            x_max = std::max(x_max, static_cast<double>(p.timestep));
            const double lo = p.mean - p.ci_half_width, hi = p.mean + p.ci_half_width;
            if (first) { y_min = lo; y_max = hi; first = false; }
            y_min = std::min(y_min, lo);
            y_max = std::max(y_max, hi);
        }
        if (s.asymptote) {
            y_min = std::min(y_min, *s.asymptote);
            y_max = std::max(y_max, *s.asymptote);
        }
    }
    if (y_max <= y_min) y_max = y_min + 1.0;
    const double pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    const auto sx = [&](double ts) { return ml + (width - ml - mr) * ts / x_max; };
    const auto sy = [&](double v) {
        return mt + (height - mt - mb) * (y_max - v) / (y_max - y_min);
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    // axes
    svg << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(height - mb) << "\" x2=\""
        << fmt2(width - mr) << "\" y2=\"" << fmt2(height - mb)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(mt) << "\" x2=\"" << fmt2(ml)
        << "\" y2=\"" << fmt2(height - mb) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << fmt2((ml + width - mr) / 2) << "\" y=\"" << fmt2(height - 12)
        << "\" text-anchor=\"middle\" font-size=\"14\">timesteps</text>\n";
    svg << "<text x=\"18\" y=\"" << fmt2((mt + height - mb) / 2)
        << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
        << fmt2((mt + height - mb) / 2) << ")\">average return</text>\n";
    // axis ticks
    for (int i = 0; i <= 4; ++i) {
        const double ts = x_max * i / 4.0;
        svg << "<text x=\"" << fmt2(sx(ts)) << "\" y=\"" << fmt2(height - mb + 18)
            << "\" text-anchor=\"middle\" font-size=\"11\">" << static_cast<long>(ts)
            << "</text>\n";
        const double v = y_min + (y_max - y_min) * i / 4.0;
        svg << "<text x=\"" << fmt2(ml - 6) << "\" y=\"" << fmt2(sy(v) + 4)
            << "\" text-anchor=\"end\" font-size=\"11\">" << fmt2(v) << "</text>\n";
    }

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        bool has_band = false;
        for (const auto& p : s.points)
            if (p.ci_half_width > 0.0) has_band = true;
        if (has_band) {
            svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
            for (const auto& p : s.points)
                svg << fmt2(sx(p.timestep)) << "," << fmt2(sy(p.mean + p.ci_half_width)) << " ";
            for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
                svg << fmt2(sx(it->timestep)) << "," << fmt2(sy(it->mean - it->ci_half_width)) << " ";
            svg << "\"/>\n";
        }
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : s.points)
            svg << fmt2(sx(p.timestep)) << "," << fmt2(sy(p.mean)) << " ";
        svg << "\"/>\n";
        if (s.asymptote) {
            svg << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(sy(*s.asymptote)) << "\" x2=\""
                << fmt2(width - mr) << "\" y2=\"" << fmt2(sy(*s.asymptote)) << "\" stroke=\""
                << color << "\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>\n";
        }
        svg << "<text x=\"" << fmt2(width - mr - 8) << "\" y=\"" << fmt2(mt + 16 + 16.0 * si)
            << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">" << s.label
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

json run_summary_json(const StageResult& result) {
    json j;
    const RunManifest& m = result.checkpoint.manifest;
    j["algorithm"] = algorithm_name(result.checkpoint.algorithm);
    j["stage"] = stage_name(m.stage);
    j["fault"] = fault_kind_name(m.fault.kind);
    j["transfer_mode"] = transfer_mode_name(m.transfer_mode);
    j["seed"] = m.seed;
    j["timestep_budget"] = m.timestep_budget;
    j["train_seconds"] = result.checkpoint.train_seconds;
    j["pretrain_seconds"] = result.checkpoint.pretrain_seconds;
    if (!result.evals.empty()) {
        j["final_eval_mean_return"] = result.evals.back().mean_return;
        const int window = std::min<int>(20, static_cast<int>(result.evals.size()));
        if (window >= 2) {
            const auto rep = detect_asymptote(result.evals, window,
                                              default_variance_threshold(result.evals));
            j["asymptote"] = {{"converged", rep.converged},
                              {"convergence_timestep", rep.convergence_timestep},
                              {"asymptotic_value", rep.asymptotic_value},
                              {"window_size", rep.window_size},
                              {"variance_threshold", rep.variance_threshold}};
        }
    }
    return j;
}

} // namespace flowarm::io

#include "kaelspi/experiment.hpp"

#include "json_io.hpp"
#include "kaelspi/io.hpp"
#include "kaelspi/klspi.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace kaelspi {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::lspi: return "lspi";
        case Algorithm::klspi: return "klspi";
        case Algorithm::kae_lspi: return "kae-lspi";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "lspi") return Algorithm::lspi;
    if (s == "klspi") return Algorithm::klspi;
    if (s == "kae-lspi") return Algorithm::kae_lspi;
    throw ConfigError("unknown algorithm '" + s + "' (expected lspi, klspi or kae-lspi)");
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// --- config -----------------------------------------------------------------

namespace {

bool is_chain(const std::string& env) { return env == "chain20" || env == "chain50"; }

std::string scaling_name(KernelScaling s) { return s == KernelScaling::raw ? "raw" : "rescaled"; }

KernelScaling parse_scaling(const std::string& s) {
    if (s == "raw") return KernelScaling::raw;
    if (s == "rescaled") return KernelScaling::rescaled;
    throw ConfigError("klspi.scaling must be raw or rescaled, got '" + s + "'");
}

KaeHyperparams kae_preset(const std::string& env) {
    if (env == "chain50") return KaeHyperparams::chain50();
    if (env == "pendulum") return KaeHyperparams::pendulum();
    return KaeHyperparams::chain20();
}

Json config_json(const ExperimentConfig& c, bool include_runtime) {
    Json j;
    j["environment"] = c.environment;
    j["algorithm"] = to_string(c.algorithm);
    j["dictionary"] = {{"type", c.dictionary.type}, {"degree", c.dictionary.degree}, {"model", c.dictionary.model_path}};
    j["gamma"] = c.gamma ? Json(*c.gamma) : Json(nullptr);
    j["max_iterations"] = c.max_iterations;
    j["seeds"] = c.seeds;
    j["episodes"] = c.episodes;
    j["max_steps"] = c.max_steps;
    j["episode_grid"] = c.episode_grid;
    j["scale"] = c.scale;
    j["runs"] = c.runs;
    j["test_rollouts"] = c.test_rollouts;
    j["test_cap"] = c.test_cap;
    j["kae"] = c.kae ? Json(*c.kae) : Json(nullptr);
    j["latent_dim"] = c.latent_dim ? Json(*c.latent_dim) : Json(nullptr);
    j["initial_policy"] = c.initial_policy;
    j["klspi"] = {{"scaling", scaling_name(c.klspi.scaling)},
                  {"grow", c.klspi.grow},
                  {"exploration", c.klspi.exploration},
                  {"sigma", c.klspi.sigma},
                  {"mu", c.klspi.mu}};
    if (include_runtime) {
        j["out"] = c.out;
        j["jobs"] = c.jobs;
    }
    return j;
}

template <typename T>
void take(const Json& j, const char* key, T& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    static const std::vector<std::string> known{
        "environment", "algorithm", "dictionary", "gamma",   "max_iterations", "seeds",          "episodes",
        "max_steps",   "episode_grid", "scale",   "runs",    "test_rollouts",  "test_cap",       "kae",
        "latent_dim",  "initial_policy", "klspi", "out",     "jobs"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    ExperimentConfig c;
    try {
        take(j, "environment", c.environment);
        if (j.contains("algorithm")) c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
        if (j.contains("dictionary")) {
            const Json& d = j.at("dictionary");
            take(d, "type", c.dictionary.type);
            take(d, "degree", c.dictionary.degree);
            take(d, "model", c.dictionary.model_path);
        }
        if (j.contains("gamma") && !j.at("gamma").is_null()) c.gamma = j.at("gamma").get<double>();
        take(j, "max_iterations", c.max_iterations);
        take(j, "seeds", c.seeds);
        take(j, "episodes", c.episodes);
        take(j, "max_steps", c.max_steps);
        take(j, "episode_grid", c.episode_grid);
        take(j, "scale", c.scale);
        take(j, "runs", c.runs);
        take(j, "test_rollouts", c.test_rollouts);
        take(j, "test_cap", c.test_cap);
        if (j.contains("kae") && !j.at("kae").is_null()) {
            KaeHyperparams h = kae_preset(c.environment);
            from_json(j.at("kae"), h);
            c.kae = h;
        }
        if (j.contains("latent_dim") && !j.at("latent_dim").is_null()) c.latent_dim = j.at("latent_dim").get<int>();
        take(j, "initial_policy", c.initial_policy);
        if (j.contains("klspi")) {
            const Json& k = j.at("klspi");
            if (k.contains("scaling")) c.klspi.scaling = parse_scaling(k.at("scaling").get<std::string>());
            take(k, "grow", c.klspi.grow);
            take(k, "exploration", c.klspi.exploration);
            take(k, "sigma", c.klspi.sigma);
            take(k, "mu", c.klspi.mu);
        }
        take(j, "out", c.out);
        take(j, "jobs", c.jobs);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return config_from_json_text(text);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string config_to_json_text(const ExperimentConfig& config, bool include_runtime) {
    return config_json(config, include_runtime).dump(2);
}

void ExperimentConfig::validate() const {
    if (environment != "chain20" && environment != "chain50" && environment != "pendulum") {
        throw ConfigError("environment must be chain20, chain50 or pendulum, got '" + environment + "'");
    }
    if (environment == "pendulum" && algorithm == Algorithm::klspi) {
        throw ConfigError("klspi is not supported on the pendulum");
    }
    const std::string& t = dictionary.type;
    if (t != "auto" && t != "poly" && t != "rbf" && t != "tabular" && t != "kae" && t != "kernel") {
        throw ConfigError("dictionary.type must be auto, poly, rbf, tabular, kernel or kae");
    }
    if ((algorithm == Algorithm::klspi) != (t == "kernel") && t != "auto") {
        throw ConfigError("the kernel dictionary goes with klspi and only with it");
    }
    if (algorithm == Algorithm::kae_lspi && t != "auto" && t != "kae") {
        throw ConfigError("kae-lspi requires the kae dictionary");
    }
    if (algorithm == Algorithm::lspi && t == "kae") {
        throw ConfigError("use algorithm kae-lspi for the kae dictionary");
    }
    if (environment == "pendulum" && (t == "poly" || t == "tabular")) {
        throw ConfigError("dictionary '" + t + "' is only defined for chains");
    }
    if (environment == "chain20" && t == "rbf") {
        throw ConfigError("the rbf dictionary is defined for chain50 and pendulum only");
    }
    if (dictionary.degree < 0) throw ConfigError("dictionary.degree must be >= 0");
    if (gamma && !(*gamma > 0.0 && *gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (episodes < 1) throw ConfigError("episodes must be >= 1");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (environment == "pendulum") {
        if (episode_grid.empty()) throw ConfigError("episode_grid must be non-empty");
        for (int e : episode_grid) {
            if (e < 1) throw ConfigError("episode counts must be >= 1 (got " + std::to_string(e) + ")");
        }
    }
    if (scale != "desk" && scale != "full") throw ConfigError("scale must be desk or full");
    if (runs < 0 || test_rollouts < 0 || test_cap < 1) throw ConfigError("runs/test_rollouts/test_cap out of range");
    if (latent_dim && *latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (initial_policy != "auto" && initial_policy != "lowest" && initial_policy != "behavior") {
        throw ConfigError("initial_policy must be auto, lowest or behavior");
    }
    if (!(klspi.exploration >= 0.0 && klspi.exploration <= 1.0)) throw ConfigError("klspi.exploration in [0, 1]");
    if (!(klspi.sigma > 0.0) || !(klspi.mu >= 0.0)) throw ConfigError("klspi.sigma > 0 and klspi.mu >= 0");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    try {
        resolved_kae().validate();
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig ExperimentConfig::resolved() const {
    validate();
    ExperimentConfig c = *this;
    if (c.dictionary.type == "auto") {
        if (c.algorithm == Algorithm::kae_lspi) {
            c.dictionary.type = "kae";
        } else if (c.algorithm == Algorithm::klspi) {
            c.dictionary.type = "kernel";
        } else {
            c.dictionary.type = c.environment == "chain20" ? "poly" : "rbf";
        }
    }
    c.gamma = resolved_gamma();
    if (c.runs == 0) c.runs = c.scale == "full" ? 15 : 5;
    if (c.test_rollouts == 0) c.test_rollouts = c.scale == "full" ? 200 : 50;
    if (c.algorithm == Algorithm::kae_lspi) {
        c.kae = resolved_kae();
        c.latent_dim.reset();
    }
    c.initial_policy = resolved_initial() == InitialPolicy::lowest_action ? "lowest" : "behavior";
    return c;
}

double ExperimentConfig::resolved_gamma() const {
    if (gamma) return *gamma;
    return environment == "pendulum" ? PendulumSpec{}.gamma : ChainSpec::chain20().gamma;
}

KaeHyperparams ExperimentConfig::resolved_kae() const {
    KaeHyperparams h = kae ? *kae : kae_preset(environment);
    if (latent_dim) h.latent_dim = *latent_dim;
    return h;
}

InitialPolicy ExperimentConfig::resolved_initial() const {
    if (initial_policy == "lowest") return InitialPolicy::lowest_action;
    if (initial_policy == "behavior") return InitialPolicy::behavior;
    return algorithm == Algorithm::lspi ? InitialPolicy::lowest_action : InitialPolicy::behavior;
}

std::string ExperimentConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_json(resolved(), false).dump())));
    return buf;
}

// --- runs -------------------------------------------------------------------

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(workers, n); ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        const std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

DictionaryPtr make_fixed_dictionary(const ExperimentConfig& config, const Environment& env) {
    const ExperimentConfig c = config.resolved();
    const std::string& t = c.dictionary.type;
    if (t == "poly") return std::make_shared<PolyDictionary>(c.dictionary.degree, env.actions());
    if (t == "tabular") return std::make_shared<TabularDictionary>(env.states(), env.actions());
    if (t == "rbf") {
        return std::make_shared<RbfDictionary>(c.environment == "pendulum" ? RbfGrid::pendulum() : RbfGrid::chain50(),
                                               env.actions());
    }
    if (t == "kae" && !c.dictionary.model_path.empty()) {
        return export_dictionary(std::make_shared<KaeModel>(load_model(c.dictionary.model_path)));
    }
    throw ConfigError("dictionary '" + t + "' is not a fixed dictionary");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct KaeFit {
    DictionaryPtr dict;
    std::vector<LossReport> history;
    std::shared_ptr<const KaeModel> model;
};

KaeFit fit_kae(const ExperimentConfig& c, const Dataset& data, const Environment& env, std::uint64_t seed) {
    KaeFit fit;
    if (!c.dictionary.model_path.empty()) {
        fit.model = std::make_shared<KaeModel>(load_model(c.dictionary.model_path));
    } else {
        KaeHyperparams h = c.resolved_kae();
        h.seed = seed;
        TrainResult tr = train(data, env, h);
        fit.history = std::move(tr.history);
        fit.model = std::make_shared<KaeModel>(std::move(tr.model));
    }
    fit.dict = export_dictionary(fit.model);
    return fit;
}

void score_against_oracle(RunResult& r) {
    for (const IterationRecord& it : r.trace.iterations) {
        const double agree = policy_agreement(it.policy, r.optimal);
        r.agreement.push_back(agree);
        if (r.first_optimal < 0 && it.policy == r.optimal) r.first_optimal = it.iteration;
        if (r.first_agree90 < 0 && agree >= 0.9) r.first_agree90 = it.iteration;
    }
    if (!r.trace.iterations.empty()) r.dictionary_size = r.trace.iterations.back().dictionary_size;
}

}  // namespace

RunResult run_chain(const ExperimentConfig& config, std::uint64_t seed) {
    const ExperimentConfig c = config.resolved();
    if (!is_chain(c.environment)) throw ConfigError("run_chain: environment must be a chain");
    const auto t0 = Clock::now();
    ChainSpec spec = c.environment == "chain20" ? ChainSpec::chain20() : ChainSpec::chain50();
    spec.gamma = *c.gamma;
    const ChainEnv env(spec);

    RunResult r;
    r.environment = c.environment;
    r.algorithm = c.algorithm;
    r.seed = seed;
    r.episodes = c.episodes;
    r.states = env.states();
    r.optimal = value_iteration(TabularMdp::from_chain(spec)).policy;

    const Rng rng(seed);
    try {
        if (c.algorithm == Algorithm::klspi) {
            KlspiOptions o;
            o.gamma = *c.gamma;
            o.max_iterations = c.max_iterations;
            o.episodes = c.episodes;
            o.max_steps = c.max_steps;
            o.exploration = c.klspi.exploration;
            o.sigma = c.klspi.sigma;
            o.mu = c.klspi.mu;
            o.scaling = c.klspi.scaling;
            o.grow = c.klspi.grow;
            o.initial = c.resolved_initial();
            o.seed = seed;
            r.trace = klspi(env, o).trace;
            r.samples = static_cast<std::size_t>(c.episodes) * static_cast<std::size_t>(c.max_steps);
        } else {
            const Dataset data = collect_episodes(env, random_policy(env), rng.split(0), c.episodes, c.max_steps);
            r.samples = data.size();
            DictionaryPtr dict;
            if (c.algorithm == Algorithm::kae_lspi) {
                KaeFit fit = fit_kae(c, data, env, rng.split(2).seed());
                r.kae_history = std::move(fit.history);
                const Dataset held_out = collect_episodes(env, random_policy(env), rng.split(3), 100, c.max_steps);
                const PairMatrices pm = training_pairs(held_out, env);
                r.koopman_residual = koopman_residual_median(*fit.model, pm.x, pm.x_next);
                dict = fit.dict;
            } else {
                dict = make_fixed_dictionary(c, env);
            }
            LspiOptions o;
            o.gamma = *c.gamma;
            o.max_iterations = c.max_iterations;
            o.initial = c.resolved_initial();
            o.finite_states = r.states;
            r.trace = lspi(data, dict, o).trace;
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(c.environment + "/" + to_string(c.algorithm) + " seed " + std::to_string(seed) +
                                 ": " + e.what());
    }
    score_against_oracle(r);
    r.wall_seconds = seconds_since(t0);
    return r;
}

std::vector<RunResult> run_chain_all(const ExperimentConfig& config) {
    const ExperimentConfig c = config.resolved();
    std::vector<RunResult> out(c.seeds.size());
    parallel_for(c.seeds.size(), c.jobs, [&](std::size_t i) { out[i] = run_chain(c, c.seeds[i]); });
    return out;
}

RunResult run_pendulum_once(const ExperimentConfig& config, int episodes, int run) {
    const ExperimentConfig c = config.resolved();
    if (c.environment != "pendulum") throw ConfigError("run_pendulum: environment must be pendulum");
    if (episodes < 1) throw ConfigError("run_pendulum: episode count must be >= 1");
    const auto t0 = Clock::now();
    PendulumSpec spec;
    spec.gamma = *c.gamma;
    const PendulumEnv env(spec);

    RunResult r;
    r.environment = c.environment;
    r.algorithm = c.algorithm;
    r.run = run;
    r.episodes = episodes;
    const Rng run_rng = Rng(c.seeds.front()).split(static_cast<std::uint64_t>(run));
    r.seed = run_rng.seed();
    try {
        const Dataset data = collect_episodes(env, random_policy(env), run_rng.split(static_cast<std::uint64_t>(episodes)),
                                              episodes, c.max_steps);
        r.samples = data.size();
        DictionaryPtr dict;
        if (c.algorithm == Algorithm::kae_lspi) {
            KaeFit fit = fit_kae(c, data, env, run_rng.split(100000 + static_cast<std::uint64_t>(episodes)).seed());
            r.kae_history = std::move(fit.history);
            dict = fit.dict;
        } else {
            dict = make_fixed_dictionary(c, env);
        }
        LspiOptions o;
        o.gamma = *c.gamma;
        o.max_iterations = c.max_iterations;
        o.initial = c.resolved_initial();
        const LspiResult res = lspi(data, dict, o);
        r.trace = res.trace;
        r.dictionary_size = static_cast<std::size_t>(dict->size());
        r.balance = evaluate_policy_pendulum(spec, greedy_policy(res.q), run_rng.split(1u << 30), c.test_rollouts,
                                             c.test_cap);
    } catch (const std::exception& e) {
        throw std::runtime_error("pendulum/" + to_string(c.algorithm) + " episodes " + std::to_string(episodes) +
                                 " run " + std::to_string(run) + ": " + e.what());
    }
    r.wall_seconds = seconds_since(t0);
    return r;
}

std::vector<RunResult> run_pendulum(const ExperimentConfig& config) {
    const ExperimentConfig c = config.resolved();
    std::vector<std::pair<int, int>> tasks;
    for (int e : c.episode_grid) {
        for (int run = 0; run < c.runs; ++run) tasks.emplace_back(e, run);
    }
    std::vector<RunResult> out(tasks.size());
    parallel_for(tasks.size(), c.jobs, [&](std::size_t i) {
        out[i] = run_pendulum_once(c, tasks[i].first, tasks[i].second);
    });
    return out;
}

// --- emission ---------------------------------------------------------------

std::vector<MetricRow> RunResult::metrics() const {
    std::vector<MetricRow> m;
    const bool pendulum = environment == "pendulum";
    const long summary_step = pendulum ? episodes : 0;
    auto add = [&](long step, const std::string& name, double v) { m.push_back({seed, step, name, v}); };
    for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
        const IterationRecord& it = trace.iterations[i];
        if (pendulum) continue;
        add(it.iteration, "agreement", agreement.at(i));
        add(it.iteration, "optimal", it.policy == optimal ? 1.0 : 0.0);
        add(it.iteration, "dictionary_size", static_cast<double>(it.dictionary_size));
        add(it.iteration, "weight_norm", it.weight_norm);
        add(it.iteration, "weight_change", it.weight_change);
        add(it.iteration, "action_change_rate", it.action_change_rate);
        add(it.iteration, "degenerate", it.degenerate ? 1.0 : 0.0);
    }
    add(summary_step, "iterations", trace.iteration_count());
    add(summary_step, "converged", trace.converged ? 1.0 : 0.0);
    add(summary_step, "samples", static_cast<double>(samples));
    add(summary_step, "dictionary_size_final", static_cast<double>(dictionary_size));
    if (pendulum) {
        add(summary_step, "run", run);
        add(summary_step, "mean_steps", balance.mean_steps);
        if (!balance.steps.empty()) {
            add(summary_step, "min_steps", *std::min_element(balance.steps.begin(), balance.steps.end()));
            add(summary_step, "max_steps", *std::max_element(balance.steps.begin(), balance.steps.end()));
        }
    } else {
        add(summary_step, "first_optimal_iteration", first_optimal);
        add(summary_step, "first_agree90_iteration", first_agree90);
    }
    if (!kae_history.empty()) {
        add(summary_step, "kae_loss_first", kae_history.front().total);
        add(summary_step, "kae_loss_final", kae_history.back().total);
    }
    if (koopman_residual) add(summary_step, "koopman_residual_median", *koopman_residual);
    return m;
}

void emit(const ExperimentConfig& config, std::span<const RunResult> results, const std::filesystem::path& dir) {
    const ExperimentConfig c = config.resolved();
    const std::string hash = c.hash();
    std::error_code ec;
    std::filesystem::create_directories(dir / "plotdata", ec);
    if (ec) throw std::runtime_error("cannot create " + (dir / "plotdata").string() + ": " + ec.message());

    {
        CsvWriter csv(dir / "results.csv", {"config_hash", "seed", "step", "metric", "value"});
        for (const RunResult& r : results) {
            for (const MetricRow& m : r.metrics()) {
                csv.row({hash, std::to_string(m.seed), std::to_string(m.step), m.metric, format_double(m.value)});
            }
        }
    }
    {
        Json j = config_json(c, true);
        j["config_hash"] = hash;
        j["version"] = KAELSPI_VERSION;
        std::ofstream out(dir / "config.json");
        if (!out) throw std::runtime_error("cannot write " + (dir / "config.json").string());
        out << j.dump(2) << '\n';
    }
    {
        Json runs = Json::array();
        for (const RunResult& r : results) {
            runs.push_back({{"seed", r.seed}, {"run", r.run}, {"episodes", r.episodes}, {"wall_seconds", r.wall_seconds}});
        }
        std::ofstream out(dir / "run_meta.json");
        if (!out) throw std::runtime_error("cannot write " + (dir / "run_meta.json").string());
        out << Json{{"config_hash", hash}, {"version", KAELSPI_VERSION}, {"runs", runs}}.dump(2) << '\n';
    }

    const std::filesystem::path plot = dir / "plotdata";
    if (is_chain(c.environment)) {
        CsvWriter agree(plot / "agreement.csv", {"seed", "iteration", "agreement", "dictionary_size"});
        for (const RunResult& r : results) {
            const std::string s = std::to_string(r.seed);
            write_policy_trace(r.trace, r.states, &r.optimal, plot / ("policy_seed" + s + ".csv"));
            write_trace(r.trace, plot / ("trace_seed" + s + ".csv"));
            for (std::size_t i = 0; i < r.trace.iterations.size(); ++i) {
                agree.row({s, std::to_string(r.trace.iterations[i].iteration), format_double(r.agreement[i]),
                           std::to_string(r.trace.iterations[i].dictionary_size)});
            }
            if (!r.kae_history.empty()) {
                CsvWriter loss(plot / ("kae_loss_seed" + s + ".csv"), {"epoch", "rec", "pred", "dyn", "total"});
                for (std::size_t e = 0; e < r.kae_history.size(); ++e) {
                    const LossReport& l = r.kae_history[e];
                    loss.row({std::to_string(e + 1), format_double(l.rec), format_double(l.pred), format_double(l.dyn),
                              format_double(l.total)});
                }
            }
        }
    } else {
        CsvWriter runs(plot / "pendulum_runs.csv", {"episodes", "run", "seed", "mean_steps", "iterations"});
        CsvWriter rollouts(plot / "pendulum_rollouts.csv", {"episodes", "run", "trial", "steps"});
        std::map<int, std::vector<double>> by_count;
        for (const RunResult& r : results) {
            runs.row({std::to_string(r.episodes), std::to_string(r.run), std::to_string(r.seed),
                      format_double(r.balance.mean_steps), std::to_string(r.trace.iteration_count())});
            for (std::size_t t = 0; t < r.balance.steps.size(); ++t) {
                rollouts.row({std::to_string(r.episodes), std::to_string(r.run), std::to_string(t),
                              std::to_string(r.balance.steps[t])});
            }
            by_count[r.episodes].push_back(r.balance.mean_steps);
        }
        CsvWriter curve(plot / "pendulum_curve.csv", {"episodes", "runs", "mean", "min", "max"});
        for (const auto& [e, v] : by_count) {
            double sum = 0.0;
            for (double x : v) sum += x;
            curve.row({std::to_string(e), std::to_string(v.size()), format_double(sum / static_cast<double>(v.size())),
                       format_double(*std::min_element(v.begin(), v.end())),
                       format_double(*std::max_element(v.begin(), v.end()))});
        }
    }
}

}  // namespace kaelspi

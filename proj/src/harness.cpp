#include "edgescale/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "edgescale/util.hpp"

namespace edgescale {

const char* to_string(AgentKind kind) {
    switch (kind) {
        case AgentKind::Aif: return "aif";
        case AgentKind::Dqn: return "dqn";
        case AgentKind::Daci: return "daci";
        case AgentKind::Ask: return "ask";
    }
    return "?";
}

AgentKind agent_kind_from_string(const std::string& s) {
    if (s == "aif") return AgentKind::Aif;
    if (s == "dqn") return AgentKind::Dqn;
    if (s == "daci") return AgentKind::Daci;
    if (s == "ask") return AgentKind::Ask;
    throw std::invalid_argument("unknown agent kind: '" + s + "'");
}

namespace {

std::unique_ptr<Agent> build_agent(const ExperimentSpec& spec, const Workload& w,
                                   const DqnAgent* dqn_template,
                                   std::uint64_t seed) {
    switch (spec.agent) {
        case AgentKind::Aif:
            return std::make_unique<AifAgent>(w, spec.aif, seed);
        case AgentKind::Ask:
            return std::make_unique<AskAgent>(w, spec.ask, seed);
        case AgentKind::Daci:
            return std::make_unique<DaciAgent>(w, spec.daci, seed);
        case AgentKind::Dqn: {
            auto agent = std::make_unique<DqnAgent>(*dqn_template);
            agent->reseed(seed);
            return agent;
        }
    }
    throw std::domain_error("unknown agent kind");
}

RunRecord make_record(int run_id, const char* agent, int step,
                      const AgentTelemetry& t) {
    RunRecord r;
    r.run_id = run_id;
    r.agent = agent;
    r.step = step;
    r.phi_cv = t.phi_cv;
    r.phi_qr = t.phi_qr;
    r.phi_mean = t.phi_mean;
    r.cycle_ms = t.cycle_duration_ms;
    r.cv_quality = t.applied.cv.quality;
    r.cv_model = t.applied.cv.model_size.value_or(0);
    r.cv_cores = t.applied.cv.cores;
    r.qr_quality = t.applied.qr.quality;
    r.qr_cores = t.applied.qr.cores;
    return r;
}

}  // namespace

LgbnModel bootstrap_lgbn(const ExperimentSpec& spec, std::uint64_t seed) {
    Workload w = default_workload(spec.c_phy);
    Environment env(w, spec.env, default_initial_assignment(), derive_seed(seed, 1));
    TimeSeriesStore store(w);
    for (const auto& s : env.warmup().samples) store.record(s);
    Rng rng(derive_seed(seed, 2));
    for (int cycle = 0; cycle < spec.bootstrap_cycles; ++cycle) {
        AgentObservation obs = perceive(store, w, env.now());
        auto legal = legal_actions(obs, w);
        Assignment next =
            apply_joint_action(obs, legal[rng.uniform_index(legal.size())], w);
        for (const auto& s : env.step(next).samples) store.record(s);
    }
    return fit_lgbn(store);
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const AgentFactory& factory) {
    if (spec.iterations < 1) throw std::domain_error("iterations must be >= 1");
    if (spec.repetitions < 1) throw std::domain_error("repetitions must be >= 1");
    Workload w = default_workload(spec.c_phy);

    std::unique_ptr<DqnAgent> dqn_template;
    if (!factory && spec.agent == AgentKind::Dqn) {
        dqn_template = std::make_unique<DqnAgent>(w, spec.dqn,
                                                  derive_seed(spec.seed, 0xD0));
        if (!spec.dqn_checkpoint.empty()) {
            dqn_template->load_checkpoint(spec.dqn_checkpoint);
        } else if (spec.require_pretrained) {
            throw std::runtime_error(
                "dqn requires a pretrained checkpoint (--checkpoint) when "
                "--require-pretrained is set");
        } else {
            LgbnModel lgbn = bootstrap_lgbn(spec, derive_seed(spec.seed, 0xB0));
            pretrain(*dqn_template, lgbn, derive_seed(spec.seed, 0xBEEF));
        }
    }

    std::ofstream out;
    bool zero_ms = spec.mode == RunMode::Fast;
    if (!spec.out_path.empty()) {
        out.open(spec.out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for write: " + spec.out_path);
        out << records_csv_header() << '\n';
        out.flush();
    }

    ExperimentResult result;
    result.records.reserve(static_cast<std::size_t>(spec.iterations) *
                           static_cast<std::size_t>(spec.repetitions));

    for (int rep = 1; rep <= spec.repetitions; ++rep) {
        std::uint64_t run_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(rep));
        Environment env(w, spec.env, default_initial_assignment(),
                        derive_seed(run_seed, 1));
        TimeSeriesStore store(w);
        for (const auto& s : env.warmup().samples) store.record(s);
        std::unique_ptr<Agent> agent =
            factory ? factory(w, derive_seed(run_seed, 2))
                    : build_agent(spec, w, dqn_template.get(), derive_seed(run_seed, 2));

        auto cycle_start = std::chrono::steady_clock::now();
        for (int step = 1; step <= spec.iterations; ++step) {
            AgentTelemetry t = run_cycle(*agent, env, store);
            RunRecord r = make_record(rep, agent->name(), step, t);
            if (out.is_open()) {
                out << record_csv_line(r, zero_ms) << '\n';
                out.flush();
            }
            result.records.push_back(std::move(r));
            if (spec.mode == RunMode::Realtime) {
                cycle_start += std::chrono::seconds(5);
                std::this_thread::sleep_until(cycle_start);
            }
        }
    }
    // the final-10 aggregation needs runs of at least 10 steps
    if (spec.iterations >= 10) result.summary = summarize(result.records);
    return result;
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

double percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(v.size()))) - 1;
    idx = std::min(idx, v.size() - 1);
    return v[idx];
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int convergence_step(const std::vector<double>& phis, double final10_mean) {
    int n = static_cast<int>(phis.size());
    // first step from which every trailing-5 mean stays within 0.05
    for (int s = 1; s <= n; ++s) {
        bool stays = true;
        for (int t = s; t <= n; ++t) {
            int lo = std::max(0, t - 5);
            double sum = 0.0;
            for (int k = lo; k < t; ++k) sum += phis[static_cast<std::size_t>(k)];
            double trailing = sum / static_cast<double>(t - lo);
            if (std::abs(trailing - final10_mean) > 0.05) {
                stays = false;
                break;
            }
        }
        if (stays) return s;
    }
    return n;  // never settled within the run
}

}  // namespace

SummaryReport summarize(const std::vector<RunRecord>& records) {
    if (records.empty()) throw std::domain_error("no records to summarize");
    // group by agent, then by run id, preserving step order
    std::vector<std::string> agent_order;
    std::map<std::string, std::map<int, std::vector<const RunRecord*>>> by_agent;
    for (const auto& r : records) {
        if (!by_agent.count(r.agent)) agent_order.push_back(r.agent);
        by_agent[r.agent][r.run_id].push_back(&r);
    }

    SummaryReport report;
    for (const auto& name : agent_order) {
        AgentSummary s;
        s.agent = name;
        std::vector<double> final10_means;
        std::vector<double> convergence_steps;
        std::vector<double> durations;
        for (const auto& [run_id, rows] : by_agent[name]) {
            if (rows.size() < 10)
                throw std::domain_error(
                    "run " + std::to_string(run_id) + " of " + name + " has " +
                    std::to_string(rows.size()) + " steps; at least 10 required");
            std::vector<double> phis;
            phis.reserve(rows.size());
            for (const RunRecord* r : rows) {
                phis.push_back(r->phi_mean);
                durations.push_back(r->cycle_ms);
            }
            double final10 = 0.0;
            for (std::size_t k = phis.size() - 10; k < phis.size(); ++k)
                final10 += phis[k];
            final10 /= 10.0;
            final10_means.push_back(final10);
            convergence_steps.push_back(convergence_step(phis, final10));
        }
        s.runs = static_cast<int>(final10_means.size());
        s.final10_mean = mean_of(final10_means);
        s.final10_std = sample_std(final10_means);
        s.mean_cycle_ms = mean_of(durations);
        s.median_cycle_ms = median_of(durations);
        s.p99_cycle_ms = percentile(durations, 0.99);
        s.mean_convergence_step = mean_of(convergence_steps);
        report.agents.push_back(std::move(s));
    }
    return report;
}

std::string records_csv_header() {
    return "run_id,agent,step,phi_cv,phi_qr,phi_mean,cycle_ms,cv_quality,cv_model,"
           "cv_cores,qr_quality,qr_cores";
}

std::string record_csv_line(const RunRecord& r, bool zero_duration) {
    std::string line;
    line += std::to_string(r.run_id);
    line += ',';
    line += r.agent;
    line += ',';
    line += std::to_string(r.step);
    line += ',';
    line += format_double(r.phi_cv);
    line += ',';
    line += format_double(r.phi_qr);
    line += ',';
    line += format_double(r.phi_mean);
    line += ',';
    line += zero_duration ? "0" : format_double(r.cycle_ms);
    line += ',';
    line += std::to_string(r.cv_quality);
    line += ',';
    line += std::to_string(r.cv_model);
    line += ',';
    line += format_double(r.cv_cores);
    line += ',';
    line += std::to_string(r.qr_quality);
    line += ',';
    line += format_double(r.qr_cores);
    return line;
}

void write_records_csv(const std::string& path, const std::vector<RunRecord>& records,
                       bool zero_durations) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << records_csv_header() << '\n';
    for (const auto& r : records) out << record_csv_line(r, zero_durations) << '\n';
}

std::vector<RunRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
    if (trim(line) != records_csv_header())
        throw std::runtime_error("unexpected records header in " + path);
    std::vector<RunRecord> records;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (f.size() != 12) throw std::runtime_error("bad records row: " + line);
        RunRecord r;
        r.run_id = static_cast<int>(parse_long(f[0]));
        r.agent = f[1];
        r.step = static_cast<int>(parse_long(f[2]));
        r.phi_cv = parse_double(f[3]);
        r.phi_qr = parse_double(f[4]);
        r.phi_mean = parse_double(f[5]);
        r.cycle_ms = parse_double(f[6]);
        r.cv_quality = static_cast<int>(parse_long(f[7]));
        r.cv_model = static_cast<int>(parse_long(f[8]));
        r.cv_cores = parse_double(f[9]);
        r.qr_quality = static_cast<int>(parse_long(f[10]));
        r.qr_cores = parse_double(f[11]);
        records.push_back(std::move(r));
    }
    return records;
}

void print_summary_table(std::ostream& out, const SummaryReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-6s %5s %14s %10s %12s %12s %12s %8s",
                  "agent", "runs", "final10(mean)", "(std)", "mean ms", "median ms",
                  "p99 ms", "conv");
    out << buf << '\n';
    for (const auto& a : report.agents) {
        std::snprintf(buf, sizeof buf,
                      "%-6s %5d %14.4f %10.4f %12.3f %12.3f %12.3f %8.1f",
                      a.agent.c_str(), a.runs, a.final10_mean, a.final10_std,
                      a.mean_cycle_ms, a.median_cycle_ms, a.p99_cycle_ms,
                      a.mean_convergence_step);
        out << buf << '\n';
    }
}

void write_summary_csv(std::ostream& out, const SummaryReport& report) {
    out << "agent,runs,final10_mean,final10_std,mean_cycle_ms,median_cycle_ms,"
           "p99_cycle_ms,mean_convergence_step\n";
    for (const auto& a : report.agents) {
        out << a.agent << ',' << a.runs << ',' << format_double(a.final10_mean) << ','
            << format_double(a.final10_std) << ',' << format_double(a.mean_cycle_ms)
            << ',' << format_double(a.median_cycle_ms) << ','
            << format_double(a.p99_cycle_ms) << ','
            << format_double(a.mean_convergence_step) << '\n';
    }
}

void apply_config_kv(ExperimentSpec& spec, const std::string& key,
                     const std::string& value) {
    auto as_double = [&] { return parse_double(value); };
    auto as_int = [&] { return static_cast<int>(parse_long(value)); };

    if (key == "env.kappa_cv") spec.env.kappa_cv = as_double();
    else if (key == "env.kappa_qr") spec.env.kappa_qr = as_double();
    else if (key == "env.noise_sigma") spec.env.noise_sigma = as_double();
    else if (key == "env.c_phy") spec.c_phy = as_double();
    else if (key == "harness.iterations") spec.iterations = as_int();
    else if (key == "harness.repetitions") spec.repetitions = as_int();
    else if (key == "harness.seed") spec.seed = static_cast<std::uint64_t>(parse_long(value));
    else if (key == "harness.mode") {
        if (value == "fast") spec.mode = RunMode::Fast;
        else if (value == "realtime") spec.mode = RunMode::Realtime;
        else throw std::invalid_argument("harness.mode must be fast or realtime");
    }
    else if (key == "harness.out") spec.out_path = value;
    else if (key == "harness.bootstrap_cycles") spec.bootstrap_cycles = as_int();
    else if (key == "agent.aif.eta") spec.aif.eta = as_double();
    else if (key == "agent.aif.alpha0") spec.aif.alpha0 = as_double();
    else if (key == "agent.aif.novelty_weight") spec.aif.novelty_weight = as_double();
    else if (key == "agent.dqn.lr") spec.dqn.lr = as_double();
    else if (key == "agent.dqn.gamma") spec.dqn.gamma = as_double();
    else if (key == "agent.dqn.batch") spec.dqn.batch = as_int();
    else if (key == "agent.dqn.target_sync") spec.dqn.target_sync = as_int();
    else if (key == "agent.dqn.eps_start") spec.dqn.eps_start = as_double();
    else if (key == "agent.dqn.eps_final") spec.dqn.eps_final = as_double();
    else if (key == "agent.dqn.episodes") spec.dqn.episodes = as_int();
    else if (key == "agent.dqn.episode_steps") spec.dqn.episode_steps = as_int();
    else if (key == "agent.dqn.checkpoint") spec.dqn_checkpoint = value;
    else if (key == "agent.daci.lambda_eq") spec.daci.lambda_eq = as_double();
    else if (key == "agent.daci.lambda_util") spec.daci.lambda_util = as_double();
    else if (key == "agent.daci.lr") spec.daci.lr = as_double();
    else if (key == "agent.daci.batch") spec.daci.batch = as_int();
    else if (key == "agent.daci.replay") spec.daci.replay_capacity = static_cast<std::size_t>(parse_long(value));
    else if (key == "agent.daci.mc_samples") spec.daci.mc_samples = as_int();
    else if (key == "agent.daci.beta_epi") spec.daci.beta_epi = as_double();
    else if (key == "agent.daci.grad_clip") spec.daci.grad_clip = as_double();
    else if (key == "agent.ask.exploration_iterations") spec.ask.exploration_iterations = as_int();
    else if (key == "agent.ask.refit_every") spec.ask.refit_every = as_int();
    else throw std::invalid_argument("unknown config key: '" + key + "'");
}

void load_config_file(ExperimentSpec& spec, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        apply_config_kv(spec, trim(stripped.substr(0, eq)),
                        trim(stripped.substr(eq + 1)));
    }
}

namespace {

int cmd_run(ExperimentSpec spec) {
    if (spec.out_path.empty())
        spec.out_path = std::string("records_") + to_string(spec.agent) + ".csv";
    ExperimentResult result = run_experiment(spec);
    std::cout << "wrote " << result.records.size() << " records to "
              << spec.out_path << "\n";
    print_summary_table(std::cout, result.summary);
    return 0;
}

int cmd_pretrain(ExperimentSpec spec, const std::string& out_prefix) {
    Workload w = default_workload(spec.c_phy);
    LgbnModel lgbn = bootstrap_lgbn(spec, derive_seed(spec.seed, 0xB0));
    DqnAgent agent(w, spec.dqn, derive_seed(spec.seed, 0xD0));
    PretrainResult res = pretrain(agent, lgbn, derive_seed(spec.seed, 0xBEEF));
    agent.save_checkpoint(out_prefix);
    if (!res.episode_returns.empty()) {
        std::size_t tenth = std::max<std::size_t>(1, res.episode_returns.size() / 10);
        double first = 0.0, last = 0.0;
        for (std::size_t i = 0; i < tenth; ++i) {
            first += res.episode_returns[i];
            last += res.episode_returns[res.episode_returns.size() - 1 - i];
        }
        std::cout << "episodes: " << res.episode_returns.size()
                  << "  mean return first 10%: " << first / tenth
                  << "  last 10%: " << last / tenth << "\n";
    }
    std::cout << "checkpoint written to " << out_prefix << "_{cv,qr}.txt\n";
    return 0;
}

int cmd_report(const std::string& in_path, const std::string& format) {
    SummaryReport report = summarize(read_records_csv(in_path));
    if (format == "csv")
        write_summary_csv(std::cout, report);
    else
        print_summary_table(std::cout, report);
    return 0;
}

int cmd_oracle(const ExperimentSpec& spec) {
    Workload w = default_workload(spec.c_phy);
    auto [a, phi] = brute_force_oracle(spec.env, w);
    std::cout << "cv_quality,cv_model,cv_cores,qr_quality,qr_cores,phi_star\n"
              << a.cv.quality << ',' << a.cv.model_size.value_or(0) << ','
              << format_double(a.cv.cores) << ',' << a.qr.quality << ','
              << format_double(a.qr.cores) << ',' << format_double(phi) << "\n";
    return 0;
}

}  // namespace

int cli(const std::vector<std::string>& args) {
    CLI::App app{"agent-based multi-dimensional autoscaling benchmark"};
    app.require_subcommand(1);

    ExperimentSpec spec;
    std::string config_path;
    std::string agent_name;
    std::string mode_name = "fast";
    std::string out_path;
    std::string checkpoint;
    std::string in_path;
    std::string format = "table";
    int episodes = -1;
    long long seed = -1;
    int iterations = -1, repetitions = -1;
    bool require_pretrained = false;

    auto* run = app.add_subcommand("run", "run one agent experiment");
    run->add_option("--agent", agent_name, "aif|dqn|daci|ask")->required();
    run->add_option("--iterations", iterations, "cycles per run (default 50)");
    run->add_option("--repetitions", repetitions, "independent runs (default 10)");
    run->add_option("--seed", seed, "base seed (default 0)");
    run->add_option("--mode", mode_name, "fast|realtime (default fast)");
    run->add_option("--config", config_path, "key=value config file");
    run->add_option("--out", out_path, "records CSV path");
    run->add_option("--checkpoint", checkpoint, "DQN checkpoint prefix to load");
    run->add_flag("--require-pretrained", require_pretrained,
                  "fail instead of bootstrapping a DQN pretraining");

    auto* pre = app.add_subcommand("pretrain-dqn", "pretrain DQN in the LGBN environment");
    pre->add_option("--episodes", episodes, "pretraining episodes (default 300)");
    pre->add_option("--seed", seed, "base seed (default 0)");
    pre->add_option("--config", config_path, "key=value config file");
    pre->add_option("--out", out_path, "checkpoint prefix")->required();

    auto* rep = app.add_subcommand("report", "summarize a records CSV");
    rep->add_option("--in", in_path, "records CSV")->required();
    rep->add_option("--format", format, "table|csv (default table)");

    auto* orc = app.add_subcommand("oracle", "print the brute-force optimum");
    orc->add_option("--config", config_path, "key=value config file");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // --help exits 0, usage errors exit 1
    }

    try {
        if (!config_path.empty()) load_config_file(spec, config_path);
        if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
        if (iterations > 0) spec.iterations = iterations;
        if (repetitions > 0) spec.repetitions = repetitions;
        if (!out_path.empty()) spec.out_path = out_path;
        if (!checkpoint.empty()) spec.dqn_checkpoint = checkpoint;
        spec.require_pretrained = require_pretrained;
        if (episodes > 0) spec.dqn.episodes = episodes;
        if (mode_name == "fast") spec.mode = RunMode::Fast;
        else if (mode_name == "realtime") spec.mode = RunMode::Realtime;
        else throw std::invalid_argument("--mode must be fast or realtime");

        if (run->parsed()) {
            spec.agent = agent_kind_from_string(agent_name);
            return cmd_run(std::move(spec));
        }
        if (pre->parsed()) return cmd_pretrain(std::move(spec), spec.out_path);
        if (rep->parsed()) return cmd_report(in_path, format);
        if (orc->parsed()) return cmd_oracle(spec);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace edgescale

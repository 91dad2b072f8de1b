#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "edgescale/aif.hpp"
#include "edgescale/ask.hpp"
#include "edgescale/daci.hpp"
#include "edgescale/dqn.hpp"

namespace edgescale {

enum class AgentKind { Aif, Dqn, Daci, Ask };
enum class RunMode { Fast, Realtime };

const char* to_string(AgentKind kind);
AgentKind agent_kind_from_string(const std::string& s);

/// Everything one experiment needs: agent choice, protocol, environment
/// overrides and per-agent configuration. Every default is overridable
/// through the key=value config file.
struct ExperimentSpec {
    AgentKind agent = AgentKind::Ask;
    int iterations = 50;
    int repetitions = 10;
    std::uint64_t seed = 0;
    RunMode mode = RunMode::Fast;

    GroundTruthModel env;
    double c_phy = 8.0;

    AifConfig aif;
    DqnConfig dqn;
    DaciConfig daci;
    AskConfig ask;

    std::string dqn_checkpoint;     // load instead of pretraining when set
    bool require_pretrained = false;
    int bootstrap_cycles = 120;     // random-walk cycles feeding the LGBN fit

    std::string out_path;           // records CSV; empty = keep in memory only
};

struct RunRecord {
    int run_id = 0;  // repetition, 1-based
    std::string agent;
    int step = 0;    // 1-based iteration index
    double phi_cv = 0.0;
    double phi_qr = 0.0;
    double phi_mean = 0.0;
    double cycle_ms = 0.0;  // decision duration (perceive + select)
    int cv_quality = 0;
    int cv_model = 0;
    double cv_cores = 0.0;
    int qr_quality = 0;
    double qr_cores = 0.0;
};

struct AgentSummary {
    std::string agent;
    int runs = 0;
    double final10_mean = 0.0;  // mean over runs of the final-10-step mean
    double final10_std = 0.0;   // std across runs
    double mean_cycle_ms = 0.0;
    double median_cycle_ms = 0.0;
    double p99_cycle_ms = 0.0;
    double mean_convergence_step = 0.0;
};

struct SummaryReport {
    std::vector<AgentSummary> agents;
};

struct ExperimentResult {
    std::vector<RunRecord> records;
    SummaryReport summary;
};

using AgentFactory =
    std::function<std::unique_ptr<Agent>(const Workload&, std::uint64_t seed)>;

/// Runs `repetitions` independent runs of `iterations` cycles each from the
/// fixed mid-range initial configuration. DQN loads its checkpoint when
/// given, otherwise pretrains once per experiment. When out_path is set the
/// records CSV is appended line by line (header first), flushed per record;
/// in fast mode its cycle_ms column is written as 0 so the file is a pure
/// function of (agent, seed, config).
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const AgentFactory& factory = nullptr);

/// Final-10-step aggregates, cycle-duration stats and the convergence step
/// (first step whose trailing-5 mean stays within 0.05 of the final-10 mean).
/// Throws std::domain_error when a run is shorter than 10 steps.
SummaryReport summarize(const std::vector<RunRecord>& records);

std::string records_csv_header();
std::string record_csv_line(const RunRecord& r, bool zero_duration);
void write_records_csv(const std::string& path, const std::vector<RunRecord>& records,
                       bool zero_durations);
std::vector<RunRecord> read_records_csv(const std::string& path);

void print_summary_table(std::ostream& out, const SummaryReport& report);
void write_summary_csv(std::ostream& out, const SummaryReport& report);

/// key = value configuration, namespaces env.*, harness.*, agent.*;
/// '#' starts a comment. Unknown keys are errors.
void apply_config_kv(ExperimentSpec& spec, const std::string& key,
                     const std::string& value);
void load_config_file(ExperimentSpec& spec, const std::string& path);

/// Random-walk data collection on the ground-truth environment followed by
/// the LGBN fit; the training environment for DQN pretraining.
LgbnModel bootstrap_lgbn(const ExperimentSpec& spec, std::uint64_t seed);

/// Command-line entry: run / pretrain-dqn / report / oracle.
/// Returns 0 on success, 1 on usage errors, 2 on runtime errors.
int cli(const std::vector<std::string>& args);

}  // namespace edgescale

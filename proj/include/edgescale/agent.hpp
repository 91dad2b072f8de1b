#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "edgescale/domain.hpp"
#include "edgescale/env.hpp"
#include "edgescale/monitoring.hpp"

namespace edgescale {

/// What an agent sees at the start of a cycle: windowed service snapshots,
/// their SLO fulfillment, and the free-core reading.
struct AgentObservation {
    ServiceSnapshot cv;
    ServiceSnapshot qr;
    double phi_cv = 0.0;
    double phi_qr = 0.0;
    double free_cores = 0.0;
};

enum class ServiceAction {
    QualityDown,
    QualityUp,
    ModelDown,
    ModelUp,
    CoresDown,
    CoresUp,
    NoOp,
};

const char* to_string(ServiceAction a);

// Fixed enumeration orders; tie-breaking everywhere follows these.
inline constexpr std::array<ServiceAction, 7> kCvActions = {
    ServiceAction::QualityDown, ServiceAction::QualityUp,
    ServiceAction::ModelDown,   ServiceAction::ModelUp,
    ServiceAction::CoresDown,   ServiceAction::CoresUp,
    ServiceAction::NoOp,
};
inline constexpr std::array<ServiceAction, 5> kQrActions = {
    ServiceAction::QualityDown, ServiceAction::QualityUp,
    ServiceAction::CoresDown,   ServiceAction::CoresUp,
    ServiceAction::NoOp,
};

inline constexpr double kCoreStep = 0.5;
inline constexpr double kMinCores = 0.5;
inline constexpr int kJointActionCount = 35;

/// One action per service; 7 x 5 = 35 combinations. Indices refer to
/// kCvActions / kQrActions positions.
struct JointAction {
    int cv = 0;
    int qr = 0;

    int index() const { return cv * static_cast<int>(kQrActions.size()) + qr; }
    static JointAction from_index(int idx);
    ServiceAction cv_action() const { return kCvActions[static_cast<std::size_t>(cv)]; }
    ServiceAction qr_action() const { return kQrActions[static_cast<std::size_t>(qr)]; }
    bool operator==(const JointAction&) const = default;
};

/// Resolves the current state from the store: windowed snapshots, Eq.-style
/// fulfillment per service, free cores. Throws NoDataError on a cold store.
AgentObservation perceive(const TimeSeriesStore& store, const Workload& workload,
                          double now, double window_seconds = 5.0);

ServiceConfig config_from_snapshot(const ServiceSnapshot& snap);
Assignment assignment_from_observation(const AgentObservation& obs);

// Successor configuration of one service under a primitive action; clamps to
// the variable bounds as a safety net (legality filtering happens first).
ServiceConfig apply_service_action(const ServiceConfig& config, ServiceAction action,
                                   const ServiceSpec& spec);

Assignment apply_joint_action(const AgentObservation& obs, JointAction action,
                              const Workload& workload);

/// All joint actions whose successor keeps every variable in bounds, each
/// service at >= 0.5 cores, and the summed allocation within c_phy.
/// NoOp/NoOp is always included.
std::vector<JointAction> legal_actions(const AgentObservation& obs,
                                       const Workload& workload);

bool is_legal(const AgentObservation& obs, JointAction action,
              const Workload& workload);

/// Per-cycle record: how long the decision took, what was applied, and the
/// post-action fulfillment.
struct AgentTelemetry {
    double cycle_duration_ms = 0.0;
    Assignment applied;
    std::optional<JointAction> action;  // set by discrete-action agents
    double phi_cv = 0.0;
    double phi_qr = 0.0;
    double phi_mean = 0.0;
};

/// The two-step agent contract: perceive (done by the caller) and decide.
/// decide() returns the full target configuration; discrete agents derive it
/// from a JointAction, ASK emits it directly. Online learners update their
/// internal model inside decide(), so the measured decision time covers it.
class Agent {
public:
    virtual ~Agent() = default;
    virtual Assignment decide(const AgentObservation& obs,
                              const TimeSeriesStore& store) = 0;
    virtual const char* name() const = 0;
    // discrete agents report the joint action behind their last decision
    virtual std::optional<JointAction> last_action() const { return std::nullopt; }
};

/// One 5-second iteration: perceive -> decide -> apply -> record samples.
/// The reported duration covers perceive + decide only.
AgentTelemetry run_cycle(Agent& agent, Environment& env, TimeSeriesStore& store,
                         int seconds_per_cycle = 5);

}  // namespace edgescale

#include "edgescale/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace edgescale {

const char* to_string(ServiceAction a) {
    switch (a) {
        case ServiceAction::QualityDown: return "quality-";
        case ServiceAction::QualityUp: return "quality+";
        case ServiceAction::ModelDown: return "model-";
        case ServiceAction::ModelUp: return "model+";
        case ServiceAction::CoresDown: return "cores-";
        case ServiceAction::CoresUp: return "cores+";
        case ServiceAction::NoOp: return "noop";
    }
    return "?";
}

JointAction JointAction::from_index(int idx) {
    if (idx < 0 || idx >= kJointActionCount)
        throw std::domain_error("joint action index out of range");
    int qn = static_cast<int>(kQrActions.size());
    return JointAction{idx / qn, idx % qn};
}

AgentObservation perceive(const TimeSeriesStore& store, const Workload& workload,
                          double now, double window_seconds) {
    AgentObservation obs;
    obs.cv = store.window_mean(ServiceKind::CV, now, window_seconds);
    obs.qr = store.window_mean(ServiceKind::QR, now, window_seconds);
    obs.phi_cv = service_fulfillment(config_from_snapshot(obs.cv),
                                     obs.cv.throughput, workload.cv);
    obs.phi_qr = service_fulfillment(config_from_snapshot(obs.qr),
                                     obs.qr.throughput, workload.qr);
    obs.free_cores =
        free_cores(workload.device, {obs.cv.cores, obs.qr.cores});
    return obs;
}

ServiceConfig config_from_snapshot(const ServiceSnapshot& snap) {
    return ServiceConfig{snap.quality, snap.model_size, snap.cores};
}

Assignment assignment_from_observation(const AgentObservation& obs) {
    return Assignment{config_from_snapshot(obs.cv), config_from_snapshot(obs.qr)};
}

namespace {

// raw successor, no clamping; legality checks look at this
ServiceConfig raw_successor(const ServiceConfig& config, ServiceAction action,
                            const ServiceSpec& spec) {
    ServiceConfig next = config;
    double qstep = spec.variable("quality").step;
    switch (action) {
        case ServiceAction::QualityDown: next.quality -= static_cast<int>(qstep); break;
        case ServiceAction::QualityUp: next.quality += static_cast<int>(qstep); break;
        case ServiceAction::ModelDown:
            if (next.model_size) *next.model_size -= 1;
            break;
        case ServiceAction::ModelUp:
            if (next.model_size) *next.model_size += 1;
            break;
        case ServiceAction::CoresDown: next.cores -= kCoreStep; break;
        case ServiceAction::CoresUp: next.cores += kCoreStep; break;
        case ServiceAction::NoOp: break;
    }
    return next;
}

bool service_action_in_bounds(const ServiceConfig& next, const ServiceSpec& spec) {
    const auto& q = spec.variable("quality");
    if (next.quality < q.min || next.quality > q.max) return false;
    if (spec.kind == ServiceKind::CV) {
        const auto& m = spec.variable("model_size");
        if (!next.model_size) return false;
        if (*next.model_size < m.min || *next.model_size > m.max) return false;
    }
    const auto& c = spec.variable("cores");
    if (next.cores < kMinCores - 1e-9) return false;
    if (next.cores >= c.max - 1e-9) return false;  // cores range is open above
    return true;
}

}  // namespace

ServiceConfig apply_service_action(const ServiceConfig& config, ServiceAction action,
                                   const ServiceSpec& spec) {
    ServiceConfig next = raw_successor(config, action, spec);
    const auto& q = spec.variable("quality");
    next.quality = std::clamp(next.quality, static_cast<int>(q.min),
                              static_cast<int>(q.max));
    if (next.model_size) {
        const auto& m = spec.variable("model_size");
        next.model_size = std::clamp(*next.model_size, static_cast<int>(m.min),
                                     static_cast<int>(m.max));
    }
    const auto& c = spec.variable("cores");
    next.cores = std::clamp(next.cores, kMinCores, c.max - kCoreStep);
    return next;
}

bool is_legal(const AgentObservation& obs, JointAction action,
              const Workload& workload) {
    ServiceConfig cv_next = raw_successor(config_from_snapshot(obs.cv),
                                          action.cv_action(), workload.cv);
    ServiceConfig qr_next = raw_successor(config_from_snapshot(obs.qr),
                                          action.qr_action(), workload.qr);
    if (!service_action_in_bounds(cv_next, workload.cv)) return false;
    if (!service_action_in_bounds(qr_next, workload.qr)) return false;
    return cv_next.cores + qr_next.cores <= workload.device.c_phy + 1e-9;
}

std::vector<JointAction> legal_actions(const AgentObservation& obs,
                                       const Workload& workload) {
    std::vector<JointAction> out;
    out.reserve(kJointActionCount);
    for (int i = 0; i < static_cast<int>(kCvActions.size()); ++i)
        for (int j = 0; j < static_cast<int>(kQrActions.size()); ++j)
            if (is_legal(obs, JointAction{i, j}, workload))
                out.push_back(JointAction{i, j});
    return out;
}

Assignment apply_joint_action(const AgentObservation& obs, JointAction action,
                              const Workload& workload) {
    Assignment next;
    next.cv = apply_service_action(config_from_snapshot(obs.cv),
                                   action.cv_action(), workload.cv);
    next.qr = apply_service_action(config_from_snapshot(obs.qr),
                                   action.qr_action(), workload.qr);
    return next;
}

AgentTelemetry run_cycle(Agent& agent, Environment& env, TimeSeriesStore& store,
                         int seconds_per_cycle) {
    using clock = std::chrono::steady_clock;
    const Workload& workload = env.workload();

    auto t0 = clock::now();
    AgentObservation obs = perceive(store, workload, env.now());
    Assignment target = agent.decide(obs, store);
    auto t1 = clock::now();

    StepOutcome outcome = env.step(target, seconds_per_cycle);
    for (const auto& s : outcome.samples) store.record(s);

    AgentObservation post = perceive(store, workload, env.now());
    AgentTelemetry t;
    t.cycle_duration_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    t.applied = target;
    t.action = agent.last_action();
    t.phi_cv = post.phi_cv;
    t.phi_qr = post.phi_qr;
    t.phi_mean = global_fulfillment({post.phi_cv, post.phi_qr});
    return t;
}

}  // namespace edgescale

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace edgescale {

enum class ServiceKind { CV, QR };

const char* to_string(ServiceKind kind);
ServiceKind service_kind_from_string(const std::string& s);

/// One monitored variable of a service: bounds, action step and optional
/// lower-bound SLO target.
struct VariableSpec {
    enum class ValueType { Integer, Real };
    enum class StepKind { Fixed, Continuous, NotActionable };

    std::string name;
    ValueType value_type = ValueType::Real;
    double min = 0.0;
    double max = 0.0;
    StepKind step_kind = StepKind::NotActionable;
    double step = 0.0;  // meaningful only for StepKind::Fixed
    std::optional<double> slo_target;

    bool actionable() const { return step_kind != StepKind::NotActionable; }
    void validate() const;
};

/// A service level objective: variable `variable` must reach `target`.
struct Slo {
    std::string variable;
    double target = 0.0;  // lower bound, > 0
};

struct ServiceSpec {
    ServiceKind kind = ServiceKind::CV;
    std::vector<VariableSpec> variables;
    std::vector<Slo> slos;

    const VariableSpec& variable(const std::string& name) const;
    void validate() const;
};

// Canonical service definitions (variable spaces, steps, SLO targets).
ServiceSpec cv_spec();
ServiceSpec qr_spec();

struct DeviceSpec {
    double c_phy = 8.0;
    double ram_mb = 8192.0;  // carried for completeness; takes part in no dynamics
    std::vector<ServiceKind> service_ids = {ServiceKind::CV, ServiceKind::QR};

    void validate() const;
};

/// Elastic configuration of one service: quality / model-size setpoints plus
/// its core allocation.
struct ServiceConfig {
    int quality = 0;
    std::optional<int> model_size;  // CV only
    double cores = 0.0;
};

/// Full configuration of both services; every agent decision resolves to one
/// of these before it is applied.
struct Assignment {
    ServiceConfig cv;
    ServiceConfig qr;

    double total_cores() const { return cv.cores + qr.cores; }
};

// The problem instance shared by environment, agents and harness.
struct Workload {
    DeviceSpec device;
    ServiceSpec cv;
    ServiceSpec qr;

    const ServiceSpec& spec(ServiceKind kind) const {
        return kind == ServiceKind::CV ? cv : qr;
    }
};

Workload default_workload(double c_phy = 8.0);

// Throws std::domain_error when the config leaves the variable bounds or the
// quality setpoint is off its step lattice.
void validate_config(const ServiceConfig& config, const ServiceSpec& spec);

/// Continuous SLO fulfillment: metric / target, capped at 1.
/// Throws std::domain_error for a negative metric.
double slo_fulfillment(double metric, const Slo& slo);

/// Mean SLO fulfillment over all of a service's SLOs, given its current
/// configuration and observed throughput.
double service_fulfillment(const ServiceConfig& config, double throughput,
                           const ServiceSpec& spec);

/// Mean over per-service fulfillments; throws std::domain_error on empty input.
double global_fulfillment(const std::vector<double>& per_service);

/// Unclaimed cores: c_phy minus the sum of allocations.
double free_cores(const DeviceSpec& device, const std::vector<double>& allocations);

}  // namespace edgescale

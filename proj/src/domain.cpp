#include "edgescale/domain.hpp"

#include <cmath>

namespace edgescale {

const char* to_string(ServiceKind kind) {
    return kind == ServiceKind::CV ? "CV" : "QR";
}

ServiceKind service_kind_from_string(const std::string& s) {
    if (s == "CV") return ServiceKind::CV;
    if (s == "QR") return ServiceKind::QR;
    throw std::invalid_argument("unknown service kind: '" + s + "'");
}

void VariableSpec::validate() const {
    if (name.empty()) throw std::domain_error("variable without a name");
    if (min > max)
        throw std::domain_error("variable " + name + ": min > max");
    if (step_kind == StepKind::Fixed) {
        if (step <= 0.0)
            throw std::domain_error("variable " + name + ": step must be > 0");
        double span = (max - min) / step;
        if (std::abs(span - std::round(span)) > 1e-9)
            throw std::domain_error("variable " + name +
                                    ": range is not a multiple of step");
    }
    if (slo_target && *slo_target <= 0.0)
        throw std::domain_error("variable " + name + ": SLO target must be > 0");
}

const VariableSpec& ServiceSpec::variable(const std::string& name) const {
    for (const auto& v : variables)
        if (v.name == name) return v;
    throw std::domain_error(std::string(to_string(kind)) +
                            " has no variable '" + name + "'");
}

void ServiceSpec::validate() const {
    for (const auto& v : variables) v.validate();
    for (const auto& q : slos) {
        if (q.target <= 0.0)
            throw std::domain_error("SLO on " + q.variable + ": target must be > 0");
        variable(q.variable);  // every SLO references a declared variable
    }
}

void DeviceSpec::validate() const {
    if (c_phy <= 0.0) throw std::domain_error("c_phy must be > 0");
    if (service_ids.empty()) throw std::domain_error("device hosts no services");
    for (std::size_t i = 0; i < service_ids.size(); ++i)
        for (std::size_t j = i + 1; j < service_ids.size(); ++j)
            if (service_ids[i] == service_ids[j])
                throw std::domain_error("duplicate service id on device");
}

namespace {

VariableSpec make_var(std::string name, VariableSpec::ValueType vt, double min,
                      double max, VariableSpec::StepKind sk, double step,
                      std::optional<double> target) {
    VariableSpec v;
    v.name = std::move(name);
    v.value_type = vt;
    v.min = min;
    v.max = max;
    v.step_kind = sk;
    v.step = step;
    v.slo_target = target;
    return v;
}

}  // namespace

ServiceSpec cv_spec() {
    using VT = VariableSpec::ValueType;
    using SK = VariableSpec::StepKind;
    ServiceSpec s;
    s.kind = ServiceKind::CV;
    s.variables = {
        make_var("quality", VT::Integer, 128, 320, SK::Fixed, 32, 288.0),
        make_var("model_size", VT::Integer, 1, 5, SK::Fixed, 1, 3.0),
        make_var("cores", VT::Real, 0, 8, SK::Continuous, 0, std::nullopt),
        make_var("throughput", VT::Real, 0, 100, SK::NotActionable, 0, 5.0),
    };
    s.slos = {{"quality", 288.0}, {"model_size", 3.0}, {"throughput", 5.0}};
    return s;
}

ServiceSpec qr_spec() {
    using VT = VariableSpec::ValueType;
    using SK = VariableSpec::StepKind;
    ServiceSpec s;
    s.kind = ServiceKind::QR;
    s.variables = {
        make_var("quality", VT::Integer, 300, 1000, SK::Fixed, 100, 900.0),
        make_var("cores", VT::Real, 0, 8, SK::Continuous, 0, std::nullopt),
        make_var("throughput", VT::Real, 0, 100, SK::NotActionable, 0, 60.0),
    };
    s.slos = {{"quality", 900.0}, {"throughput", 60.0}};
    return s;
}

Workload default_workload(double c_phy) {
    Workload w;
    w.device.c_phy = c_phy;
    w.cv = cv_spec();
    w.qr = qr_spec();
    w.device.validate();
    w.cv.validate();
    w.qr.validate();
    return w;
}

void validate_config(const ServiceConfig& config, const ServiceSpec& spec) {
    const auto& q = spec.variable("quality");
    if (config.quality < q.min || config.quality > q.max)
        throw std::domain_error(std::string(to_string(spec.kind)) +
                                " quality out of bounds: " +
                                std::to_string(config.quality));
    double steps = (config.quality - q.min) / q.step;
    if (std::abs(steps - std::round(steps)) > 1e-9)
        throw std::domain_error(std::string(to_string(spec.kind)) +
                                " quality off the step lattice: " +
                                std::to_string(config.quality));
    if (spec.kind == ServiceKind::CV) {
        if (!config.model_size)
            throw std::domain_error("CV config lacks model_size");
        const auto& m = spec.variable("model_size");
        if (*config.model_size < m.min || *config.model_size > m.max)
            throw std::domain_error("CV model_size out of bounds: " +
                                    std::to_string(*config.model_size));
    } else if (config.model_size) {
        throw std::domain_error("QR config carries a model_size");
    }
    const auto& c = spec.variable("cores");
    if (config.cores <= c.min || config.cores >= c.max)
        throw std::domain_error(std::string(to_string(spec.kind)) +
                                " cores out of (0, 8): " +
                                std::to_string(config.cores));
}

double slo_fulfillment(double metric, const Slo& slo) {
    if (slo.target <= 0.0)
        throw std::domain_error("SLO target must be > 0");
    if (metric < 0.0)
        throw std::domain_error("negative metric for SLO on " + slo.variable);
    return metric <= slo.target ? metric / slo.target : 1.0;
}

double service_fulfillment(const ServiceConfig& config, double throughput,
                           const ServiceSpec& spec) {
    if (spec.slos.empty()) throw std::domain_error("service has no SLOs");
    double sum = 0.0;
    for (const auto& q : spec.slos) {
        double metric;
        if (q.variable == "quality") {
            metric = config.quality;
        } else if (q.variable == "model_size") {
            if (!config.model_size)
                throw std::domain_error("SLO on model_size but config has none");
            metric = *config.model_size;
        } else if (q.variable == "cores") {
            metric = config.cores;
        } else if (q.variable == "throughput") {
            metric = throughput;
        } else {
            throw std::domain_error("SLO on unobservable variable '" +
                                    q.variable + "'");
        }
        sum += slo_fulfillment(metric, q);
    }
    return sum / static_cast<double>(spec.slos.size());
}

double global_fulfillment(const std::vector<double>& per_service) {
    if (per_service.empty())
        throw std::domain_error("global fulfillment of zero services");
    double sum = 0.0;
    for (double phi : per_service) sum += phi;
    return sum / static_cast<double>(per_service.size());
}

double free_cores(const DeviceSpec& device, const std::vector<double>& allocations) {
    double used = 0.0;
    for (double c : allocations) used += c;
    return device.c_phy - used;
}

}  // namespace edgescale

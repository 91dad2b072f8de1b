#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "edgescale/harness.hpp"

namespace py = pybind11;
using namespace edgescale;

namespace {

ServiceKind kind_from(const std::string& s) { return service_kind_from_string(s); }

py::dict record_to_dict(const RunRecord& r) {
    py::dict d;
    d["run_id"] = r.run_id;
    d["agent"] = r.agent;
    d["step"] = r.step;
    d["phi_cv"] = r.phi_cv;
    d["phi_qr"] = r.phi_qr;
    d["phi_mean"] = r.phi_mean;
    d["cycle_ms"] = r.cycle_ms;
    d["cv_quality"] = r.cv_quality;
    d["cv_model"] = r.cv_model;
    d["cv_cores"] = r.cv_cores;
    d["qr_quality"] = r.qr_quality;
    d["qr_cores"] = r.qr_cores;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Agent-based multi-dimensional autoscaling benchmark";

    py::class_<ServiceConfig>(m, "ServiceConfig")
        .def(py::init([](int quality, std::optional<int> model_size, double cores) {
                 return ServiceConfig{quality, model_size, cores};
             }),
             py::arg("quality"), py::arg("model_size") = std::nullopt,
             py::arg("cores") = 0.5)
        .def_readwrite("quality", &ServiceConfig::quality)
        .def_readwrite("model_size", &ServiceConfig::model_size)
        .def_readwrite("cores", &ServiceConfig::cores)
        .def("__repr__", [](const ServiceConfig& c) {
            std::string s = "ServiceConfig(quality=" + std::to_string(c.quality);
            if (c.model_size) s += ", model_size=" + std::to_string(*c.model_size);
            s += ", cores=" + std::to_string(c.cores) + ")";
            return s;
        });

    py::class_<Assignment>(m, "Assignment")
        .def(py::init<>())
        .def_readwrite("cv", &Assignment::cv)
        .def_readwrite("qr", &Assignment::qr)
        .def("total_cores", &Assignment::total_cores);

    py::class_<GroundTruthModel>(m, "GroundTruthModel")
        .def(py::init<>())
        .def_readwrite("kappa_cv", &GroundTruthModel::kappa_cv)
        .def_readwrite("kappa_qr", &GroundTruthModel::kappa_qr)
        .def_readwrite("noise_sigma", &GroundTruthModel::noise_sigma);

    m.def(
        "slo_fulfillment",
        [](double metric, double target) {
            return slo_fulfillment(metric, Slo{"metric", target});
        },
        py::arg("metric"), py::arg("target"),
        "Continuous SLO fulfillment: metric / target, capped at 1.");

    m.def(
        "service_fulfillment",
        [](const std::string& kind, const ServiceConfig& config, double throughput) {
            Workload w = default_workload();
            return service_fulfillment(config, throughput, w.spec(kind_from(kind)));
        },
        py::arg("kind"), py::arg("config"), py::arg("throughput"),
        "Mean fulfillment over the service's SLOs.");

    m.def(
        "global_fulfillment",
        [](const std::vector<double>& phis) { return global_fulfillment(phis); },
        py::arg("per_service"));

    m.def(
        "free_cores",
        [](double c_phy, const std::vector<double>& allocations) {
            DeviceSpec d;
            d.c_phy = c_phy;
            return free_cores(d, allocations);
        },
        py::arg("c_phy"), py::arg("allocations"));

    m.def(
        "ground_truth_throughput",
        [](const std::string& kind, const ServiceConfig& config,
           const GroundTruthModel& model) {
            return ground_truth_throughput(kind_from(kind), config, model);
        },
        py::arg("kind"), py::arg("config"), py::arg("model") = GroundTruthModel{},
        "Noiseless mean throughput of the synthetic surface.");

    m.def(
        "oracle",
        [](const GroundTruthModel& model, double c_phy, double core_step) {
            auto [a, phi] =
                brute_force_oracle(model, default_workload(c_phy), core_step);
            py::dict d;
            d["cv_quality"] = a.cv.quality;
            d["cv_model"] = a.cv.model_size.value_or(0);
            d["cv_cores"] = a.cv.cores;
            d["qr_quality"] = a.qr.quality;
            d["qr_cores"] = a.qr.cores;
            d["phi_star"] = phi;
            return d;
        },
        py::arg("model") = GroundTruthModel{}, py::arg("c_phy") = 8.0,
        py::arg("core_step") = 0.05,
        "Exhaustive search for the best assignment on the noiseless surface.");

    m.def(
        "run_experiment",
        [](const std::string& agent, int iterations, int repetitions,
           std::uint64_t seed, const GroundTruthModel& env, double c_phy,
           const std::string& out_path, const std::string& dqn_checkpoint) {
            ExperimentSpec spec;
            spec.agent = agent_kind_from_string(agent);
            spec.iterations = iterations;
            spec.repetitions = repetitions;
            spec.seed = seed;
            spec.env = env;
            spec.c_phy = c_phy;
            spec.out_path = out_path;
            spec.dqn_checkpoint = dqn_checkpoint;
            ExperimentResult res = run_experiment(spec);
            py::list records;
            for (const auto& r : res.records) records.append(record_to_dict(r));
            return records;
        },
        py::arg("agent"), py::arg("iterations") = 50, py::arg("repetitions") = 10,
        py::arg("seed") = 0, py::arg("env") = GroundTruthModel{},
        py::arg("c_phy") = 8.0, py::arg("out_path") = std::string(),
        py::arg("dqn_checkpoint") = std::string(),
        "Run the experiment protocol; returns the per-step records.");

    m.def(
        "cli", [](const std::vector<std::string>& args) { return cli(args); },
        py::arg("args"), "Invoke the command-line interface programmatically.");
}

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "edgescale/agent.hpp"
#include "edgescale/rng.hpp"

namespace edgescale {

/// Per-service throughput regression: beta = (intercept, quality,
/// [model_size], cores).
struct RegressionModel {
    std::vector<double> beta;
    double sigma = 0.0;
    double r2 = 0.0;
    std::size_t sample_count = 0;
};

struct AskConfig {
    int exploration_iterations = 20;
    int refit_every = 5;
    double verify_core_step = 0.05;  // grid used by the dominance check
};

/// Model-predicted throughput for a configuration, clamped to [0, 100].
double regression_predict(const RegressionModel& model, ServiceKind kind,
                          const ServiceConfig& config);

/// Least-squares throughput fit per service over the store's full history.
std::pair<RegressionModel, RegressionModel> fit_regression(
    const TimeSeriesStore& store);

/// Sum of the two services' fulfillments under the fitted models (the
/// quantity optimize() maximizes).
double model_objective(const Assignment& a, const RegressionModel& cv_model,
                       const RegressionModel& qr_model, const Workload& workload);

/// Exact maximizer of the summed fulfillment under the fitted linear models:
/// enumerates the discrete lattice and, per combination, searches the
/// piecewise-linear core-split objective at its clamp breakpoints; the
/// winning allocation is then trimmed per service to the smallest cores
/// preserving its fulfillment. Ties prefer smaller quality/model, then
/// smaller CV cores.
Assignment optimize(const RegressionModel& cv_model, const RegressionModel& qr_model,
                    const Workload& workload);

/// Exhaustive reference search over the full lattice and a per-service core
/// grid (budget-feasible pairs) on the noiseless ground truth. Ties prefer
/// smaller quality/model, then the smaller total allocation. Returns the
/// maximizer and its mean fulfillment.
std::pair<Assignment, double> brute_force_oracle(const GroundTruthModel& model,
                                                 const Workload& workload,
                                                 double core_step = 0.05);

/// Random exploration, then regression + constrained maximization, refit
/// every `refit_every` cycles.
class AskAgent : public Agent {
public:
    AskAgent(Workload workload, AskConfig config, std::uint64_t seed);

    Assignment decide(const AgentObservation& obs, const TimeSeriesStore& store) override;
    const char* name() const override { return "ask"; }

    /// Uniform random lattice assignment; cores rescaled into the budget.
    Assignment explore_action();

    bool exploring() const { return !fitted_; }
    int cycle() const { return cycle_; }
    const RegressionModel& cv_model() const { return cv_model_; }
    const RegressionModel& qr_model() const { return qr_model_; }

private:
    Workload workload_;
    AskConfig config_;
    Rng rng_;
    int cycle_ = 0;
    bool fitted_ = false;
    int last_fit_cycle_ = -1;
    RegressionModel cv_model_;
    RegressionModel qr_model_;
};

}  // namespace edgescale

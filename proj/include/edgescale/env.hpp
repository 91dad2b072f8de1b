#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgescale/domain.hpp"
#include "edgescale/monitoring.hpp"
#include "edgescale/rng.hpp"

namespace edgescale {

/// Raised when a step would violate the core budget.
struct ConstraintViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parameters of the synthetic throughput surface standing in for the real
/// processing services. Mean throughput is
///   CV: kappa_cv * cores / ((quality/q0_cv)^2 * model_size)
///   QR: kappa_qr * cores / ((quality/q0_qr)^2)
/// with optional relative Gaussian noise, clamped to [0, 100].
struct GroundTruthModel {
    double kappa_cv = 20.0;
    double kappa_qr = 135.0;
    double noise_sigma = 0.05;
    double q0_cv = 128.0;
    double q0_qr = 300.0;

    void validate() const;
};

double ground_truth_throughput(ServiceKind kind, const ServiceConfig& config,
                               const GroundTruthModel& model);
double ground_truth_throughput(ServiceKind kind, const ServiceConfig& config,
                               const GroundTruthModel& model, bool noisy,
                               Rng& rng);

/// Result of one environment step: the 1-second batch samples it emitted and
/// the device-level free-core reading.
struct StepOutcome {
    std::vector<MetricSample> samples;
    double free_cores = 0.0;
};

/// Simulated processing environment. Applies configurations, emits batch
/// samples from the ground-truth surface, and advances virtual time; fully
/// deterministic for a given seed.
class Environment {
public:
    Environment(Workload workload, GroundTruthModel model, Assignment initial,
                std::uint64_t seed);

    // Emits `seconds` batch samples for the current configuration without
    // counting an agent iteration; fills the monitoring window before the
    // first decision.
    StepOutcome warmup(int seconds = 5);

    // Applies `target` (throws ConstraintViolation if the core budget is
    // exceeded, std::domain_error on out-of-bounds values), then emits one
    // sample per service per simulated second.
    StepOutcome step(const Assignment& target, int seconds = 5);

    const Assignment& config() const { return config_; }
    const Workload& workload() const { return workload_; }
    const GroundTruthModel& model() const { return model_; }
    double now() const { return sim_time_; }
    int step_index() const { return step_index_; }

private:
    StepOutcome emit_batches(int seconds);

    Workload workload_;
    GroundTruthModel model_;
    Assignment config_;
    double sim_time_ = 0.0;
    int step_index_ = 0;
    Rng rng_;
};

// Default initial configuration: both services mid-range, deliberately away
// from the optimum.
Assignment default_initial_assignment();

/// Per-service linear Gaussian model of throughput given the actionable
/// variables: beta = (intercept, quality, [model_size], cores).
struct LinearGaussian {
    std::vector<double> beta;
    double sigma = 0.0;
    double r2 = 0.0;
    std::size_t sample_count = 0;
};

struct LgbnModel {
    LinearGaussian cv;
    LinearGaussian qr;
};

/// Least-squares fit of throughput on the actionable variables, per service.
/// Throws std::runtime_error naming the degenerate predictor when the design
/// matrix is rank deficient, std::domain_error when samples are too few.
LgbnModel fit_lgbn(const std::vector<MetricSample>& history);
LgbnModel fit_lgbn(const TimeSeriesStore& store);

/// Model mean for a configuration, clamped to [0, 100].
double lgbn_predict(const LgbnModel& model, ServiceKind kind,
                    const ServiceConfig& config);

/// Draws Normal(beta . x, sigma^2), clamped to [0, 100].
double lgbn_sample(const LgbnModel& model, ServiceKind kind,
                   const ServiceConfig& config, Rng& rng);

}  // namespace edgescale

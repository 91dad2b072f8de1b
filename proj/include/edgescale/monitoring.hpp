#pragma once

#include <deque>
#include <optional>
#include <stdexcept>
#include <string>

#include "edgescale/domain.hpp"

namespace edgescale {

/// Raised when a window query finds no samples; distinguishes a cold store
/// from a malformed query.
struct NoDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One monitoring record: service state and measured throughput at a
/// simulated timestamp.
struct MetricSample {
    double timestamp = 0.0;  // simulated seconds
    ServiceKind service = ServiceKind::CV;
    int quality = 0;
    std::optional<int> model_size;
    double cores = 0.0;
    double throughput = 0.0;
};

/// Windowed view of one service: mean throughput over the window, latest
/// setpoints (configuration values are exact, not averaged).
struct ServiceSnapshot {
    int quality = 0;
    std::optional<int> model_size;
    double cores = 0.0;
    double throughput = 0.0;
};

/// In-process stand-in for the time-series DB: a bounded append-only buffer
/// per service with sliding-window queries and CSV persistence.
class TimeSeriesStore {
public:
    explicit TimeSeriesStore(Workload workload, std::size_t capacity = 10000);

    // Validates bounds and per-service timestamp monotonicity; evicts the
    // oldest sample of the service once past capacity.
    void record(const MetricSample& sample);

    // Mean throughput over (now - window, now], latest setpoints.
    ServiceSnapshot window_mean(ServiceKind service, double now,
                                double window_seconds = 5.0) const;

    const std::deque<MetricSample>& samples(ServiceKind service) const;
    std::size_t size(ServiceKind service) const;
    std::size_t capacity() const { return capacity_; }
    const Workload& workload() const { return workload_; }

    // Writes `timestamp,service,quality,model_size,cores,throughput`, samples
    // merged by timestamp (CV first on ties). Returns the row count.
    std::size_t export_csv(const std::string& path) const;

    static TimeSeriesStore import_csv(const std::string& path, Workload workload,
                                      std::size_t capacity = 10000);

private:
    std::deque<MetricSample>& buffer(ServiceKind service);
    const std::deque<MetricSample>& buffer(ServiceKind service) const;

    Workload workload_;
    std::size_t capacity_;
    std::deque<MetricSample> cv_;
    std::deque<MetricSample> qr_;
};

}  // namespace edgescale

#include "edgescale/monitoring.hpp"

#include <fstream>

#include "edgescale/util.hpp"

namespace edgescale {

TimeSeriesStore::TimeSeriesStore(Workload workload, std::size_t capacity)
    : workload_(std::move(workload)), capacity_(capacity) {
    if (capacity_ == 0) throw std::domain_error("store capacity must be > 0");
}

std::deque<MetricSample>& TimeSeriesStore::buffer(ServiceKind service) {
    return service == ServiceKind::CV ? cv_ : qr_;
}

const std::deque<MetricSample>& TimeSeriesStore::buffer(ServiceKind service) const {
    return service == ServiceKind::CV ? cv_ : qr_;
}

void TimeSeriesStore::record(const MetricSample& sample) {
    const ServiceSpec& spec = workload_.spec(sample.service);
    ServiceConfig config{sample.quality, sample.model_size, sample.cores};
    validate_config(config, spec);
    const auto& tp = spec.variable("throughput");
    if (sample.throughput < tp.min || sample.throughput > tp.max)
        throw std::domain_error("throughput out of [0, 100]: " +
                                format_double(sample.throughput));
    auto& buf = buffer(sample.service);
    if (!buf.empty() && sample.timestamp < buf.back().timestamp)
        throw std::domain_error("timestamp not monotone for " +
                                std::string(to_string(sample.service)));
    buf.push_back(sample);
    if (buf.size() > capacity_) buf.pop_front();
}

ServiceSnapshot TimeSeriesStore::window_mean(ServiceKind service, double now,
                                             double window_seconds) const {
    const auto& buf = buffer(service);
    double lo = now - window_seconds;
    double tp_sum = 0.0;
    std::size_t n = 0;
    const MetricSample* latest = nullptr;
    for (auto it = buf.rbegin(); it != buf.rend(); ++it) {
        if (it->timestamp > now) continue;
        if (it->timestamp <= lo) break;  // window is (now - w, now]
        if (!latest) latest = &*it;
        tp_sum += it->throughput;
        ++n;
    }
    if (n == 0)
        throw NoDataError("no " + std::string(to_string(service)) +
                          " samples in (" + format_double(lo) + ", " +
                          format_double(now) + "]");
    ServiceSnapshot snap;
    snap.quality = latest->quality;
    snap.model_size = latest->model_size;
    snap.cores = latest->cores;
    snap.throughput = tp_sum / static_cast<double>(n);
    return snap;
}

const std::deque<MetricSample>& TimeSeriesStore::samples(ServiceKind service) const {
    return buffer(service);
}

std::size_t TimeSeriesStore::size(ServiceKind service) const {
    return buffer(service).size();
}

std::size_t TimeSeriesStore::export_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "timestamp,service,quality,model_size,cores,throughput\n";
    std::size_t rows = 0;
    auto emit = [&](const MetricSample& s) {
        out << format_double(s.timestamp) << ',' << to_string(s.service) << ','
            << s.quality << ',';
        if (s.model_size) out << *s.model_size;
        out << ',' << format_double(s.cores) << ','
            << format_double(s.throughput) << '\n';
        ++rows;
    };
    // stable merge by timestamp, CV ahead of QR on ties
    std::size_t i = 0, j = 0;
    while (i < cv_.size() || j < qr_.size()) {
        bool take_cv = j >= qr_.size() ||
                       (i < cv_.size() && cv_[i].timestamp <= qr_[j].timestamp);
        emit(take_cv ? cv_[i++] : qr_[j++]);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
    return rows;
}

TimeSeriesStore TimeSeriesStore::import_csv(const std::string& path,
                                            Workload workload,
                                            std::size_t capacity) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("empty file: " + path);
    TimeSeriesStore store(std::move(workload), capacity);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 6)
            throw std::runtime_error("bad row in " + path + ": " + line);
        MetricSample s;
        s.timestamp = parse_double(fields[0]);
        s.service = service_kind_from_string(fields[1]);
        s.quality = static_cast<int>(parse_long(fields[2]));
        if (!fields[3].empty())
            s.model_size = static_cast<int>(parse_long(fields[3]));
        s.cores = parse_double(fields[4]);
        s.throughput = parse_double(fields[5]);
        store.record(s);
    }
    return store;
}

}  // namespace edgescale

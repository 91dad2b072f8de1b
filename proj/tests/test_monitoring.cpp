#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "edgescale/monitoring.hpp"

using namespace edgescale;

namespace {

MetricSample cv_sample(double t, double tp, int quality = 192, int model = 2,
                       double cores = 2.0) {
    MetricSample s;
    s.timestamp = t;
    s.service = ServiceKind::CV;
    s.quality = quality;
    s.model_size = model;
    s.cores = cores;
    s.throughput = tp;
    return s;
}

MetricSample qr_sample(double t, double tp, int quality = 500, double cores = 2.0) {
    MetricSample s;
    s.timestamp = t;
    s.service = ServiceKind::QR;
    s.quality = quality;
    s.cores = cores;
    s.throughput = tp;
    return s;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("record appends; capacity evicts the oldest") {
    TimeSeriesStore store(default_workload(), 16);
    store.record(cv_sample(1.0, 5.0));
    CHECK(store.size(ServiceKind::CV) == 1);

    for (int i = 2; i <= 17; ++i) store.record(cv_sample(i, 5.0));
    CHECK(store.size(ServiceKind::CV) == 16);
    CHECK(store.samples(ServiceKind::CV).front().timestamp == 2.0);
}

TEST_CASE("record rejects out-of-range fields") {
    TimeSeriesStore store(default_workload());
    CHECK_THROWS_AS(store.record(cv_sample(1.0, 150.0)), std::domain_error);
    CHECK_THROWS_AS(store.record(cv_sample(1.0, 5.0, 999)), std::domain_error);
    CHECK_THROWS_AS(store.record(qr_sample(1.0, -1.0)), std::domain_error);
    store.record(cv_sample(5.0, 5.0));
    CHECK_THROWS_AS(store.record(cv_sample(4.0, 5.0)), std::domain_error);
}

TEST_CASE("window mean averages throughput, keeps latest setpoints") {
    TimeSeriesStore store(default_workload());
    double tps[] = {4, 5, 6, 5, 5};
    for (int i = 0; i < 5; ++i) store.record(cv_sample(i + 1.0, tps[i]));
    ServiceSnapshot snap = store.window_mean(ServiceKind::CV, 5.0);
    CHECK(snap.throughput == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(snap.quality == 192);

    SUBCASE("single sample is the identity") {
        TimeSeriesStore one(default_workload());
        one.record(qr_sample(3.0, 42.0));
        ServiceSnapshot s = one.window_mean(ServiceKind::QR, 5.0);
        CHECK(s.throughput == 42.0);
        CHECK(s.quality == 500);
        CHECK(!s.model_size.has_value());
    }

    SUBCASE("mid-window setpoint change resolves to the latest value") {
        TimeSeriesStore st(default_workload());
        st.record(cv_sample(1.0, 5.0, 288, 3));
        st.record(cv_sample(2.0, 5.0, 288, 3));
        st.record(cv_sample(3.0, 5.0, 320, 3));
        ServiceSnapshot s = st.window_mean(ServiceKind::CV, 3.0);
        CHECK(s.quality == 320);
    }
}

TEST_CASE("window mean: cold store raises NoDataError") {
    TimeSeriesStore store(default_workload());
    CHECK_THROWS_AS(store.window_mean(ServiceKind::CV, 5.0), NoDataError);
    store.record(cv_sample(1.0, 5.0));
    CHECK_THROWS_AS(store.window_mean(ServiceKind::QR, 5.0), NoDataError);
}

TEST_CASE("window never reads outside (now - w, now]") {
    TimeSeriesStore store(default_workload());
    store.record(cv_sample(1.0, 99.0));   // exactly now - w: excluded
    store.record(cv_sample(2.0, 10.0));
    store.record(cv_sample(6.0, 20.0));   // exactly now: included
    store.record(cv_sample(7.0, 99.0));   // future: excluded
    ServiceSnapshot snap = store.window_mean(ServiceKind::CV, 6.0, 5.0);
    CHECK(snap.throughput == doctest::Approx(15.0).epsilon(1e-12));

    TimeSeriesStore constant(default_workload());
    for (int i = 1; i <= 20; ++i) constant.record(qr_sample(i, 33.0));
    CHECK(constant.window_mean(ServiceKind::QR, 20.0).throughput == 33.0);
}

TEST_CASE("csv export/import round trip is byte identical") {
    TimeSeriesStore store(default_workload());
    std::string p1 = "ts_export_1.csv", p2 = "ts_export_2.csv";

    SUBCASE("empty store: header only") {
        CHECK(store.export_csv(p1) == 0);
        CHECK(slurp(p1) == "timestamp,service,quality,model_size,cores,throughput\n");
    }

    SUBCASE("rows and round trip") {
        for (int i = 0; i < 5; ++i) {
            store.record(cv_sample(i + 1.0, 5.0 + 0.1 * i, 192, 2, 2.25));
            store.record(qr_sample(i + 1.0, 60.0 / 7.0 * (i + 1)));
        }
        CHECK(store.export_csv(p1) == 10);
        TimeSeriesStore back = TimeSeriesStore::import_csv(p1, default_workload());
        CHECK(back.size(ServiceKind::CV) == 5);
        CHECK(back.export_csv(p2) == 10);
        CHECK(slurp(p1) == slurp(p2));
    }

    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

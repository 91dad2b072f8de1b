#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "edgescale/ask.hpp"

using namespace edgescale;

namespace {

// dense feasible-pair maximum of the model objective: per lattice combo,
// prefix-max over the QR core grid, then scan the CV grid
double grid_max_objective(const RegressionModel& cv_model,
                          const RegressionModel& qr_model, const Workload& w,
                          double step) {
    std::vector<double> grid;
    for (double c = kMinCores; c < 8.0 - step / 2; c += step) grid.push_back(c);
    double c_phy = w.device.c_phy;
    double best = -1.0;
    for (int q = 128; q <= 320; q += 32)
        for (int m = 1; m <= 5; ++m)
            for (int qq = 300; qq <= 1000; qq += 100) {
                std::vector<double> qr_phi(grid.size());
                for (std::size_t i = 0; i < grid.size(); ++i) {
                    ServiceConfig cfg{qq, std::nullopt, grid[i]};
                    qr_phi[i] = service_fulfillment(
                        cfg, regression_predict(qr_model, ServiceKind::QR, cfg), w.qr);
                }
                std::vector<double> prefix(qr_phi);
                for (std::size_t i = 1; i < prefix.size(); ++i)
                    prefix[i] = std::max(prefix[i - 1], prefix[i]);
                for (std::size_t i = 0; i < grid.size(); ++i) {
                    double budget = c_phy - grid[i];
                    if (budget < kMinCores) break;
                    auto hi = std::upper_bound(grid.begin(), grid.end(), budget + 1e-12);
                    std::size_t count = static_cast<std::size_t>(hi - grid.begin());
                    if (count == 0) break;
                    ServiceConfig cfg{q, m, grid[i]};
                    double phi_cv = service_fulfillment(
                        cfg, regression_predict(cv_model, ServiceKind::CV, cfg), w.cv);
                    best = std::max(best, phi_cv + prefix[count - 1]);
                }
            }
    return best;
}

RegressionModel random_cv_model(Rng& rng) {
    RegressionModel m;
    m.beta = {rng.uniform(-40.0, 60.0), rng.uniform(-0.3, 0.05),
              rng.uniform(-8.0, 1.0), rng.uniform(-1.0, 8.0)};
    m.sample_count = 100;
    return m;
}

RegressionModel random_qr_model(Rng& rng) {
    RegressionModel m;
    m.beta = {rng.uniform(-60.0, 120.0), rng.uniform(-0.25, 0.02),
              rng.uniform(-2.0, 20.0)};
    m.sample_count = 100;
    return m;
}

}  // namespace

TEST_CASE("explore: every draw honors bounds and the core budget") {
    Workload w = default_workload();
    AskAgent agent(w, AskConfig{}, 7);
    std::set<int> cv_qualities;
    for (int i = 0; i < 1000; ++i) {
        Assignment a = agent.explore_action();
        CHECK(a.cv.quality >= 128);
        CHECK(a.cv.quality <= 320);
        CHECK((a.cv.quality - 128) % 32 == 0);
        CHECK(*a.cv.model_size >= 1);
        CHECK(*a.cv.model_size <= 5);
        CHECK(a.qr.quality >= 300);
        CHECK(a.qr.quality <= 1000);
        CHECK((a.qr.quality - 300) % 100 == 0);
        CHECK(a.cv.cores >= kMinCores);
        CHECK(a.qr.cores >= kMinCores);
        CHECK(a.total_cores() <= w.device.c_phy + 1e-9);
        cv_qualities.insert(a.cv.quality);
    }
    // coverage: all 7 CV quality levels appear across 1000 uniform draws
    CHECK(cv_qualities.size() == 7);
}

TEST_CASE("explore: seeded draws are reproducible") {
    Workload w = default_workload();
    AskAgent a(w, AskConfig{}, 99), b(w, AskConfig{}, 99);
    for (int i = 0; i < 50; ++i) {
        Assignment x = a.explore_action(), y = b.explore_action();
        CHECK(x.cv.quality == y.cv.quality);
        CHECK(x.cv.cores == y.cv.cores);
        CHECK(x.qr.cores == y.qr.cores);
    }
}

TEST_CASE("fit: exact recovery on a noiseless linear law") {
    Workload w = default_workload();
    TimeSeriesStore store(w);
    Rng rng(5);
    for (int i = 0; i < 40; ++i) {
        MetricSample cv;
        cv.timestamp = i + 1.0;
        cv.service = ServiceKind::CV;
        cv.quality = 128 + 32 * static_cast<int>(rng.uniform_index(7));
        cv.model_size = 1 + static_cast<int>(rng.uniform_index(5));
        cv.cores = rng.uniform(0.5, 7.0);
        cv.throughput = 3.0 + 0.01 * cv.quality - 1.0 * *cv.model_size + 2.0 * cv.cores;
        store.record(cv);
        MetricSample qr;
        qr.timestamp = i + 1.0;
        qr.service = ServiceKind::QR;
        qr.quality = 300 + 100 * static_cast<int>(rng.uniform_index(8));
        qr.cores = rng.uniform(0.5, 7.0);
        qr.throughput = 90.0 - 0.05 * qr.quality + 1.5 * qr.cores;
        store.record(qr);
    }
    auto [cv_model, qr_model] = fit_regression(store);
    CHECK(cv_model.beta[0] == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(cv_model.beta[1] == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(cv_model.beta[2] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(cv_model.beta[3] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(qr_model.beta[1] == doctest::Approx(-0.05).epsilon(1e-6));
    CHECK(qr_model.beta[2] == doctest::Approx(1.5).epsilon(1e-6));
}

TEST_CASE("fit: 20 noisy exploration iterations predict the lattice within 25") {
    // Monte-Carlo check against the noiseless ground truth
    Workload w = default_workload();
    GroundTruthModel gt;
    TimeSeriesStore store(w);
    AskAgent agent(w, AskConfig{}, 4242);
    Rng rng(17);
    double t = 0.0;
    for (int i = 0; i < 20; ++i) {
        Assignment a = agent.explore_action();
        for (int sec = 0; sec < 5; ++sec) {
            t += 1.0;
            MetricSample cv;
            cv.timestamp = t;
            cv.service = ServiceKind::CV;
            cv.quality = a.cv.quality;
            cv.model_size = a.cv.model_size;
            cv.cores = a.cv.cores;
            cv.throughput = ground_truth_throughput(ServiceKind::CV, a.cv, gt, true, rng);
            store.record(cv);
            MetricSample qr;
            qr.timestamp = t;
            qr.service = ServiceKind::QR;
            qr.quality = a.qr.quality;
            qr.cores = a.qr.cores;
            qr.throughput = ground_truth_throughput(ServiceKind::QR, a.qr, gt, true, rng);
            store.record(qr);
        }
    }
    auto [cv_model, qr_model] = fit_regression(store);

    double se = 0.0;
    int n = 0;
    for (int q = 128; q <= 320; q += 32)
        for (int m = 1; m <= 5; ++m)
            for (double c = 0.5; c <= 7.5; c += 0.5) {
                ServiceConfig cfg{q, m, c};
                double err = regression_predict(cv_model, ServiceKind::CV, cfg) -
                             ground_truth_throughput(ServiceKind::CV, cfg, gt);
                se += err * err;
                ++n;
            }
    CHECK(std::sqrt(se / n) < 25.0);
    se = 0.0;
    n = 0;
    for (int q = 300; q <= 1000; q += 100)
        for (double c = 0.5; c <= 7.5; c += 0.5) {
            ServiceConfig cfg{q, std::nullopt, c};
            double err = regression_predict(qr_model, ServiceKind::QR, cfg) -
                         ground_truth_throughput(ServiceKind::QR, cfg, gt);
            se += err * err;
            ++n;
        }
    CHECK(std::sqrt(se / n) < 25.0);
}

TEST_CASE("fit: duplicate-only history hits the rank-deficiency path") {
    Workload w = default_workload();
    TimeSeriesStore store(w);
    for (int i = 0; i < 12; ++i) {
        MetricSample cv;
        cv.timestamp = i + 1.0;
        cv.service = ServiceKind::CV;
        cv.quality = 192;
        cv.model_size = 2;
        cv.cores = 2.0;
        cv.throughput = 8.0;
        store.record(cv);
        MetricSample qr;
        qr.timestamp = i + 1.0;
        qr.service = ServiceKind::QR;
        qr.quality = 500;
        qr.cores = 2.0;
        qr.throughput = 60.0;
        store.record(qr);
    }
    CHECK_THROWS_AS(fit_regression(store), std::runtime_error);

    // the agent stays in exploration when the fit degenerates
    AskConfig cfg;
    cfg.exploration_iterations = 4;
    AskAgent agent(w, cfg, 3);
    AgentObservation obs;
    obs.cv = ServiceSnapshot{192, 2, 2.0, 8.0};
    obs.qr = ServiceSnapshot{500, std::nullopt, 2.0, 60.0};
    obs.free_cores = 4.0;
    for (int c = 0; c < 4; ++c) agent.decide(obs, store);
    Assignment a = agent.decide(obs, store);  // fit fails, still exploring
    CHECK(agent.exploring());
    CHECK(a.total_cores() <= 8.0 + 1e-9);
}

TEST_CASE("optimize: ground-truth-tangent models recover the oracle split") {
    Workload w = default_workload();
    // exact tangents of the true surface at the optimum lattice point
    RegressionModel cv_model;  // tp = 20 c / 15.1875 at (288, 3)
    double denom_cv = (288.0 / 128.0) * (288.0 / 128.0) * 3.0;
    cv_model.beta = {0.0, 0.0, 0.0, 20.0 / denom_cv};
    RegressionModel qr_model;  // tp = 15 c at 900
    qr_model.beta = {0.0, 0.0, 135.0 / 9.0};
    // quality terms do not enter the model; fulfillment drives quality to 288/900
    Assignment a = optimize(cv_model, qr_model, w);
    CHECK(a.cv.quality == 288);
    CHECK(*a.cv.model_size == 3);
    CHECK(a.qr.quality == 900);
    CHECK(a.cv.cores == doctest::Approx(3.80).epsilon(0.006));
    CHECK(a.qr.cores == doctest::Approx(4.00).epsilon(0.006));

    auto [oracle_a, oracle_phi] = brute_force_oracle(GroundTruthModel{}, w);
    CHECK(std::abs(a.cv.cores - oracle_a.cv.cores) < 0.02);
    CHECK(std::abs(a.qr.cores - oracle_a.qr.cores) < 0.02);
}

TEST_CASE("optimize: QR model ignoring cores leaves the spare cores to CV") {
    Workload w = default_workload();
    RegressionModel cv_model;
    cv_model.beta = {0.0, 0.0, 0.0, 0.5};  // never saturates: tp(7.5) = 3.75 < 5
    RegressionModel qr_model;
    qr_model.beta = {70.0, 0.0, 0.0};  // cores coefficient zero
    Assignment a = optimize(cv_model, qr_model, w);
    CHECK(a.cv.cores == doctest::Approx(7.5).epsilon(1e-9));
    CHECK(a.qr.cores == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("optimize: dominates the verification grid on random models") {
    Workload w = default_workload();
    Rng rng(20240521);
    for (int trial = 0; trial < 100; ++trial) {
        RegressionModel cv_model = random_cv_model(rng);
        RegressionModel qr_model = random_qr_model(rng);
        Assignment a = optimize(cv_model, qr_model, w);
        CHECK(a.total_cores() <= w.device.c_phy + 1e-9);
        double opt = model_objective(a, cv_model, qr_model, w);
        double grid = grid_max_objective(cv_model, qr_model, w, 0.05);
        CHECK(opt >= grid - 1e-6);
    }
}

TEST_CASE("optimize: breakpoint search matches a dense 1d split scan") {
    Workload w = default_workload();
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        RegressionModel cv_model = random_cv_model(rng);
        RegressionModel qr_model = random_qr_model(rng);
        Assignment a = optimize(cv_model, qr_model, w);
        double opt = model_objective(a, cv_model, qr_model, w);
        // dense scan over full-allocation splits
        double best = -1.0;
        for (double c = 0.5; c <= 7.5 + 1e-12; c += 0.001) {
            Assignment cand = a;
            cand.cv.cores = c;
            cand.qr.cores = 8.0 - c;
            best = std::max(best, model_objective(cand, cv_model, qr_model, w));
        }
        CHECK(opt >= best - 1e-6);
    }
}

TEST_CASE("oracle: default ground truth peaks at full fulfillment") {
    Workload w = default_workload();
    auto [a, phi] = brute_force_oracle(GroundTruthModel{}, w);
    CHECK(phi == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.cv.quality == 288);
    CHECK(*a.cv.model_size == 3);
    CHECK(a.qr.quality == 900);
    CHECK(a.cv.cores == doctest::Approx(3.80).epsilon(0.002));
    CHECK(a.qr.cores == doctest::Approx(4.00).epsilon(0.002));
    // hand arithmetic of the kappa calibration: 3.7969 + 4.0 cores needed
    CHECK(20.0 * a.cv.cores / (2.25 * 2.25 * 3.0) >= 5.0);
    CHECK(135.0 * a.qr.cores / 9.0 >= 60.0);
}

TEST_CASE("oracle: halved CV kappa cannot reach full fulfillment") {
    Workload w = default_workload();
    GroundTruthModel gt;
    gt.kappa_cv /= 2.0;
    auto [a, phi] = brute_force_oracle(gt, w);
    CHECK(phi < 1.0);
    CHECK(phi > 0.5);
    CHECK(a.total_cores() <= 8.0 + 1e-9);
}

TEST_CASE("oracle: a 16-core device has slack at the optimum") {
    Workload w = default_workload(16.0);
    auto [a, phi] = brute_force_oracle(GroundTruthModel{}, w);
    CHECK(phi == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.total_cores() < 16.0 - 1.0);
}

TEST_CASE("ask agent: exploration phase boundary at the configured cycle") {
    Workload w = default_workload();
    GroundTruthModel gt;
    Environment env(w, gt, default_initial_assignment(), 1);
    TimeSeriesStore store(w);
    for (const auto& s : env.warmup().samples) store.record(s);
    AskAgent agent(w, AskConfig{}, 5);

    for (int cycle = 0; cycle < 25; ++cycle) {
        bool was_exploring = agent.exploring();
        AgentTelemetry t = run_cycle(agent, env, store);
        (void)t;
        if (cycle < 20) {
            CHECK(was_exploring);
        } else {
            CHECK(!agent.exploring());
        }
    }
}

TEST_CASE("refitting on noiseless linear data keeps the model objective flat") {
    // with an exactly linear law the fit is exact at every refit, so the
    // optimized objective cannot degrade as samples accumulate
    Workload w = default_workload();
    TimeSeriesStore store(w);
    Rng rng(13);
    double t = 0.0;
    auto add_batch = [&](int count) {
        for (int i = 0; i < count; ++i) {
            t += 1.0;
            MetricSample cv;
            cv.timestamp = t;
            cv.service = ServiceKind::CV;
            cv.quality = 128 + 32 * static_cast<int>(rng.uniform_index(7));
            cv.model_size = 1 + static_cast<int>(rng.uniform_index(5));
            cv.cores = rng.uniform(0.5, 7.0);
            cv.throughput = 1.0 + 0.6 * cv.cores;
            store.record(cv);
            MetricSample qr;
            qr.timestamp = t;
            qr.service = ServiceKind::QR;
            qr.quality = 300 + 100 * static_cast<int>(rng.uniform_index(8));
            qr.cores = rng.uniform(0.5, 7.0);
            qr.throughput = 10.0 + 7.0 * qr.cores;
            store.record(qr);
        }
    };
    add_batch(30);
    auto [cv1, qr1] = fit_regression(store);
    double first = model_objective(optimize(cv1, qr1, w), cv1, qr1, w);
    for (int round = 0; round < 5; ++round) {
        add_batch(20);
        auto [cv2, qr2] = fit_regression(store);
        double next = model_objective(optimize(cv2, qr2, w), cv2, qr2, w);
        CHECK(next >= first - 1e-9);
        first = next;
    }
}

#include "edgescale/ask.hpp"

#include <algorithm>
#include <cmath>

namespace edgescale {

namespace {

double clamp_tp(double v) { return std::clamp(v, 0.0, 100.0); }

// min(1, max(0, a + b*c) / target): the tp fulfillment as a function of
// cores; monotone piecewise-linear with clamp crossings at (0 - a)/b and
// (target - a)/b.
double tp_phi(double a, double b, double c, double target) {
    return std::min(1.0, std::max(0.0, a + b * c) / target);
}

struct ServiceLine {
    double a = 0.0;  // intercept for the fixed discrete combo
    double b = 0.0;  // slope on the service's own cores
    double target = 0.0;
    double phi_static = 0.0;  // quality/model fulfillment sum for the combo
    double slo_count = 0.0;
};

ServiceLine cv_line(const RegressionModel& m, int quality, int model,
                    const Workload& w) {
    ServiceLine l;
    l.a = m.beta[0] + m.beta[1] * quality + m.beta[2] * model;
    l.b = m.beta[3];
    l.target = *w.cv.variable("throughput").slo_target;
    l.phi_static =
        slo_fulfillment(quality, {"quality", *w.cv.variable("quality").slo_target}) +
        slo_fulfillment(model, {"model_size", *w.cv.variable("model_size").slo_target});
    l.slo_count = static_cast<double>(w.cv.slos.size());
    return l;
}

ServiceLine qr_line(const RegressionModel& m, int quality, const Workload& w) {
    ServiceLine l;
    l.a = m.beta[0] + m.beta[1] * quality;
    l.b = m.beta[2];
    l.target = *w.qr.variable("throughput").slo_target;
    l.phi_static =
        slo_fulfillment(quality, {"quality", *w.qr.variable("quality").slo_target});
    l.slo_count = static_cast<double>(w.qr.slos.size());
    return l;
}

double line_phi(const ServiceLine& l, double cores) {
    return (l.phi_static + tp_phi(l.a, l.b, cores, l.target)) / l.slo_count;
}

// smallest cores in [kMinCores, assigned] keeping the service's fulfillment;
// tp_phi is monotone in cores, so only the clamp crossings and the interval
// ends are candidates
double trim_cores(const ServiceLine& l, double assigned) {
    double keep = line_phi(l, assigned);
    std::vector<double> cands = {kMinCores};
    if (std::abs(l.b) > 1e-12) {
        for (double boundary : {0.0, l.target}) {
            double c = (boundary - l.a) / l.b;
            if (c > kMinCores && c < assigned) cands.push_back(c);
        }
    }
    cands.push_back(assigned);
    std::sort(cands.begin(), cands.end());
    for (double c : cands)
        if (line_phi(l, c) >= keep - 1e-12) return c;
    return assigned;
}

}  // namespace

double regression_predict(const RegressionModel& model, ServiceKind kind,
                          const ServiceConfig& config) {
    if (kind == ServiceKind::CV) {
        if (model.beta.size() != 4)
            throw std::domain_error("CV regression has wrong predictor count");
        return clamp_tp(model.beta[0] + model.beta[1] * config.quality +
                        model.beta[2] * config.model_size.value_or(0) +
                        model.beta[3] * config.cores);
    }
    if (model.beta.size() != 3)
        throw std::domain_error("QR regression has wrong predictor count");
    return clamp_tp(model.beta[0] + model.beta[1] * config.quality +
                    model.beta[2] * config.cores);
}

std::pair<RegressionModel, RegressionModel> fit_regression(
    const TimeSeriesStore& store) {
    LgbnModel lgbn = fit_lgbn(store);  // same least-squares machinery
    auto convert = [](const LinearGaussian& lg) {
        RegressionModel m;
        m.beta = lg.beta;
        m.sigma = lg.sigma;
        m.r2 = lg.r2;
        m.sample_count = lg.sample_count;
        return m;
    };
    return {convert(lgbn.cv), convert(lgbn.qr)};
}

double model_objective(const Assignment& a, const RegressionModel& cv_model,
                       const RegressionModel& qr_model, const Workload& workload) {
    double tp_cv = regression_predict(cv_model, ServiceKind::CV, a.cv);
    double tp_qr = regression_predict(qr_model, ServiceKind::QR, a.qr);
    return service_fulfillment(a.cv, tp_cv, workload.cv) +
           service_fulfillment(a.qr, tp_qr, workload.qr);
}

Assignment optimize(const RegressionModel& cv_model, const RegressionModel& qr_model,
                    const Workload& workload) {
    if (cv_model.beta.size() != 4 || qr_model.beta.size() != 3)
        throw std::domain_error("optimize requires fitted models");
    const double c_phy = workload.device.c_phy;
    const double cap = workload.cv.variable("cores").max - 0.05;  // strict upper bound
    const double lo = kMinCores;
    const double hi = std::min(c_phy - kMinCores, cap);
    if (lo > hi) throw std::domain_error("infeasible core bounds");

    // c_qr follows the split: everything not given to CV, capped below 8
    auto qr_cores_at = [&](double c) { return std::min(c_phy - c, cap); };

    double best_obj = -1.0;
    Assignment best;
    ServiceLine best_cv_line, best_qr_line;

    for (int q = 128; q <= 320; q += 32) {
        for (int m = 1; m <= 5; ++m) {
            ServiceLine lcv = cv_line(cv_model, q, m, workload);
            for (int qq = 300; qq <= 1000; qq += 100) {
                ServiceLine lqr = qr_line(qr_model, qq, workload);
                // candidate splits: interval ends, clamp crossings of both
                // tp terms, and the point where the QR cap stops binding
                std::vector<double> cands = {lo, hi};
                if (std::abs(lcv.b) > 1e-12)
                    for (double boundary : {0.0, lcv.target}) {
                        double c = (boundary - lcv.a) / lcv.b;
                        if (c > lo && c < hi) cands.push_back(c);
                    }
                if (std::abs(lqr.b) > 1e-12)
                    for (double boundary : {0.0, lqr.target}) {
                        // crossing in QR cores, mapped to the un-capped split
                        double cq = (boundary - lqr.a) / lqr.b;
                        double c = c_phy - cq;
                        if (c > lo && c < hi) cands.push_back(c);
                    }
                double cap_switch = c_phy - cap;
                if (cap_switch > lo && cap_switch < hi) cands.push_back(cap_switch);
                std::sort(cands.begin(), cands.end());
                for (double c : cands) {
                    double obj = line_phi(lcv, c) + line_phi(lqr, qr_cores_at(c));
                    if (obj > best_obj) {
                        best_obj = obj;
                        best.cv = ServiceConfig{q, m, c};
                        best.qr = ServiceConfig{qq, std::nullopt, qr_cores_at(c)};
                        best_cv_line = lcv;
                        best_qr_line = lqr;
                    }
                }
            }
        }
    }
    // release cores neither service needs for the fulfillment it achieved
    best.cv.cores = trim_cores(best_cv_line, best.cv.cores);
    best.qr.cores = trim_cores(best_qr_line, best.qr.cores);
    return best;
}

std::pair<Assignment, double> brute_force_oracle(const GroundTruthModel& model,
                                                 const Workload& workload,
                                                 double core_step) {
    model.validate();
    const double c_phy = workload.device.c_phy;
    const double cores_max = workload.cv.variable("cores").max;  // open bound
    std::vector<double> grid;
    for (int k = 0;; ++k) {  // indexed to avoid accumulation drift
        double c = kMinCores + k * core_step;
        if (c >= cores_max - core_step / 2) break;
        grid.push_back(c);
    }

    double best_phi = -1.0;
    // tie order: smaller cv quality, cv model, qr quality, total cores, cv cores
    double best_total = 0.0;
    Assignment best;

    const Slo cv_q_slo{"quality", *workload.cv.variable("quality").slo_target};
    const Slo cv_m_slo{"model_size", *workload.cv.variable("model_size").slo_target};
    const Slo cv_tp_slo{"throughput", *workload.cv.variable("throughput").slo_target};
    const Slo qr_q_slo{"quality", *workload.qr.variable("quality").slo_target};
    const Slo qr_tp_slo{"throughput", *workload.qr.variable("throughput").slo_target};
    const double cv_slos = static_cast<double>(workload.cv.slos.size());
    const double qr_slos = static_cast<double>(workload.qr.slos.size());

    for (int q = 128; q <= 320; q += 32) {
        for (int m = 1; m <= 5; ++m) {
            double phi_cv_static =
                slo_fulfillment(q, cv_q_slo) + slo_fulfillment(m, cv_m_slo);
            for (int qq = 300; qq <= 1000; qq += 100) {
                double phi_qr_static = slo_fulfillment(qq, qr_q_slo);
                for (double c1 : grid) {
                    ServiceConfig cv_cfg{q, m, c1};
                    double tp1 = ground_truth_throughput(ServiceKind::CV, cv_cfg, model);
                    double phi1 =
                        (phi_cv_static + slo_fulfillment(tp1, cv_tp_slo)) / cv_slos;
                    for (double c2 : grid) {
                        if (c1 + c2 > c_phy + 1e-9) break;
                        ServiceConfig qr_cfg{qq, std::nullopt, c2};
                        double tp2 =
                            ground_truth_throughput(ServiceKind::QR, qr_cfg, model);
                        double phi2 =
                            (phi_qr_static + slo_fulfillment(tp2, qr_tp_slo)) / qr_slos;
                        double phi = (phi1 + phi2) / 2.0;
                        if (phi > best_phi ||
                            (phi == best_phi && c1 + c2 < best_total - 1e-12)) {
                            best_phi = phi;
                            best_total = c1 + c2;
                            best.cv = cv_cfg;
                            best.qr = qr_cfg;
                        }
                    }
                }
            }
        }
    }
    return {best, best_phi};
}

AskAgent::AskAgent(Workload workload, AskConfig config, std::uint64_t seed)
    : workload_(std::move(workload)), config_(config), rng_(seed) {
    if (config_.exploration_iterations < 4)
        throw std::domain_error("exploration_iterations below predictors + 2");
}

Assignment AskAgent::explore_action() {
    const auto& qv = workload_.cv.variable("quality");
    const auto& mv = workload_.cv.variable("model_size");
    const auto& qq = workload_.qr.variable("quality");
    auto lattice = [&](const VariableSpec& v) {
        auto levels = static_cast<std::size_t>(
            std::llround((v.max - v.min) / v.step)) + 1;
        return static_cast<int>(v.min) +
               static_cast<int>(rng_.uniform_index(levels)) *
                   static_cast<int>(v.step);
    };
    Assignment a;
    a.cv.quality = lattice(qv);
    a.cv.model_size = lattice(mv);
    double c_phy = workload_.device.c_phy;
    double hi = std::min(workload_.cv.variable("cores").max - kCoreStep,
                         c_phy - kMinCores);
    a.cv.cores = rng_.uniform(kMinCores, hi);
    a.qr.quality = lattice(qq);
    a.qr.cores = rng_.uniform(kMinCores, hi);
    double total = a.total_cores();
    if (total > c_phy) {
        double scale = c_phy / total;
        a.cv.cores = std::max(kMinCores, a.cv.cores * scale);
        a.qr.cores = std::max(kMinCores, a.qr.cores * scale);
        if (a.total_cores() > c_phy) {  // flooring can push the sum back up
            if (a.cv.cores > a.qr.cores)
                a.cv.cores = c_phy - a.qr.cores;
            else
                a.qr.cores = c_phy - a.cv.cores;
        }
    }
    return a;
}

Assignment AskAgent::decide(const AgentObservation& obs, const TimeSeriesStore& store) {
    (void)obs;
    int cycle = cycle_++;
    if (cycle < config_.exploration_iterations) return explore_action();
    bool refit_due = !fitted_ || cycle - last_fit_cycle_ >= config_.refit_every;
    if (refit_due) {
        try {
            auto models = fit_regression(store);
            cv_model_ = std::move(models.first);
            qr_model_ = std::move(models.second);
            fitted_ = true;
            last_fit_cycle_ = cycle;
        } catch (const std::exception&) {
            if (!fitted_) return explore_action();  // stay exploring one more cycle
        }
    }
    return optimize(cv_model_, qr_model_, workload_);
}

}  // namespace edgescale

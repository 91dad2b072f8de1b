#include "edgescale/env.hpp"

#include <algorithm>
#include <cmath>

#include "edgescale/util.hpp"
#include "linfit.hpp"

namespace edgescale {

void GroundTruthModel::validate() const {
    if (kappa_cv <= 0.0 || kappa_qr <= 0.0)
        throw std::domain_error("kappa must be > 0");
    if (noise_sigma < 0.0) throw std::domain_error("noise_sigma must be >= 0");
    if (q0_cv <= 0.0 || q0_qr <= 0.0) throw std::domain_error("q0 must be > 0");
}

namespace {

double clamp_tp(double v) { return std::clamp(v, 0.0, 100.0); }

double mean_throughput(ServiceKind kind, const ServiceConfig& config,
                       const GroundTruthModel& model) {
    switch (kind) {
        case ServiceKind::CV: {
            if (!config.model_size)
                throw std::domain_error("CV config lacks model_size");
            double rq = config.quality / model.q0_cv;
            return model.kappa_cv * config.cores /
                   (rq * rq * static_cast<double>(*config.model_size));
        }
        case ServiceKind::QR: {
            double rq = config.quality / model.q0_qr;
            return model.kappa_qr * config.cores / (rq * rq);
        }
    }
    throw std::domain_error("unknown service kind");
}

}  // namespace

double ground_truth_throughput(ServiceKind kind, const ServiceConfig& config,
                               const GroundTruthModel& model) {
    return clamp_tp(mean_throughput(kind, config, model));
}

double ground_truth_throughput(ServiceKind kind, const ServiceConfig& config,
                               const GroundTruthModel& model, bool noisy,
                               Rng& rng) {
    double mu = mean_throughput(kind, config, model);
    if (noisy) mu *= 1.0 + rng.normal(0.0, model.noise_sigma);
    return clamp_tp(mu);
}

Environment::Environment(Workload workload, GroundTruthModel model,
                         Assignment initial, std::uint64_t seed)
    : workload_(std::move(workload)),
      model_(model),
      config_(initial),
      rng_(seed) {
    model_.validate();
    validate_config(config_.cv, workload_.cv);
    validate_config(config_.qr, workload_.qr);
    if (config_.total_cores() > workload_.device.c_phy + 1e-9)
        throw ConstraintViolation("initial allocation exceeds c_phy");
}

StepOutcome Environment::emit_batches(int seconds) {
    StepOutcome out;
    out.samples.reserve(static_cast<std::size_t>(seconds) * 2);
    for (int sec = 0; sec < seconds; ++sec) {
        sim_time_ += 1.0;
        for (ServiceKind kind : {ServiceKind::CV, ServiceKind::QR}) {
            const ServiceConfig& cfg =
                kind == ServiceKind::CV ? config_.cv : config_.qr;
            MetricSample s;
            s.timestamp = sim_time_;
            s.service = kind;
            s.quality = cfg.quality;
            s.model_size = cfg.model_size;
            s.cores = cfg.cores;
            s.throughput = ground_truth_throughput(kind, cfg, model_,
                                                   model_.noise_sigma > 0.0, rng_);
            out.samples.push_back(s);
        }
    }
    out.free_cores = workload_.device.c_phy - config_.total_cores();
    return out;
}

StepOutcome Environment::warmup(int seconds) { return emit_batches(seconds); }

StepOutcome Environment::step(const Assignment& target, int seconds) {
    if (target.total_cores() > workload_.device.c_phy + 1e-9)
        throw ConstraintViolation(
            "core budget violated: " + format_double(target.total_cores()) +
            " allocated of " + format_double(workload_.device.c_phy));
    validate_config(target.cv, workload_.cv);
    validate_config(target.qr, workload_.qr);
    config_ = target;
    StepOutcome out = emit_batches(seconds);
    ++step_index_;
    return out;
}

Assignment default_initial_assignment() {
    Assignment a;
    a.cv = ServiceConfig{192, 2, 2.0};
    a.qr = ServiceConfig{500, std::nullopt, 2.0};
    return a;
}

namespace {

LinearGaussian fit_service(ServiceKind kind,
                           const std::vector<const MetricSample*>& rows) {
    bool has_model = kind == ServiceKind::CV;
    Eigen::Index p = has_model ? 4 : 3;
    std::vector<std::string> names = {"intercept", "quality", "cores"};
    if (has_model) names = {"intercept", "quality", "model_size", "cores"};
    auto n = static_cast<Eigen::Index>(rows.size());
    if (n < p + 1)  // predictors + 2, counting the intercept column in p
        throw std::domain_error(std::string(to_string(kind)) + ": need at least " +
                                std::to_string(p + 1) + " samples, got " +
                                std::to_string(n));
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const MetricSample& s = *rows[static_cast<std::size_t>(i)];
        X(i, 0) = 1.0;
        X(i, 1) = s.quality;
        if (has_model) {
            X(i, 2) = s.model_size.value_or(0);
            X(i, 3) = s.cores;
        } else {
            X(i, 2) = s.cores;
        }
        y(i) = s.throughput;
    }
    OlsResult fit = ols(X, y, names);
    LinearGaussian lg;
    lg.beta.assign(fit.beta.data(), fit.beta.data() + fit.beta.size());
    lg.sigma = fit.sigma;
    lg.r2 = fit.r2;
    lg.sample_count = static_cast<std::size_t>(n);
    return lg;
}

double linear_mean(const LinearGaussian& lg, ServiceKind kind,
                   const ServiceConfig& config) {
    if (kind == ServiceKind::CV) {
        if (lg.beta.size() != 4)
            throw std::domain_error("CV model has wrong predictor count");
        return lg.beta[0] + lg.beta[1] * config.quality +
               lg.beta[2] * config.model_size.value_or(0) +
               lg.beta[3] * config.cores;
    }
    if (lg.beta.size() != 3)
        throw std::domain_error("QR model has wrong predictor count");
    return lg.beta[0] + lg.beta[1] * config.quality + lg.beta[2] * config.cores;
}

}  // namespace

LgbnModel fit_lgbn(const std::vector<MetricSample>& history) {
    std::vector<const MetricSample*> cv_rows;
    std::vector<const MetricSample*> qr_rows;
    for (const auto& s : history)
        (s.service == ServiceKind::CV ? cv_rows : qr_rows).push_back(&s);
    LgbnModel model;
    model.cv = fit_service(ServiceKind::CV, cv_rows);
    model.qr = fit_service(ServiceKind::QR, qr_rows);
    return model;
}

LgbnModel fit_lgbn(const TimeSeriesStore& store) {
    std::vector<MetricSample> all;
    for (ServiceKind k : {ServiceKind::CV, ServiceKind::QR})
        for (const auto& s : store.samples(k)) all.push_back(s);
    return fit_lgbn(all);
}

double lgbn_predict(const LgbnModel& model, ServiceKind kind,
                    const ServiceConfig& config) {
    const LinearGaussian& lg = kind == ServiceKind::CV ? model.cv : model.qr;
    return clamp_tp(linear_mean(lg, kind, config));
}

double lgbn_sample(const LgbnModel& model, ServiceKind kind,
                   const ServiceConfig& config, Rng& rng) {
    const LinearGaussian& lg = kind == ServiceKind::CV ? model.cv : model.qr;
    double mu = linear_mean(lg, kind, config);
    return clamp_tp(lg.sigma > 0.0 ? rng.normal(mu, lg.sigma) : mu);
}

}  // namespace edgescale

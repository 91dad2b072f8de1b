#include "edgescale/aif.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "edgescale/util.hpp"

namespace edgescale {

int TpBins::index_of(double v) const {
    if (v < edges.front() - 1e-9 || v > edges.back() + 1e-9)
        throw std::domain_error("throughput " + format_double(v) +
                                " outside the binned range");
    for (int k = 0; k + 2 < static_cast<int>(edges.size()); ++k)
        if (v < edges[static_cast<std::size_t>(k) + 1]) return k;
    return count() - 1;  // the last bin is closed above
}

double TpBins::midpoint(int bin) const {
    return 0.5 * (edges[static_cast<std::size_t>(bin)] +
                  edges[static_cast<std::size_t>(bin) + 1]);
}

AifFactors AifFactors::defaults() {
    AifFactors f;
    for (int q = 128; q <= 320; q += 32) f.cv_quality.push_back(q);
    for (int m = 1; m <= 5; ++m) f.cv_model.push_back(m);
    for (int k = 0; k < 14; ++k) f.cores.push_back(0.5 + 0.5 * k);
    f.cv_tp.edges = {0.0, 1.0, 2.5, 5.0, 10.0, 25.0, 100.0};
    for (int q = 300; q <= 1000; q += 100) f.qr_quality.push_back(q);
    f.qr_tp.edges = {0.0, 15.0, 30.0, 45.0, 60.0, 80.0, 100.0};
    return f;
}

int AifFactors::level_of(const std::vector<double>& levels, double v) {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - v) < 1e-6) return static_cast<int>(i);
    throw std::domain_error("value " + format_double(v) + " is off the factor lattice");
}

AifState discretize(const AgentObservation& obs, const AifFactors& factors) {
    AifState s;
    s.cv_q = AifFactors::level_of(factors.cv_quality, obs.cv.quality);
    if (!obs.cv.model_size) throw std::domain_error("CV observation lacks model_size");
    s.cv_m = AifFactors::level_of(factors.cv_model, *obs.cv.model_size);
    s.cv_c = AifFactors::level_of(factors.cores, obs.cv.cores);
    s.cv_tp = factors.cv_tp.index_of(obs.cv.throughput);
    s.qr_q = AifFactors::level_of(factors.qr_quality, obs.qr.quality);
    s.qr_c = AifFactors::level_of(factors.cores, obs.qr.cores);
    s.qr_tp = factors.qr_tp.index_of(obs.qr.throughput);
    return s;
}

DirichletCpt::DirichletCpt(std::vector<int> config_dims, int tp_bins, double alpha0)
    : dims_(std::move(config_dims)), tp_bins_(tp_bins), alpha0_(alpha0) {
    if (tp_bins_ <= 0) throw std::domain_error("tp_bins must be > 0");
    if (alpha0_ <= 0.0) throw std::domain_error("alpha0 must be > 0");
    rows_ = 1;
    for (int d : dims_) {
        if (d <= 0) throw std::domain_error("factor cardinality must be > 0");
        rows_ *= static_cast<std::size_t>(d);
    }
    counts_.assign(rows_ * static_cast<std::size_t>(tp_bins_), alpha0_);
}

std::size_t DirichletCpt::row_of(const std::vector<int>& config) const {
    if (config.size() != dims_.size())
        throw std::domain_error("config index arity mismatch");
    std::size_t row = 0;
    for (std::size_t d = 0; d < dims_.size(); ++d) {
        if (config[d] < 0 || config[d] >= dims_[d])
            throw std::domain_error("config index out of range");
        row = row * static_cast<std::size_t>(dims_[d]) +
              static_cast<std::size_t>(config[d]);
    }
    return row;
}

void DirichletCpt::update(const std::vector<int>& config, int tp_bin) {
    counts_[row_of(config) * static_cast<std::size_t>(tp_bins_) +
            static_cast<std::size_t>(tp_bin)] += 1.0;
}

std::vector<double> DirichletCpt::predictive(const std::vector<int>& config) const {
    std::size_t base = row_of(config) * static_cast<std::size_t>(tp_bins_);
    std::vector<double> p(static_cast<std::size_t>(tp_bins_));
    double total = 0.0;
    for (int b = 0; b < tp_bins_; ++b) total += counts_[base + static_cast<std::size_t>(b)];
    for (int b = 0; b < tp_bins_; ++b)
        p[static_cast<std::size_t>(b)] = counts_[base + static_cast<std::size_t>(b)] / total;
    return p;
}

double DirichletCpt::row_total(const std::vector<int>& config) const {
    std::size_t base = row_of(config) * static_cast<std::size_t>(tp_bins_);
    double total = 0.0;
    for (int b = 0; b < tp_bins_; ++b) total += counts_[base + static_cast<std::size_t>(b)];
    return total;
}

double DirichletCpt::count(const std::vector<int>& config, int tp_bin) const {
    return counts_[row_of(config) * static_cast<std::size_t>(tp_bins_) +
                   static_cast<std::size_t>(tp_bin)];
}

void DirichletCpt::set_count(const std::vector<int>& config, int tp_bin, double value) {
    if (value < alpha0_ - 1e-12)
        throw std::domain_error("count below the pseudo-count floor");
    counts_[row_of(config) * static_cast<std::size_t>(tp_bins_) +
            static_cast<std::size_t>(tp_bin)] = value;
}

PreferenceModel PreferenceModel::build(const AifFactors& factors,
                                       const Workload& workload, double eta) {
    auto prefs = [&](const std::vector<double>& values, double target) {
        std::vector<double> c(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            c[i] = eta * std::min(values[i] / target, 1.0);
        return c;
    };
    auto tp_prefs = [&](const TpBins& bins, double target) {
        std::vector<double> c(static_cast<std::size_t>(bins.count()));
        for (int b = 0; b < bins.count(); ++b)
            c[static_cast<std::size_t>(b)] = eta * std::min(bins.midpoint(b) / target, 1.0);
        return c;
    };
    PreferenceModel p;
    p.cv_quality = prefs(factors.cv_quality, *workload.cv.variable("quality").slo_target);
    p.cv_model = prefs(factors.cv_model, *workload.cv.variable("model_size").slo_target);
    p.cv_cores.assign(factors.cores.size(), 0.0);  // no SLO on cores
    p.cv_tp = tp_prefs(factors.cv_tp, *workload.cv.variable("throughput").slo_target);
    p.qr_quality = prefs(factors.qr_quality, *workload.qr.variable("quality").slo_target);
    p.qr_cores.assign(factors.cores.size(), 0.0);
    p.qr_tp = tp_prefs(factors.qr_tp, *workload.qr.variable("throughput").slo_target);
    return p;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - top);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

double kl_onehot(const std::vector<double>& logits, int idx) {
    return -std::log(softmax(logits)[static_cast<std::size_t>(idx)]);
}

double kl_divergence(const std::vector<double>& q, const std::vector<double>& logits) {
    auto p = softmax(logits);
    double kl = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] > 0.0) kl += q[i] * (std::log(q[i]) - std::log(p[i]));
    return kl;
}

double dirichlet_info_gain(double row_total, int bins) {
    return (bins - 1) / (2.0 * row_total);
}

AifAgent::AifAgent(Workload workload, AifConfig config, std::uint64_t)
    : workload_(std::move(workload)),
      config_(config),
      factors_(AifFactors::defaults()),
      prefs_(PreferenceModel::build(factors_, workload_, config.eta)),
      cv_cpt_({static_cast<int>(factors_.cv_quality.size()),
               static_cast<int>(factors_.cv_model.size()),
               static_cast<int>(factors_.cores.size())},
              factors_.cv_tp.count(), config.alpha0),
      qr_cpt_({static_cast<int>(factors_.qr_quality.size()),
               static_cast<int>(factors_.cores.size())},
              factors_.qr_tp.count(), config.alpha0) {}

namespace {

// successor factor indices of one service action, clamped into the lattice
struct Successor {
    int q, m, c;
};

Successor successor_of(ServiceKind kind, const AifState& s, ServiceAction a,
                       const AifFactors& f) {
    bool cv = kind == ServiceKind::CV;
    Successor out{cv ? s.cv_q : s.qr_q, cv ? s.cv_m : 0, cv ? s.cv_c : s.qr_c};
    int q_max = static_cast<int>((cv ? f.cv_quality : f.qr_quality).size()) - 1;
    int m_max = static_cast<int>(f.cv_model.size()) - 1;
    int c_max = static_cast<int>(f.cores.size()) - 1;
    switch (a) {
        case ServiceAction::QualityDown: out.q = std::max(0, out.q - 1); break;
        case ServiceAction::QualityUp: out.q = std::min(q_max, out.q + 1); break;
        case ServiceAction::ModelDown: out.m = std::max(0, out.m - 1); break;
        case ServiceAction::ModelUp: out.m = std::min(m_max, out.m + 1); break;
        case ServiceAction::CoresDown: out.c = std::max(0, out.c - 1); break;
        case ServiceAction::CoresUp: out.c = std::min(c_max, out.c + 1); break;
        case ServiceAction::NoOp: break;
    }
    return out;
}

std::vector<double> onehot(std::size_t size, int idx) {
    std::vector<double> v(size, 0.0);
    v[static_cast<std::size_t>(idx)] = 1.0;
    return v;
}

}  // namespace

bool AifAgent::successor_in_lattice(ServiceKind kind, const AifState& state,
                                    ServiceAction action) const {
    // quality/model lattices coincide with the variable bounds, so only the
    // cores factor (capped at 7.0, while the budget allows 7.5) can escape
    int c = kind == ServiceKind::CV ? state.cv_c : state.qr_c;
    if (action == ServiceAction::CoresUp)
        return c + 1 < static_cast<int>(factors_.cores.size());
    if (action == ServiceAction::CoresDown) return c - 1 >= 0;
    return true;
}

ServicePrediction AifAgent::predict(ServiceKind kind, const AifState& state,
                                    ServiceAction action) const {
    Successor next = successor_of(kind, state, action, factors_);
    ServicePrediction p;
    if (kind == ServiceKind::CV) {
        p.controllables.push_back(onehot(factors_.cv_quality.size(), next.q));
        p.controllables.push_back(onehot(factors_.cv_model.size(), next.m));
        p.controllables.push_back(onehot(factors_.cores.size(), next.c));
        p.throughput = cv_cpt_.predictive({next.q, next.m, next.c});
        p.row_total = cv_cpt_.row_total({next.q, next.m, next.c});
    } else {
        p.controllables.push_back(onehot(factors_.qr_quality.size(), next.q));
        p.controllables.push_back(onehot(factors_.cores.size(), next.c));
        p.throughput = qr_cpt_.predictive({next.q, next.c});
        p.row_total = qr_cpt_.row_total({next.q, next.c});
    }
    return p;
}

double AifAgent::service_score(ServiceKind kind, const AifState& state,
                               ServiceAction action) const {
    Successor next = successor_of(kind, state, action, factors_);
    if (kind == ServiceKind::CV) {
        double risk = kl_onehot(prefs_.cv_quality, next.q) +
                      kl_onehot(prefs_.cv_model, next.m) +
                      kl_onehot(prefs_.cv_cores, next.c) +
                      kl_divergence(cv_cpt_.predictive({next.q, next.m, next.c}),
                                    prefs_.cv_tp);
        double novelty = dirichlet_info_gain(
            cv_cpt_.row_total({next.q, next.m, next.c}), factors_.cv_tp.count());
        return risk - config_.novelty_weight * novelty;
    }
    double risk = kl_onehot(prefs_.qr_quality, next.q) +
                  kl_onehot(prefs_.qr_cores, next.c) +
                  kl_divergence(qr_cpt_.predictive({next.q, next.c}), prefs_.qr_tp);
    double novelty = dirichlet_info_gain(qr_cpt_.row_total({next.q, next.c}),
                                         factors_.qr_tp.count());
    return risk - config_.novelty_weight * novelty;
}

double AifAgent::expected_free_energy(const AifState& state, JointAction action) const {
    return service_score(ServiceKind::CV, state, action.cv_action()) +
           service_score(ServiceKind::QR, state, action.qr_action());
}

JointAction AifAgent::select_action(const AgentObservation& obs) {
    AifState state = discretize(obs, factors_);

    // factorized scoring: 7 + 5 partial evaluations cover all 35 pairs
    std::vector<double> cv_scores(kCvActions.size());
    std::vector<double> qr_scores(kQrActions.size());
    for (std::size_t i = 0; i < kCvActions.size(); ++i)
        cv_scores[i] = service_score(ServiceKind::CV, state, kCvActions[i]);
    for (std::size_t j = 0; j < kQrActions.size(); ++j)
        qr_scores[j] = service_score(ServiceKind::QR, state, kQrActions[j]);

    JointAction best{static_cast<int>(kCvActions.size()) - 1,
                     static_cast<int>(kQrActions.size()) - 1};
    double best_g = 0.0;
    bool first = true;
    for (int i = 0; i < static_cast<int>(kCvActions.size()); ++i) {
        if (!successor_in_lattice(ServiceKind::CV, state, kCvActions[static_cast<std::size_t>(i)]))
            continue;
        for (int j = 0; j < static_cast<int>(kQrActions.size()); ++j) {
            if (!successor_in_lattice(ServiceKind::QR, state,
                                      kQrActions[static_cast<std::size_t>(j)]))
                continue;
            JointAction joint{i, j};
            if (!is_legal(obs, joint, workload_)) continue;
            double g = cv_scores[static_cast<std::size_t>(i)] +
                       qr_scores[static_cast<std::size_t>(j)];
            if (first || g < best_g) {  // strict: ties keep the lowest index
                best = joint;
                best_g = g;
                first = false;
            }
        }
    }
    return best;
}

Assignment AifAgent::decide(const AgentObservation& obs, const TimeSeriesStore&) {
    AifState state = discretize(obs, factors_);
    // the windowed observation reveals the outcome of the configuration that
    // was active during the last cycle; learn its throughput row
    cv_cpt_.update({state.cv_q, state.cv_m, state.cv_c}, state.cv_tp);
    qr_cpt_.update({state.qr_q, state.qr_c}, state.qr_tp);

    JointAction a = select_action(obs);
    last_action_ = a;
    return apply_joint_action(obs, a, workload_);
}

void AifAgent::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << "service,q_idx,m_idx,c_idx,tp_idx,count\n";
    cv_cpt_.for_each([&](const std::vector<int>& idx, int bin, double count) {
        out << "CV," << idx[0] << ',' << idx[1] << ',' << idx[2] << ',' << bin << ','
            << format_double(count) << '\n';
    });
    qr_cpt_.for_each([&](const std::vector<int>& idx, int bin, double count) {
        out << "QR," << idx[0] << ",," << idx[1] << ',' << bin << ','
            << format_double(count) << '\n';
    });
}

void AifAgent::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "service,q_idx,m_idx,c_idx,tp_idx,count")
        throw std::runtime_error("bad CPT checkpoint header");
    DirichletCpt cv(cv_cpt_.config_dims(), cv_cpt_.tp_bins(), cv_cpt_.alpha0());
    DirichletCpt qr(qr_cpt_.config_dims(), qr_cpt_.tp_bins(), qr_cpt_.alpha0());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 6)
            throw std::runtime_error("bad CPT checkpoint row: " + line);
        int bin = static_cast<int>(parse_long(fields[4]));
        double count = parse_double(fields[5]);
        if (fields[0] == "CV") {
            cv.set_count({static_cast<int>(parse_long(fields[1])),
                          static_cast<int>(parse_long(fields[2])),
                          static_cast<int>(parse_long(fields[3]))},
                         bin, count);
        } else if (fields[0] == "QR") {
            qr.set_count({static_cast<int>(parse_long(fields[1])),
                          static_cast<int>(parse_long(fields[3]))},
                         bin, count);
        } else {
            throw std::runtime_error("bad CPT checkpoint service: " + fields[0]);
        }
    }
    cv_cpt_ = std::move(cv);
    qr_cpt_ = std::move(qr);
}

}  // namespace edgescale

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgescale/agent.hpp"

namespace edgescale {

/// Throughput discretization: bins [e_k, e_{k+1}), the last bin closed.
struct TpBins {
    std::vector<double> edges;

    int count() const { return static_cast<int>(edges.size()) - 1; }
    int index_of(double v) const;       // throws std::domain_error out of range
    double midpoint(int bin) const;
};

/// The seven-factor discretization: quality/model levels are the action
/// lattices, cores share a half-core lattice, throughput uses coarse bins.
struct AifFactors {
    std::vector<double> cv_quality;  // 7 levels
    std::vector<double> cv_model;    // 5 levels
    std::vector<double> cores;       // 14 levels, 0.5 .. 7.0
    TpBins cv_tp;                    // 6 bins
    std::vector<double> qr_quality;  // 8 levels
    TpBins qr_tp;                    // 6 bins

    static AifFactors defaults();
    static int level_of(const std::vector<double>& levels, double v);
};

/// Discretized joint observation.
struct AifState {
    int cv_q = 0, cv_m = 0, cv_c = 0, cv_tp = 0;
    int qr_q = 0, qr_c = 0, qr_tp = 0;
};

AifState discretize(const AgentObservation& obs, const AifFactors& factors);

/// Dirichlet-parameterized CPT over throughput bins conditioned on the
/// configuration levels, initialized to a uniform pseudo-count.
class DirichletCpt {
public:
    DirichletCpt(std::vector<int> config_dims, int tp_bins, double alpha0);

    void update(const std::vector<int>& config, int tp_bin);  // N[tp | config] += 1
    std::vector<double> predictive(const std::vector<int>& config) const;
    double row_total(const std::vector<int>& config) const;
    double count(const std::vector<int>& config, int tp_bin) const;

    const std::vector<int>& config_dims() const { return dims_; }
    int tp_bins() const { return tp_bins_; }
    double alpha0() const { return alpha0_; }

    // flat enumeration for checkpoints: callback(config_indices, tp_bin, count)
    template <typename F>
    void for_each(F&& f) const {
        std::vector<int> idx(dims_.size(), 0);
        for (std::size_t row = 0; row < rows_; ++row) {
            std::size_t rest = row;
            for (std::size_t d = dims_.size(); d-- > 0;) {
                idx[d] = static_cast<int>(rest % static_cast<std::size_t>(dims_[d]));
                rest /= static_cast<std::size_t>(dims_[d]);
            }
            for (int b = 0; b < tp_bins_; ++b)
                f(idx, b, counts_[row * static_cast<std::size_t>(tp_bins_) +
                                  static_cast<std::size_t>(b)]);
        }
    }
    void set_count(const std::vector<int>& config, int tp_bin, double value);

private:
    std::size_t row_of(const std::vector<int>& config) const;

    std::vector<int> dims_;
    int tp_bins_;
    double alpha0_;
    std::size_t rows_;
    std::vector<double> counts_;
};

/// Log-preference vectors per factor: eta * fulfillment of the bin's
/// representative value; zero for factors without an SLO.
struct PreferenceModel {
    std::vector<double> cv_quality;
    std::vector<double> cv_model;
    std::vector<double> cv_cores;
    std::vector<double> cv_tp;
    std::vector<double> qr_quality;
    std::vector<double> qr_cores;
    std::vector<double> qr_tp;

    static PreferenceModel build(const AifFactors& factors, const Workload& workload,
                                 double eta);
};

// softmax(C) with the usual max shift; risk terms are invariant under C + const
std::vector<double> softmax(const std::vector<double>& logits);
// KL(onehot_idx || softmax(logits))
double kl_onehot(const std::vector<double>& logits, int idx);
// KL(q || softmax(logits))
double kl_divergence(const std::vector<double>& q, const std::vector<double>& logits);
// expected information gain of one more draw from a Dirichlet row,
// (bins - 1) / (2 * total); computed from the count total alone
double dirichlet_info_gain(double row_total, int bins);

struct AifConfig {
    double eta = 4.0;
    double alpha0 = 1.0;
    double novelty_weight = 1.0;
};

/// Per-factor predicted distributions for one service action: controllables
/// shift deterministically (one-hot), throughput takes the successor's
/// normalized Dirichlet row.
struct ServicePrediction {
    std::vector<std::vector<double>> controllables;  // one-hot per factor
    std::vector<double> throughput;
    double row_total = 0.0;
};

/// Tabular active-inference agent: identity likelihoods over the binned
/// state, Dirichlet-learned throughput dynamics, expected free energy
/// minimization over the 35 joint actions. Scores factor per service, so
/// the 35 action evaluations cost 7 + 5 partial evaluations.
class AifAgent : public Agent {
public:
    AifAgent(Workload workload, AifConfig config, std::uint64_t seed = 0);

    Assignment decide(const AgentObservation& obs, const TimeSeriesStore& store) override;
    const char* name() const override { return "aif"; }
    std::optional<JointAction> last_action() const override { return last_action_; }

    ServicePrediction predict(ServiceKind kind, const AifState& state,
                              ServiceAction action) const;
    // total expected free energy of a joint action (risk - novelty)
    double expected_free_energy(const AifState& state, JointAction action) const;
    JointAction select_action(const AgentObservation& obs);

    const AifFactors& factors() const { return factors_; }
    const DirichletCpt& cpt(ServiceKind kind) const {
        return kind == ServiceKind::CV ? cv_cpt_ : qr_cpt_;
    }
    DirichletCpt& cpt(ServiceKind kind) {
        return kind == ServiceKind::CV ? cv_cpt_ : qr_cpt_;
    }
    const PreferenceModel& preferences() const { return prefs_; }

    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

private:
    // per-service partial score of one action, -1 when unrepresentable
    double service_score(ServiceKind kind, const AifState& state,
                         ServiceAction action) const;
    bool successor_in_lattice(ServiceKind kind, const AifState& state,
                              ServiceAction action) const;

    Workload workload_;
    AifConfig config_;
    AifFactors factors_;
    PreferenceModel prefs_;
    DirichletCpt cv_cpt_;
    DirichletCpt qr_cpt_;
    std::optional<JointAction> last_action_;
};

}  // namespace edgescale

#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "edgescale/agent.hpp"
#include "edgescale/mlp.hpp"

namespace edgescale {

struct DaciConfig {
    double lambda_eq = 0.5;     // fulfillment-variance regularizer weight
    double lambda_util = 0.1;   // utilization regularizer weight
    double lr = 1e-3;
    std::size_t replay_capacity = 5000;
    int batch = 32;
    int mc_samples = 8;         // K latent samples per action score
    double beta_epi = 1.0;      // epistemic weight
    double obs_sigma = 0.05;    // fixed decoder observation std
    int latent = 8;
    int hidden = 64;
    double grad_clip = 20.0;
    double logvar_min = -6.0;
    double logvar_max = 2.0;
    double enc_logvar_init = -4.0;    // initial encoder log-variance bias
    double trans_logvar_init = -5.0;  // initial transition log-variance bias
    double head_scale = 0.05;         // initial weight scale off the identity path
};

/// Encoder (obs -> diagonal Gaussian latent), transition (latent x one-hot
/// action -> diagonal Gaussian latent) and decoder (latent -> observation
/// mean; fixed observation std).
struct DaciNets {
    Mlp encoder;
    Mlp transition;
    Mlp decoder;
    int obs_dim;
    int latent;

    static DaciNets make(int obs_dim, const DaciConfig& config, std::uint64_t seed);

    void save(std::ostream& out) const;
    static DaciNets load(std::istream& in);
};

/// One transition plus the fulfillment/utilization context its free energy
/// needs.
struct DaciStepRecord {
    std::vector<double> prev_obs;
    std::vector<double> obs;
    int action = 0;  // joint action index
    double phi_cv = 0.0;
    double phi_qr = 0.0;
    double ucores = 0.0;
    double tcores = 8.0;
};

/// Regularized variational free energy of one step: Gaussian reconstruction
/// NLL (one reparameterized sample, noise `eps`) + closed-form diagonal KL
/// against the transition prior + the two regularizers. With grad_weight > 0
/// the parameter gradients of the learnable terms are accumulated on all
/// three nets, scaled by grad_weight.
double daci_free_energy(DaciNets& nets, const DaciStepRecord& record,
                        const DaciConfig& config, const std::vector<double>& eps,
                        double grad_weight);

/// One SGD step on the mean free energy of a batch; returns that mean.
double daci_train_step(DaciNets& nets, const std::vector<const DaciStepRecord*>& batch,
                       const DaciConfig& config, Rng& rng);

/// Expected-free-energy score of one action from the current posterior mean:
/// pragmatic (decoded fulfillment shortfall plus the regularizers) minus
/// beta_epi times the decoded-prediction disagreement over the K shared
/// noise draws. Lower is better.
double daci_efe_score(DaciNets& nets, const std::vector<double>& posterior_mean,
                      int action_index, const DaciConfig& config,
                      const Workload& workload,
                      const std::vector<std::vector<double>>& eps_samples);

// The spec-fixed 8-dim observation vector: normalized
// (q_cv, m_cv, c_cv, tp_cv, q_qr, c_qr, tp_qr, c_free).
std::vector<double> daci_normalize(const AgentObservation& obs, const Workload& w);

/// Deep active-inference agent: trains its generative model online (one
/// batch step per cycle) and picks the legal action with the lowest EFE.
class DaciAgent : public Agent {
public:
    DaciAgent(Workload workload, DaciConfig config, std::uint64_t seed);

    Assignment decide(const AgentObservation& obs, const TimeSeriesStore& store) override;
    const char* name() const override { return "daci"; }
    std::optional<JointAction> last_action() const override { return last_action_; }

    DaciNets& nets() { return nets_; }
    const DaciConfig& config() const { return config_; }
    double last_train_loss() const { return last_loss_; }

    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

private:
    Workload workload_;
    DaciConfig config_;
    DaciNets nets_;
    Rng rng_;
    std::deque<DaciStepRecord> replay_;
    std::vector<double> prev_obs_;
    int prev_action_ = -1;
    std::optional<JointAction> last_action_;
    double last_loss_ = 0.0;
};

}  // namespace edgescale

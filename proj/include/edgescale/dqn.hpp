#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "edgescale/agent.hpp"
#include "edgescale/mlp.hpp"

namespace edgescale {

struct Transition {
    std::vector<double> state;
    int action = 0;
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

/// Bounded FIFO of transitions with uniform without-replacement sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 50000) : capacity_(capacity) {}

    void push(Transition t);
    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    std::deque<Transition> data_;
};

struct DqnConfig {
    double lr = 1e-3;
    double gamma = 0.9;
    int batch = 64;
    int target_sync = 200;        // train steps between target-net copies
    double eps_start = 1.0;
    double eps_final = 0.05;      // also the fixed deployment epsilon
    int episodes = 300;           // pretraining episodes
    int episode_steps = 25;
    int updates_per_step = 1;     // gradient updates per environment step
    std::vector<int> hidden = {64, 64};
};

/// Min-max normalized state: CV (quality, model, cores, throughput, c_free),
/// QR the same without model. Invertible on the lattice.
std::vector<double> encode_state(ServiceKind kind, const AgentObservation& obs,
                                 const Workload& workload);
ServiceConfig decode_state(ServiceKind kind, const std::vector<double>& state,
                           const Workload& workload, double* c_free = nullptr);

/// Indices into kCvActions / kQrActions that are individually applicable in
/// this state (bounds kept, cores floor respected, CoresUp covered by c_free).
std::vector<int> legal_service_actions(ServiceKind kind,
                                       const std::vector<double>& state,
                                       const Workload& workload);

using LegalMaskFn = std::function<std::vector<int>(const std::vector<double>&)>;

/// One TD update: target r + gamma * max over legal a' of Q_target(s', a')
/// (plain r on terminal transitions), squared-error loss, one SGD step.
/// Returns the batch loss.
double dqn_train_step(Mlp& net, const Mlp& target_net,
                      const std::vector<const Transition*>& batch,
                      const DqnConfig& config, const LegalMaskFn& next_legal);

/// Reward of one service: its own fulfillment after the action.
double dqn_reward(ServiceKind kind, const AgentObservation& obs,
                  const Workload& workload);

/// Per-service Q-networks with epsilon-greedy action selection; joint
/// legality is restored by demoting the service with the smaller Q-advantage
/// to NoOp when both claims together exceed the free cores.
class DqnAgent : public Agent {
public:
    DqnAgent(Workload workload, DqnConfig config, std::uint64_t seed);

    Assignment decide(const AgentObservation& obs, const TimeSeriesStore& store) override;
    const char* name() const override { return "dqn"; }
    std::optional<JointAction> last_action() const override { return last_action_; }

    // selection at an explicit epsilon (deployment uses config.eps_final)
    JointAction select_action(const AgentObservation& obs, double eps);

    Mlp& net(ServiceKind kind) { return kind == ServiceKind::CV ? cv_net_ : qr_net_; }
    const Mlp& net(ServiceKind kind) const {
        return kind == ServiceKind::CV ? cv_net_ : qr_net_;
    }
    const DqnConfig& config() const { return config_; }
    const Workload& workload() const { return workload_; }

    void reseed(std::uint64_t seed);

    // checkpoint: one flat text file per net, `<prefix>_cv.txt` / `<prefix>_qr.txt`
    void save_checkpoint(const std::string& prefix) const;
    void load_checkpoint(const std::string& prefix);

private:
    friend struct PretrainAccess;
    Workload workload_;
    DqnConfig config_;
    Mlp cv_net_;
    Mlp qr_net_;
    Rng rng_;
    std::optional<JointAction> last_action_;
};

struct PretrainResult {
    std::vector<double> episode_returns;  // summed two-service reward per episode
};

/// Trains both service nets jointly in the fitted LGBN environment under the
/// shared core budget; epsilon anneals from eps_start to eps_final across
/// episodes. Deterministic for a fixed seed.
PretrainResult pretrain(DqnAgent& agent, const LgbnModel& lgbn,
                        std::uint64_t seed);

}  // namespace edgescale

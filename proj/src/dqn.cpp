#include "edgescale/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace edgescale {

void ReplayBuffer::push(Transition t) {
    data_.push_back(std::move(t));
    if (data_.size() > capacity_) data_.pop_front();
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch,
                                                    Rng& rng) const {
    if (batch > data_.size())
        throw std::domain_error("replay batch larger than buffer");
    // partial Fisher-Yates over an index array: uniform, no repeats
    std::vector<std::size_t> idx(data_.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        std::size_t j = i + rng.uniform_index(idx.size() - i);
        std::swap(idx[i], idx[j]);
        out.push_back(&data_[idx[i]]);
    }
    return out;
}

namespace {

struct Ranges {
    double q_min, q_span;
    double m_min, m_span;
    double cores_span;
    double tp_span;
    double c_phy;
};

Ranges ranges_for(ServiceKind kind, const Workload& w) {
    const ServiceSpec& spec = w.spec(kind);
    Ranges r{};
    const auto& q = spec.variable("quality");
    r.q_min = q.min;
    r.q_span = q.max - q.min;
    if (kind == ServiceKind::CV) {
        const auto& m = spec.variable("model_size");
        r.m_min = m.min;
        r.m_span = m.max - m.min;
    }
    r.cores_span = spec.variable("cores").max;  // cores in (0, 8): scale by 8
    r.tp_span = spec.variable("throughput").max;
    r.c_phy = w.device.c_phy;
    return r;
}

}  // namespace

std::vector<double> encode_state(ServiceKind kind, const AgentObservation& obs,
                                 const Workload& workload) {
    Ranges r = ranges_for(kind, workload);
    const ServiceSnapshot& snap = kind == ServiceKind::CV ? obs.cv : obs.qr;
    std::vector<double> x;
    x.reserve(kind == ServiceKind::CV ? 5 : 4);
    x.push_back((snap.quality - r.q_min) / r.q_span);
    if (kind == ServiceKind::CV)
        x.push_back((snap.model_size.value_or(0) - r.m_min) / r.m_span);
    x.push_back(snap.cores / r.cores_span);
    x.push_back(snap.throughput / r.tp_span);
    x.push_back(obs.free_cores / r.c_phy);
    return x;
}

ServiceConfig decode_state(ServiceKind kind, const std::vector<double>& state,
                           const Workload& workload, double* c_free) {
    Ranges r = ranges_for(kind, workload);
    bool cv = kind == ServiceKind::CV;
    std::size_t expect = cv ? 5 : 4;
    if (state.size() != expect)
        throw std::invalid_argument("state vector has wrong dimension");
    ServiceConfig cfg;
    cfg.quality = static_cast<int>(std::lround(state[0] * r.q_span + r.q_min));
    std::size_t i = 1;
    if (cv) cfg.model_size = static_cast<int>(std::lround(state[i++] * r.m_span + r.m_min));
    cfg.cores = state[i++] * r.cores_span;
    ++i;  // throughput
    if (c_free) *c_free = state[i] * r.c_phy;
    return cfg;
}

std::vector<int> legal_service_actions(ServiceKind kind,
                                       const std::vector<double>& state,
                                       const Workload& workload) {
    double c_free = 0.0;
    ServiceConfig cfg = decode_state(kind, state, workload, &c_free);
    const ServiceSpec& spec = workload.spec(kind);
    const auto& q = spec.variable("quality");
    const auto& c = spec.variable("cores");
    auto actions = kind == ServiceKind::CV
                       ? std::vector<ServiceAction>(kCvActions.begin(), kCvActions.end())
                       : std::vector<ServiceAction>(kQrActions.begin(), kQrActions.end());
    std::vector<int> legal;
    for (int i = 0; i < static_cast<int>(actions.size()); ++i) {
        bool ok = true;
        switch (actions[static_cast<std::size_t>(i)]) {
            case ServiceAction::QualityDown: ok = cfg.quality - q.step >= q.min - 1e-9; break;
            case ServiceAction::QualityUp: ok = cfg.quality + q.step <= q.max + 1e-9; break;
            case ServiceAction::ModelDown: ok = cfg.model_size.value_or(1) > 1; break;
            case ServiceAction::ModelUp: ok = cfg.model_size.value_or(5) < 5; break;
            case ServiceAction::CoresDown: ok = cfg.cores - kCoreStep >= kMinCores - 1e-9; break;
            case ServiceAction::CoresUp:
                ok = cfg.cores + kCoreStep < c.max - 1e-9 && c_free >= kCoreStep - 1e-9;
                break;
            case ServiceAction::NoOp: ok = true; break;
        }
        if (ok) legal.push_back(i);
    }
    return legal;
}

double dqn_train_step(Mlp& net, const Mlp& target_net,
                      const std::vector<const Transition*>& batch,
                      const DqnConfig& config, const LegalMaskFn& next_legal) {
    if (batch.empty()) throw std::domain_error("empty batch");
    net.zero_grads();
    double loss = 0.0;
    double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const Transition* t : batch) {
        double target = t->reward;
        if (!t->done && config.gamma > 0.0) {
            auto q_next = target_net.forward(t->next_state);
            double best = -1e300;
            for (int a : next_legal(t->next_state))
                best = std::max(best, q_next[static_cast<std::size_t>(a)]);
            target += config.gamma * best;
        }
        auto q = net.forward_cached(t->state);
        double err = q[static_cast<std::size_t>(t->action)] - target;
        loss += err * err * inv_n;
        std::vector<double> dout(q.size(), 0.0);
        dout[static_cast<std::size_t>(t->action)] = 2.0 * err * inv_n;
        net.backward(dout);
    }
    net.sgd_step(config.lr);
    return loss;
}

double dqn_reward(ServiceKind kind, const AgentObservation& obs,
                  const Workload& workload) {
    const ServiceSnapshot& snap = kind == ServiceKind::CV ? obs.cv : obs.qr;
    return service_fulfillment(config_from_snapshot(snap), snap.throughput,
                               workload.spec(kind));
}

namespace {

std::vector<int> make_sizes(int input, const DqnConfig& config, int actions) {
    std::vector<int> sizes = {input};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(actions);
    return sizes;
}

}  // namespace

DqnAgent::DqnAgent(Workload workload, DqnConfig config, std::uint64_t seed)
    : workload_(std::move(workload)),
      config_(config),
      cv_net_(make_sizes(5, config, static_cast<int>(kCvActions.size())),
              derive_seed(seed, 1)),
      qr_net_(make_sizes(4, config, static_cast<int>(kQrActions.size())),
              derive_seed(seed, 2)),
      rng_(derive_seed(seed, 3)) {}

void DqnAgent::reseed(std::uint64_t seed) { rng_ = Rng(derive_seed(seed, 3)); }

JointAction DqnAgent::select_action(const AgentObservation& obs, double eps) {
    auto pick = [&](ServiceKind kind, const Mlp& net, double* advantage) {
        auto state = encode_state(kind, obs, workload_);
        auto legal = legal_service_actions(kind, state, workload_);
        auto q = net.forward(state);
        int greedy = legal.front();
        for (int a : legal)
            if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(greedy)])
                greedy = a;  // strict: ties keep the lowest index
        int chosen = greedy;
        if (eps > 0.0 && rng_.uniform() < eps)
            chosen = legal[rng_.uniform_index(legal.size())];
        int noop = static_cast<int>(kind == ServiceKind::CV ? kCvActions.size()
                                                            : kQrActions.size()) - 1;
        *advantage = q[static_cast<std::size_t>(chosen)] - q[static_cast<std::size_t>(noop)];
        return chosen;
    };

    double adv_cv = 0.0, adv_qr = 0.0;
    int cv_a = pick(ServiceKind::CV, cv_net_, &adv_cv);
    int qr_a = pick(ServiceKind::QR, qr_net_, &adv_qr);
    JointAction joint{cv_a, qr_a};
    if (!is_legal(obs, joint, workload_)) {
        // both services claimed cores the budget cannot cover together;
        // the weaker claim backs off
        int noop_cv = static_cast<int>(kCvActions.size()) - 1;
        int noop_qr = static_cast<int>(kQrActions.size()) - 1;
        if (adv_cv < adv_qr)
            joint.cv = noop_cv;
        else
            joint.qr = noop_qr;
        if (!is_legal(obs, joint, workload_)) joint = JointAction{noop_cv, noop_qr};
    }
    return joint;
}

Assignment DqnAgent::decide(const AgentObservation& obs, const TimeSeriesStore&) {
    JointAction a = select_action(obs, config_.eps_final);
    last_action_ = a;
    return apply_joint_action(obs, a, workload_);
}

void DqnAgent::save_checkpoint(const std::string& prefix) const {
    for (ServiceKind kind : {ServiceKind::CV, ServiceKind::QR}) {
        std::string path = prefix + (kind == ServiceKind::CV ? "_cv.txt" : "_qr.txt");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
        net(kind).save(out);
    }
}

void DqnAgent::load_checkpoint(const std::string& prefix) {
    for (ServiceKind kind : {ServiceKind::CV, ServiceKind::QR}) {
        std::string path = prefix + (kind == ServiceKind::CV ? "_cv.txt" : "_qr.txt");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
        net(kind) = Mlp::load(in);
    }
}

namespace {

// observation of the LGBN training environment at a configuration
AgentObservation lgbn_observe(const Assignment& config, const LgbnModel& lgbn,
                              const Workload& w, Rng& rng) {
    AgentObservation obs;
    obs.cv = ServiceSnapshot{config.cv.quality, config.cv.model_size, config.cv.cores,
                             lgbn_sample(lgbn, ServiceKind::CV, config.cv, rng)};
    obs.qr = ServiceSnapshot{config.qr.quality, config.qr.model_size, config.qr.cores,
                             lgbn_sample(lgbn, ServiceKind::QR, config.qr, rng)};
    obs.phi_cv = service_fulfillment(config.cv, obs.cv.throughput, w.cv);
    obs.phi_qr = service_fulfillment(config.qr, obs.qr.throughput, w.qr);
    obs.free_cores = w.device.c_phy - config.total_cores();
    return obs;
}

Assignment random_lattice_assignment(const Workload& w, Rng& rng) {
    Assignment a;
    a.cv.quality = 128 + 32 * static_cast<int>(rng.uniform_index(7));
    a.cv.model_size = 1 + static_cast<int>(rng.uniform_index(5));
    a.qr.quality = 300 + 100 * static_cast<int>(rng.uniform_index(8));
    double c_phy = w.device.c_phy;
    int cv_steps = static_cast<int>(rng.uniform_index(
        static_cast<std::size_t>((c_phy - 2.0 * kMinCores) / kCoreStep) + 1));
    a.cv.cores = kMinCores + kCoreStep * cv_steps;
    int qr_max = static_cast<int>((c_phy - a.cv.cores - kMinCores) / kCoreStep);
    a.qr.cores = kMinCores + kCoreStep * static_cast<int>(rng.uniform_index(
                                             static_cast<std::size_t>(qr_max) + 1));
    return a;
}

}  // namespace

PretrainResult pretrain(DqnAgent& agent, const LgbnModel& lgbn,
                        std::uint64_t seed) {
    const DqnConfig& cfg = agent.config();
    const Workload& w = agent.workload();
    if (lgbn.cv.beta.empty() || lgbn.qr.beta.empty())
        throw std::domain_error("pretrain requires a fitted LGBN model");

    Mlp cv_target = agent.net(ServiceKind::CV);
    Mlp qr_target = agent.net(ServiceKind::QR);
    ReplayBuffer cv_buf, qr_buf;
    Rng env_rng(derive_seed(seed, 11));
    Rng sample_rng(derive_seed(seed, 12));
    agent.reseed(derive_seed(seed, 13));

    auto cv_mask = [&](const std::vector<double>& s) {
        return legal_service_actions(ServiceKind::CV, s, w);
    };
    auto qr_mask = [&](const std::vector<double>& s) {
        return legal_service_actions(ServiceKind::QR, s, w);
    };

    PretrainResult result;
    result.episode_returns.reserve(static_cast<std::size_t>(cfg.episodes));
    double decay = cfg.episodes > 1
                       ? std::log(cfg.eps_start / cfg.eps_final) / (cfg.episodes - 1)
                       : 0.0;
    int train_steps = 0;

    for (int episode = 0; episode < cfg.episodes; ++episode) {
        double eps = std::max(cfg.eps_final,
                              cfg.eps_start * std::exp(-decay * episode));
        Assignment config = random_lattice_assignment(w, env_rng);
        AgentObservation obs = lgbn_observe(config, lgbn, w, env_rng);
        double reward_sum = 0.0;

        for (int step = 0; step < cfg.episode_steps; ++step) {
            JointAction action = agent.select_action(obs, eps);
            Assignment next = apply_joint_action(obs, action, w);
            AgentObservation next_obs = lgbn_observe(next, lgbn, w, env_rng);
            bool done = step + 1 == cfg.episode_steps;

            double r_cv = dqn_reward(ServiceKind::CV, next_obs, w);
            double r_qr = dqn_reward(ServiceKind::QR, next_obs, w);
            reward_sum += (r_cv + r_qr) / 2.0;

            cv_buf.push(Transition{encode_state(ServiceKind::CV, obs, w), action.cv,
                                   r_cv, encode_state(ServiceKind::CV, next_obs, w),
                                   done});
            qr_buf.push(Transition{encode_state(ServiceKind::QR, obs, w), action.qr,
                                   r_qr, encode_state(ServiceKind::QR, next_obs, w),
                                   done});

            if (cv_buf.size() >= static_cast<std::size_t>(cfg.batch)) {
                for (int u = 0; u < cfg.updates_per_step; ++u) {
                    dqn_train_step(agent.net(ServiceKind::CV), cv_target,
                                   cv_buf.sample(static_cast<std::size_t>(cfg.batch),
                                                 sample_rng),
                                   cfg, cv_mask);
                    dqn_train_step(agent.net(ServiceKind::QR), qr_target,
                                   qr_buf.sample(static_cast<std::size_t>(cfg.batch),
                                                 sample_rng),
                                   cfg, qr_mask);
                    ++train_steps;
                    if (train_steps % cfg.target_sync == 0) {
                        cv_target = agent.net(ServiceKind::CV);
                        qr_target = agent.net(ServiceKind::QR);
                    }
                }
            }
            obs = next_obs;
        }
        result.episode_returns.push_back(reward_sum);
    }
    return result;
}

}  // namespace edgescale

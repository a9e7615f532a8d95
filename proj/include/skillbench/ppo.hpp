#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <skillbench/net.hpp>
#include <skillbench/policies.hpp>
#include <skillbench/rng.hpp>

namespace skillbench {

struct PpoConfig {
    double clip = 0.2;
    double gae_lambda = 0.95;
    double discount = 0.99;
    double lr = 3e-4;
    int epochs = 4;
    int minibatch = 64;
    int rollout_len = 2048;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    std::vector<int> hidden{64, 64};
};

// Clip-objective PPO over a discrete action set, with GAE advantages and
// separate policy/value networks.
class PpoAgent {
public:
    PpoAgent(int obs_dim, int num_actions, const PpoConfig& cfg, Rng& rng) : cfg_(cfg), num_actions_(num_actions)
    {
        std::vector<int> psizes{obs_dim};
        psizes.insert(psizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        psizes.push_back(num_actions);
        std::vector<int> vsizes{obs_dim};
        vsizes.insert(vsizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        vsizes.push_back(1);
        policy_ = init_genotype(make_spec(psizes, Activation::Tanh, OutputHead::CategoricalLogits), rng);
        value_ = init_genotype(make_spec(vsizes, Activation::Tanh, OutputHead::Linear), rng);
        opt_policy_ = AdamState(static_cast<Eigen::Index>(policy_.params.size()), cfg.lr);
        opt_value_ = AdamState(static_cast<Eigen::Index>(value_.params.size()), cfg.lr);
    }

    int num_actions() const { return num_actions_; }
    const Genotype& policy() const { return policy_; }

    struct ActResult {
        int action = 0;
        double log_prob = 0.0;
        double value = 0.0;
    };

    ActResult act(const Vec& obs, Rng& rng) const
    {
        const Vec logits = forward(policy_, obs);
        const Vec logp = categorical_head::log_softmax(logits);
        ActResult r;
        r.action = categorical_head::sample(logits, rng);
        r.log_prob = logp[r.action];
        r.value = forward(value_, obs)[0];
        return r;
    }

    int act_greedy(const Vec& obs) const { return categorical_head::argmax(forward(policy_, obs)); }

    struct Step {
        Vec obs;
        int action = 0;
        double log_prob = 0.0;
        double value = 0.0;
        double reward = 0.0;
        bool terminal = false; // episode ended after this step
    };

    /// One PPO update over a collected rollout. bootstrap_value is V(s_T)
    /// for the state following the last step (0 if that step was terminal).
    void update(const std::vector<Step>& steps, double bootstrap_value, Rng& rng)
    {
        const auto n = static_cast<Eigen::Index>(steps.size());
        if (n == 0)
            throw std::invalid_argument("PpoAgent::update: empty rollout");

        // GAE
        Vec adv(n), ret(n);
        double gae = 0.0;
        double next_value = bootstrap_value;
        for (Eigen::Index t = n - 1; t >= 0; --t) {
            const double not_done = steps[static_cast<std::size_t>(t)].terminal ? 0.0 : 1.0;
            const double delta = steps[static_cast<std::size_t>(t)].reward
                                 + cfg_.discount * not_done * next_value - steps[static_cast<std::size_t>(t)].value;
            gae = delta + cfg_.discount * cfg_.gae_lambda * not_done * gae;
            adv[t] = gae;
            ret[t] = adv[t] + steps[static_cast<std::size_t>(t)].value;
            next_value = steps[static_cast<std::size_t>(t)].value;
        }
        const double mean = adv.mean();
        const double sd = std::sqrt((adv.array() - mean).square().sum() / static_cast<double>(n) + 1e-8);
        adv = ((adv.array() - mean) / sd).matrix();

        const Eigen::Index obs_dim = steps.front().obs.size();
        Mat obs(obs_dim, n);
        for (Eigen::Index i = 0; i < n; ++i)
            obs.col(i) = steps[static_cast<std::size_t>(i)].obs;

        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            // Fisher-Yates with the update stream
            for (Eigen::Index i = n - 1; i > 0; --i)
                std::swap(order[static_cast<std::size_t>(i)],
                          order[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
            for (Eigen::Index start = 0; start < n; start += cfg_.minibatch) {
                const Eigen::Index mb = std::min<Eigen::Index>(cfg_.minibatch, n - start);
                minibatch_update(steps, obs, adv, ret, order, start, mb);
            }
        }
    }

private:
    void minibatch_update(const std::vector<Step>& steps, const Mat& obs, const Vec& adv, const Vec& ret,
                          const std::vector<Eigen::Index>& order, Eigen::Index start, Eigen::Index mb)
    {
        Mat x(obs.rows(), mb);
        for (Eigen::Index i = 0; i < mb; ++i)
            x.col(i) = obs.col(order[static_cast<std::size_t>(start + i)]);

        // policy
        ForwardCache pcache;
        Mat logits;
        forward_batch(policy_, x, logits, &pcache);
        Mat pupstream(num_actions_, mb);
        for (Eigen::Index i = 0; i < mb; ++i) {
            const auto idx = order[static_cast<std::size_t>(start + i)];
            const auto& st = steps[static_cast<std::size_t>(idx)];
            const Vec logp = categorical_head::log_softmax(logits.col(i));
            const Vec p = logp.array().exp().matrix();
            const double ratio = std::exp(logp[st.action] - st.log_prob);
            const double a = adv[idx];
            const bool clipped = (a >= 0.0 && ratio > 1.0 + cfg_.clip) || (a < 0.0 && ratio < 1.0 - cfg_.clip);
            Vec dlogp_dlogits = -p;
            dlogp_dlogits[st.action] += 1.0;
            Vec g = Vec::Zero(num_actions_);
            if (!clipped)
                g -= a * ratio * dlogp_dlogits;
            // entropy bonus: dH/dlogit_j = -p_j (log p_j + H)
            const double H = -(p.array() * logp.array()).sum();
            g += cfg_.entropy_coef * (p.array() * (logp.array() + H)).matrix();
            pupstream.col(i) = g / static_cast<double>(mb);
        }
        Vec pgrad;
        backward_batch(policy_, pcache, pupstream, pgrad);
        adam_step(opt_policy_, policy_.params, pgrad);

        // value
        ForwardCache vcache;
        Mat v;
        forward_batch(value_, x, v, &vcache);
        Mat vupstream(1, mb);
        for (Eigen::Index i = 0; i < mb; ++i) {
            const auto idx = order[static_cast<std::size_t>(start + i)];
            vupstream(0, i) = cfg_.value_coef * 2.0 * (v(0, i) - ret[idx]) / static_cast<double>(mb);
        }
        Vec vgrad;
        backward_batch(value_, vcache, vupstream, vgrad);
        adam_step(opt_value_, value_.params, vgrad);
    }

    PpoConfig cfg_;
    int num_actions_;
    Genotype policy_, value_;
    AdamState opt_policy_, opt_value_;

public:
    double value_of(const Vec& obs) const { return forward(value_, obs)[0]; }
};

} // namespace skillbench

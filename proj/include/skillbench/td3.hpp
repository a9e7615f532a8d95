#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <vector>

#include <skillbench/net.hpp>
#include <skillbench/policies.hpp>
#include <skillbench/replay_buffer.hpp>
#include <skillbench/rng.hpp>

namespace skillbench {

struct Td3Config {
    double policy_noise = 0.2;
    double noise_clip = 0.5;
    double discount = 0.99;
    double reward_scaling = 1.0;
    double polyak = 0.005;
    double critic_lr = 3e-4;
    double policy_lr = 1e-3;
    int batch_size = 256;
    int policy_delay = 2;
};

// Twin critics with polyak-averaged targets plus a greedy actor. The actor
// exists to provide target actions for policy smoothing; repertoire policies
// are mutated against critic1 directly.
struct Td3State {
    Genotype critic1, critic2, target_critic1, target_critic2;
    Genotype actor, target_actor;
    AdamState opt_critic1, opt_critic2, opt_actor;
    Td3Config cfg;
    std::int64_t updates = 0;
};

inline Td3State make_td3(const std::shared_ptr<const NetSpec>& policy_spec,
                         const std::shared_ptr<const NetSpec>& critic_spec,
                         const Td3Config& cfg, Rng& rng)
{
    Td3State td3;
    td3.cfg = cfg;
    td3.critic1 = init_genotype(critic_spec, rng);
    td3.critic2 = init_genotype(critic_spec, rng);
    td3.target_critic1 = td3.critic1;
    td3.target_critic2 = td3.critic2;
    td3.actor = init_genotype(policy_spec, rng);
    td3.target_actor = td3.actor;
    const auto n_c = static_cast<Eigen::Index>(critic_spec->param_count());
    const auto n_a = static_cast<Eigen::Index>(policy_spec->param_count());
    td3.opt_critic1 = AdamState(n_c, cfg.critic_lr);
    td3.opt_critic2 = AdamState(n_c, cfg.critic_lr);
    td3.opt_actor = AdamState(n_a, cfg.policy_lr);
    return td3;
}

namespace detail {

inline void polyak_update(Genotype& target, const Genotype& live, double tau)
{
    target.params = (1.0 - tau) * target.params + tau * live.params;
}

struct Td3Batch {
    Mat s, a, s2;
    Vec r;
    Vec not_done;
};

inline Td3Batch gather_td3_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& idx)
{
    const auto b = static_cast<Eigen::Index>(idx.size());
    Td3Batch out{Mat(2, b), Mat(2, b), Mat(2, b), Vec(b), Vec(b)};
    for (Eigen::Index i = 0; i < b; ++i) {
        const BufferTransition& t = buffer[idx[static_cast<std::size_t>(i)]];
        out.s.col(i) = t.state;
        out.a.col(i) = t.action;
        out.s2.col(i) = t.next_state;
        out.r[i] = t.reward_env;
        out.not_done[i] = t.done ? 0.0 : 1.0;
    }
    return out;
}

/// Mean tanh action of a gaussian-head policy, batched.
inline Mat greedy_actions(const Genotype& policy, const Mat& states, ForwardCache* cache = nullptr, Mat* prehead_out = nullptr)
{
    Mat prehead;
    forward_batch(policy, states, prehead, cache);
    const Eigen::Index k = prehead.rows() / 2;
    Mat a = prehead.topRows(k).array().tanh().matrix();
    if (prehead_out)
        *prehead_out = std::move(prehead);
    return a;
}

} // namespace detail

/// n_steps of clipped-double-Q training with target-policy smoothing and a
/// delayed greedy-actor update.
inline void td3_critic_update(Td3State& td3, const ReplayBuffer& buffer, int n_steps, Rng& rng)
{
    if (buffer.empty())
        throw std::runtime_error("td3_critic_update: empty buffer");
    const Td3Config& cfg = td3.cfg;
    const Eigen::Index b = cfg.batch_size;

    for (int step = 0; step < n_steps; ++step) {
        const auto idx = buffer.sample_indices(static_cast<std::size_t>(b), rng);
        auto batch = detail::gather_td3_batch(buffer, idx);

        // smoothed target actions
        Mat a2 = detail::greedy_actions(td3.target_actor, batch.s2);
        for (Eigen::Index c = 0; c < a2.cols(); ++c)
            for (Eigen::Index r_i = 0; r_i < a2.rows(); ++r_i) {
                const double noise = std::clamp(rng.normal(0.0, cfg.policy_noise), -cfg.noise_clip, cfg.noise_clip);
                a2(r_i, c) = std::clamp(a2(r_i, c) + noise, -1.0, 1.0);
            }

        Mat x2(4, b);
        x2 << batch.s2, a2;
        Mat q1t, q2t;
        forward_batch(td3.target_critic1, x2, q1t);
        forward_batch(td3.target_critic2, x2, q2t);
        const Vec y = (cfg.reward_scaling * batch.r.array()
                       + cfg.discount * batch.not_done.array()
                             * q1t.row(0).transpose().array().min(q2t.row(0).transpose().array()))
                          .matrix();

        Mat x(4, b);
        x << batch.s, batch.a;
        for (Genotype* critic : {&td3.critic1, &td3.critic2}) {
            ForwardCache cache;
            Mat q;
            forward_batch(*critic, x, q, &cache);
            Mat upstream = (2.0 / static_cast<double>(b)) * (q.row(0).transpose() - y).transpose();
            Vec grad;
            backward_batch(*critic, cache, upstream, grad);
            adam_step(critic == &td3.critic1 ? td3.opt_critic1 : td3.opt_critic2,
                      critic->params, grad);
        }

        ++td3.updates;
        if (td3.updates % cfg.policy_delay == 0) {
            // greedy actor ascends critic1
            ForwardCache pcache;
            Mat prehead;
            Mat a = detail::greedy_actions(td3.actor, batch.s, &pcache, &prehead);
            Mat xa(4, b);
            xa << batch.s, a;
            ForwardCache ccache;
            Mat q;
            forward_batch(td3.critic1, xa, q, &ccache);
            Mat ones = Mat::Ones(1, b);
            Vec cgrad;
            Mat xgrad;
            backward_batch(td3.critic1, ccache, ones, cgrad, &xgrad);
            const Eigen::Index k = prehead.rows() / 2;
            Mat upstream = Mat::Zero(prehead.rows(), b);
            upstream.topRows(k) = ((-1.0 / static_cast<double>(b))
                                   * xgrad.bottomRows(2).array() * (1.0 - a.array().square()))
                                      .matrix();
            Vec agrad;
            backward_batch(td3.actor, pcache, upstream, agrad);
            adam_step(td3.opt_actor, td3.actor.params, agrad);

            detail::polyak_update(td3.target_critic1, td3.critic1, cfg.polyak);
            detail::polyak_update(td3.target_critic2, td3.critic2, cfg.polyak);
            detail::polyak_update(td3.target_actor, td3.actor, cfg.polyak);
        }
    }
}

/// Policy-gradient mutation: n_steps of ascent on critic1's value of the
/// policy's greedy action over buffer states. n_steps = 0 returns the
/// genotype unchanged.
inline Genotype pg_variation(const Genotype& genotype, const Td3State& td3,
                             const ReplayBuffer& buffer, int n_steps, Rng& rng)
{
    Genotype child = genotype;
    if (n_steps == 0)
        return child;
    if (buffer.empty())
        throw std::runtime_error("pg_variation: empty buffer");
    const Eigen::Index b = td3.cfg.batch_size;
    AdamState opt(child.params.size(), td3.cfg.policy_lr);
    for (int step = 0; step < n_steps; ++step) {
        const auto idx = buffer.sample_indices(static_cast<std::size_t>(b), rng);
        Mat s(2, b);
        for (Eigen::Index i = 0; i < b; ++i)
            s.col(i) = buffer[idx[static_cast<std::size_t>(i)]].state;
        ForwardCache pcache;
        Mat prehead;
        Mat a = detail::greedy_actions(child, s, &pcache, &prehead);
        Mat x(4, b);
        x << s, a;
        ForwardCache ccache;
        Mat q;
        forward_batch(td3.critic1, x, q, &ccache);
        Mat ones = Mat::Ones(1, b);
        Vec cgrad;
        Mat xgrad;
        backward_batch(td3.critic1, ccache, ones, cgrad, &xgrad);
        const Eigen::Index k = prehead.rows() / 2;
        Mat upstream = Mat::Zero(prehead.rows(), b);
        upstream.topRows(k) = ((-1.0 / static_cast<double>(b))
                               * xgrad.bottomRows(2).array() * (1.0 - a.array().square()))
                                  .matrix();
        Vec grad;
        backward_batch(child, pcache, upstream, grad);
        adam_step(opt, child.params, grad);
    }
    return child;
}

/// Mean critic1 value of a policy's greedy actions over a fixed state batch.
inline double mean_policy_value(const Genotype& policy, const Td3State& td3, const Mat& states)
{
    Mat a = detail::greedy_actions(policy, states);
    Mat x(4, states.cols());
    x << states, a;
    Mat q;
    forward_batch(td3.critic1, x, q);
    return q.row(0).mean();
}

} // namespace skillbench

#pragma once

#include <Eigen/Core>

#include <stdexcept>

#include <skillbench/net.hpp>
#include <skillbench/policies.hpp>
#include <skillbench/rng.hpp>

namespace skillbench {

struct SacConfig {
    double alpha = 0.1; // fixed entropy temperature
    double discount = 0.99;
    double polyak = 0.005;
    double policy_lr = 3e-4;
    double critic_lr = 3e-4;
    int batch_size = 256;
    double reward_scaling = 1.0;
};

struct SacState {
    Genotype policy; // tanh-squashed gaussian head
    Genotype critic1, critic2, target_critic1, target_critic2;
    AdamState opt_policy, opt_critic1, opt_critic2;
    SacConfig cfg;
    std::int64_t updates = 0;
};

inline SacState make_sac(const std::shared_ptr<const NetSpec>& policy_spec,
                         const std::shared_ptr<const NetSpec>& critic_spec,
                         const SacConfig& cfg, Rng& rng)
{
    SacState sac;
    sac.cfg = cfg;
    sac.policy = init_genotype(policy_spec, rng);
    sac.critic1 = init_genotype(critic_spec, rng);
    sac.critic2 = init_genotype(critic_spec, rng);
    sac.target_critic1 = sac.critic1;
    sac.target_critic2 = sac.critic2;
    sac.opt_policy = AdamState(static_cast<Eigen::Index>(policy_spec->param_count()), cfg.policy_lr);
    sac.opt_critic1 = AdamState(static_cast<Eigen::Index>(critic_spec->param_count()), cfg.critic_lr);
    sac.opt_critic2 = AdamState(static_cast<Eigen::Index>(critic_spec->param_count()), cfg.critic_lr);
    return sac;
}

// Shaped batch, assembled by the trainer (rewards computed online there).
struct SacBatch {
    Mat obs;      // obs_dim x B
    Mat act;      // act_dim x B, normalized
    Vec reward;   // shaped reward
    Mat obs2;
    Vec not_done; // 1 - done
};

namespace detail {

// Batched reparameterized sampling plus head gradients, column per sample.
struct SampledActions {
    Mat action;   // k x B
    Vec log_prob; // B
    Mat da_dmean, da_dlog_std, dlogp_dmean, dlogp_dlog_std;
};

inline SampledActions sample_actions(const Mat& prehead, Rng& rng)
{
    const Eigen::Index k = prehead.rows() / 2;
    const Eigen::Index b = prehead.cols();
    SampledActions out;
    out.action = Mat(k, b);
    out.log_prob = Vec(b);
    out.da_dmean = Mat(k, b);
    out.da_dlog_std = Mat(k, b);
    out.dlogp_dmean = Mat(k, b);
    out.dlogp_dlog_std = Mat(k, b);
    for (Eigen::Index c = 0; c < b; ++c) {
        const Vec col = prehead.col(c);
        const auto s = gaussian_head::sample(col, rng);
        const auto g = gaussian_head::head_grads(col, s);
        out.action.col(c) = s.action;
        out.log_prob[c] = s.log_prob;
        out.da_dmean.col(c) = g.da_dmean;
        out.da_dlog_std.col(c) = g.da_dlog_std;
        out.dlogp_dmean.col(c) = g.dlogp_dmean;
        out.dlogp_dlog_std.col(c) = g.dlogp_dlog_std;
    }
    return out;
}

} // namespace detail

/// One SAC step: twin-critic soft Bellman targets, squashed-Gaussian policy
/// update against the per-sample min critic, polyak target update.
inline void sac_update(SacState& sac, const SacBatch& batch, Rng& rng)
{
    const SacConfig& cfg = sac.cfg;
    const Eigen::Index b = batch.obs.cols();
    const Eigen::Index obs_dim = batch.obs.rows();
    const Eigen::Index act_dim = batch.act.rows();

    // soft target values
    Mat prehead2;
    forward_batch(sac.policy, batch.obs2, prehead2);
    const auto next = detail::sample_actions(prehead2, rng);
    Mat x2(obs_dim + act_dim, b);
    x2 << batch.obs2, next.action;
    Mat q1t, q2t;
    forward_batch(sac.target_critic1, x2, q1t);
    forward_batch(sac.target_critic2, x2, q2t);
    const Vec y = (cfg.reward_scaling * batch.reward.array()
                   + cfg.discount * batch.not_done.array()
                         * (q1t.row(0).transpose().array().min(q2t.row(0).transpose().array())
                            - cfg.alpha * next.log_prob.array()))
                      .matrix();

    // critic regression
    Mat x(obs_dim + act_dim, b);
    x << batch.obs, batch.act;
    for (Genotype* critic : {&sac.critic1, &sac.critic2}) {
        ForwardCache cache;
        Mat q;
        forward_batch(*critic, x, q, &cache);
        Mat upstream = (2.0 / static_cast<double>(b)) * (q.row(0).transpose() - y).transpose();
        Vec grad;
        backward_batch(*critic, cache, upstream, grad);
        adam_step(critic == &sac.critic1 ? sac.opt_critic1 : sac.opt_critic2, critic->params, grad);
    }

    // policy: minimize alpha * log pi - min(Q1, Q2)
    ForwardCache pcache;
    Mat prehead;
    forward_batch(sac.policy, batch.obs, prehead, &pcache);
    const auto cur = detail::sample_actions(prehead, rng);
    Mat xa(obs_dim + act_dim, b);
    xa << batch.obs, cur.action;
    ForwardCache c1cache, c2cache;
    Mat q1, q2;
    forward_batch(sac.critic1, xa, q1, &c1cache);
    forward_batch(sac.critic2, xa, q2, &c2cache);
    Mat mask1 = Mat::Zero(1, b), mask2 = Mat::Zero(1, b);
    for (Eigen::Index c = 0; c < b; ++c)
        (q1(0, c) <= q2(0, c) ? mask1 : mask2)(0, c) = 1.0;
    Vec cgrad;
    Mat xgrad1, xgrad2;
    backward_batch(sac.critic1, c1cache, mask1, cgrad, &xgrad1);
    backward_batch(sac.critic2, c2cache, mask2, cgrad, &xgrad2);
    const Mat dq_da = xgrad1.bottomRows(act_dim) + xgrad2.bottomRows(act_dim); // masks are disjoint

    const double inv_b = 1.0 / static_cast<double>(b);
    Mat upstream(prehead.rows(), b);
    const Eigen::Index k = act_dim;
    upstream.topRows(k) = (inv_b
                           * (cfg.alpha * cur.dlogp_dmean.array()
                              - dq_da.array() * cur.da_dmean.array()))
                              .matrix();
    upstream.bottomRows(k) = (inv_b
                              * (cfg.alpha * cur.dlogp_dlog_std.array()
                                 - dq_da.array() * cur.da_dlog_std.array()))
                                 .matrix();
    Vec pgrad;
    backward_batch(sac.policy, pcache, upstream, pgrad);
    adam_step(sac.opt_policy, sac.policy.params, pgrad);

    // polyak-averaged targets
    sac.target_critic1.params = (1.0 - cfg.polyak) * sac.target_critic1.params + cfg.polyak * sac.critic1.params;
    sac.target_critic2.params = (1.0 - cfg.polyak) * sac.target_critic2.params + cfg.polyak * sac.critic2.params;
    ++sac.updates;
}

/// Mean |Q1| over a state/action batch; used by fixed-point tests.
inline double mean_abs_q(const SacState& sac, const Mat& obs, const Mat& act)
{
    Mat x(obs.rows() + act.rows(), obs.cols());
    x << obs, act;
    Mat q;
    forward_batch(sac.critic1, x, q);
    return q.row(0).cwiseAbs().mean();
}

} // namespace skillbench

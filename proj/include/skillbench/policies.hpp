#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>

#include <skillbench/net.hpp>
#include <skillbench/rng.hpp>

namespace skillbench {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Tanh-squashed Gaussian head over a 2k-wide pre-head output: first k
// channels are the mean, last k the raw log-std (clamped to [-5, 2]).
// Actions are normalized to (-1, 1); env adapters rescale.
namespace gaussian_head {

struct Sample {
    Vec action;      // tanh(u)
    Vec u;           // pre-squash
    Vec eps;         // noise used (reparameterization)
    double log_prob; // log pi(action | obs)
};

inline int action_dim(const NetSpec& spec) { return spec.output_dim() / 2; }

inline Vec mean_of(const Vec& prehead)
{
    return prehead.head(prehead.size() / 2);
}

inline Vec clamped_log_std(const Vec& prehead)
{
    return prehead.tail(prehead.size() / 2).array().min(kLogStdMax).max(kLogStdMin).matrix();
}

/// Greedy action tanh(mean), used for skill evaluation and TD3 actors.
inline Vec deterministic_action(const Vec& prehead)
{
    return mean_of(prehead).array().tanh().matrix();
}

// log(1 - tanh(u)^2) evaluated stably.
inline double log_one_minus_tanh_sq(double u)
{
    return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

inline Sample sample(const Vec& prehead, Rng& rng)
{
    const Eigen::Index k = prehead.size() / 2;
    Sample s;
    s.eps = Vec(k);
    for (Eigen::Index i = 0; i < k; ++i)
        s.eps[i] = rng.normal();
    const Vec mu = mean_of(prehead);
    const Vec log_std = clamped_log_std(prehead);
    const Vec sigma = log_std.array().exp().matrix();
    s.u = mu + sigma.cwiseProduct(s.eps);
    s.action = s.u.array().tanh().matrix();
    double lp = 0.0;
    for (Eigen::Index i = 0; i < k; ++i)
        lp += -0.5 * s.eps[i] * s.eps[i] - log_std[i] - 0.5 * std::log(2.0 * std::numbers::pi)
              - log_one_minus_tanh_sq(s.u[i]);
    s.log_prob = lp;
    return s;
}

// Gradients of (action, log_prob) w.r.t. the pre-head outputs, holding eps
// fixed. For each action channel i with a = tanh(u), sigma = exp(log_std):
//   d a / d mean      = 1 - a^2
//   d a / d log_std   = (1 - a^2) * sigma * eps       (zero where clamped)
//   d logp / d mean    = 2 a
//   d logp / d log_std = -1 + 2 a sigma eps            (zero where clamped)
// Callers combine these with loss gradients d loss/d a and d loss/d logp to
// form the upstream vector for backward_batch.
struct HeadGrads {
    Vec da_dmean, da_dlog_std, dlogp_dmean, dlogp_dlog_std;
};

inline HeadGrads head_grads(const Vec& prehead, const Sample& s)
{
    const Eigen::Index k = prehead.size() / 2;
    const Vec raw_log_std = prehead.tail(k);
    const Vec log_std = clamped_log_std(prehead);
    const Vec sigma = log_std.array().exp().matrix();
    HeadGrads g;
    g.da_dmean = Vec(k);
    g.da_dlog_std = Vec(k);
    g.dlogp_dmean = Vec(k);
    g.dlogp_dlog_std = Vec(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double a = s.action[i];
        const double one_m_a2 = 1.0 - a * a;
        const bool active = raw_log_std[i] > kLogStdMin && raw_log_std[i] < kLogStdMax;
        const double se = sigma[i] * s.eps[i];
        g.da_dmean[i] = one_m_a2;
        g.da_dlog_std[i] = active ? one_m_a2 * se : 0.0;
        g.dlogp_dmean[i] = 2.0 * a;
        g.dlogp_dlog_std[i] = active ? (-1.0 + 2.0 * a * se) : 0.0;
    }
    return g;
}

} // namespace gaussian_head

namespace categorical_head {

inline Vec log_softmax(const Vec& logits)
{
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return (logits.array() - lse).matrix();
}

inline Vec softmax(const Vec& logits) { return log_softmax(logits).array().exp().matrix(); }

inline int sample(const Vec& logits, Rng& rng)
{
    const Vec p = softmax(logits);
    double u = rng.uniform();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        u -= p[i];
        if (u < 0.0)
            return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
}

inline int argmax(const Vec& logits)
{
    Eigen::Index i;
    logits.maxCoeff(&i);
    return static_cast<int>(i);
}

} // namespace categorical_head

/// Builds a policy closure evaluating a genotype greedily (tanh of the mean),
/// scaled to env action units.
template <typename StateT>
auto make_deterministic_policy(Genotype g, double action_bound)
{
    return [g = std::move(g), action_bound](const StateT& state, Rng&) -> Vec {
        const Vec prehead = forward(g, state);
        return gaussian_head::deterministic_action(prehead) * action_bound;
    };
}

} // namespace skillbench

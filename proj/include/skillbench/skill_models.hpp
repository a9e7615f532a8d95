#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <skillbench/env.hpp>
#include <skillbench/net.hpp>
#include <skillbench/policies.hpp>

namespace skillbench {

inline constexpr double kDiaynProbFloor = 1e-6;
inline constexpr double kDadsDensityFloor = 1e-12;

/// Features the discriminator / skill-dynamics models see. Positional kinds
/// carry the (x, y) prior; point-gait (and prior-off configs) pass the full
/// state through. Point states are positions, so both slices coincide here;
/// the hook is what the prior toggle switches.
inline Vec descriptor_prior_features(const Vec2& state, const EnvSpec& spec, bool prior_enabled = true)
{
    if (spec.kind == EnvKind::PointGait || !prior_enabled) {
        Vec f(2);
        f << state.x(), state.y();
        return f;
    }
    Vec f(2);
    f << state.x(), state.y();
    return f;
}

inline int prior_feature_dim(const EnvSpec&) { return 2; }

// ---------------------------------------------------------------------------
// DIAYN discriminator q(z | s)

struct Discriminator {
    Genotype net; // categorical-logits head, |Z| outputs
    AdamState opt;
    int num_skills = 0;
};

inline Discriminator make_discriminator(int feature_dim, int num_skills, const std::vector<int>& hidden,
                                         double lr, Rng& rng)
{
    std::vector<int> sizes;
    sizes.push_back(feature_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(num_skills);
    Discriminator d;
    d.net = init_genotype(make_spec(sizes, Activation::Relu, OutputHead::CategoricalLogits), rng);
    d.opt = AdamState(static_cast<Eigen::Index>(d.net.spec->param_count()), lr);
    d.num_skills = num_skills;
    return d;
}

/// r = log q(z|s) - log p(z), probabilities floored before the log.
inline double diayn_reward(const Discriminator& disc, const Vec& features, int z)
{
    const Vec logits = forward(disc.net, features);
    const Vec p = categorical_head::softmax(logits);
    const double q = std::max(p[z], kDiaynProbFloor);
    return std::log(q) - std::log(1.0 / static_cast<double>(disc.num_skills));
}

/// Batched variant: one column per sample.
inline Vec diayn_reward_batch(const Discriminator& disc, const Mat& features, const std::vector<int>& z)
{
    Mat logits;
    forward_batch(disc.net, features, logits);
    Vec out(logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const Vec p = categorical_head::softmax(logits.col(c));
        out[c] = std::log(std::max(p[z[static_cast<std::size_t>(c)]], kDiaynProbFloor))
                 - std::log(1.0 / static_cast<double>(disc.num_skills));
    }
    return out;
}

/// One Adam step on the mean cross-entropy of skill labels. Returns the
/// pre-update loss.
inline double train_discriminator(Discriminator& disc, const Mat& features, const std::vector<int>& z)
{
    const Eigen::Index b = features.cols();
    ForwardCache cache;
    Mat logits;
    forward_batch(disc.net, features, logits, &cache);
    Mat upstream(logits.rows(), b);
    double loss = 0.0;
    for (Eigen::Index c = 0; c < b; ++c) {
        const Vec logp = categorical_head::log_softmax(logits.col(c));
        loss -= logp[z[static_cast<std::size_t>(c)]];
        Vec g = logp.array().exp().matrix(); // softmax
        g[z[static_cast<std::size_t>(c)]] -= 1.0;
        upstream.col(c) = g / static_cast<double>(b);
    }
    Vec grad;
    backward_batch(disc.net, cache, upstream, grad);
    adam_step(disc.opt, disc.net.params, grad);
    return loss / static_cast<double>(b);
}

// ---------------------------------------------------------------------------
// DADS skill dynamics q(delta s | z): per-skill Gaussian mixture, 4 experts,
// identity covariance, predicting normalized state deltas.

struct RunningNorm {
    std::int64_t count = 0;
    Vec mean, m2;

    void init(Eigen::Index dim)
    {
        mean = Vec::Zero(dim);
        m2 = Vec::Zero(dim);
        count = 0;
    }

    void update(const Vec& x)
    {
        if (mean.size() == 0)
            init(x.size());
        ++count;
        const Vec delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta.cwiseProduct(x - mean);
    }

    Vec stddev() const
    {
        if (count < 2)
            return Vec::Ones(mean.size());
        return (m2 / static_cast<double>(count - 1)).array().max(1e-12).sqrt().matrix();
    }

    Vec normalize(const Vec& x) const
    {
        if (count < 2)
            return x;
        return (x - mean).cwiseQuotient(stddev());
    }
};

struct SkillDynamics {
    Genotype net; // input: one-hot z; output: experts * (1 + delta_dim)
    AdamState opt;
    RunningNorm normalizer;
    int num_skills = 0;
    int num_experts = 4;
    int delta_dim = 0;
};

inline SkillDynamics make_skill_dynamics(int num_skills, int delta_dim, int num_experts,
                                         const std::vector<int>& hidden, double lr, Rng& rng)
{
    std::vector<int> sizes;
    sizes.push_back(num_skills);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(num_experts * (1 + delta_dim));
    SkillDynamics d;
    d.net = init_genotype(make_spec(sizes, Activation::Relu, OutputHead::Linear), rng);
    d.opt = AdamState(static_cast<Eigen::Index>(d.net.spec->param_count()), lr);
    d.normalizer.init(delta_dim);
    d.num_skills = num_skills;
    d.num_experts = num_experts;
    d.delta_dim = delta_dim;
    return d;
}

inline Vec one_hot(int z, int n)
{
    Vec v = Vec::Zero(n);
    v[z] = 1.0;
    return v;
}

namespace detail {

// Output layout per expert k: [weight logit_k, mu_k (delta_dim)].
inline double gmm_log_density(const Vec& out, const Vec& delta_norm, int experts, int dim)
{
    Vec logits(experts);
    for (int k = 0; k < experts; ++k)
        logits[k] = out[k * (1 + dim)];
    const Vec logw = categorical_head::log_softmax(logits);
    double best = -std::numeric_limits<double>::infinity();
    Vec terms(experts);
    for (int k = 0; k < experts; ++k) {
        const Vec mu = out.segment(k * (1 + dim) + 1, dim);
        terms[k] = logw[k] - 0.5 * (delta_norm - mu).squaredNorm()
                   - 0.5 * dim * std::log(2.0 * std::numbers::pi);
        best = std::max(best, terms[k]);
    }
    double s = 0.0;
    for (int k = 0; k < experts; ++k)
        s += std::exp(terms[k] - best);
    return best + std::log(s);
}

} // namespace detail

inline double dynamics_log_density(const SkillDynamics& dyn, int z, const Vec& delta_norm)
{
    const Vec out = forward(dyn.net, one_hot(z, dyn.num_skills));
    return detail::gmm_log_density(out, delta_norm, dyn.num_experts, dyn.delta_dim);
}

/// r = log q(ds|z) - log((1/|Z|) sum_z' q(ds|z')), densities floored.
inline double dads_reward(const SkillDynamics& dyn, const Vec& delta_raw, int z)
{
    const Vec dn = dyn.normalizer.normalize(delta_raw);
    Mat outs;
    forward_batch(dyn.net, Mat::Identity(dyn.num_skills, dyn.num_skills), outs);
    double marginal = 0.0;
    double dens_z = 0.0;
    for (int k = 0; k < dyn.num_skills; ++k) {
        const double d = std::max(std::exp(detail::gmm_log_density(outs.col(k), dn, dyn.num_experts, dyn.delta_dim)),
                                  kDadsDensityFloor);
        marginal += d;
        if (k == z)
            dens_z = d;
    }
    marginal /= static_cast<double>(dyn.num_skills);
    return std::log(dens_z) - std::log(marginal);
}

/// Batched rewards for (delta, z) pairs sharing one forward pass.
inline Vec dads_reward_batch(const SkillDynamics& dyn, const Mat& deltas_raw, const std::vector<int>& z)
{
    Mat outs;
    forward_batch(dyn.net, Mat::Identity(dyn.num_skills, dyn.num_skills), outs);
    Vec rewards(deltas_raw.cols());
    for (Eigen::Index c = 0; c < deltas_raw.cols(); ++c) {
        const Vec dn = dyn.normalizer.normalize(deltas_raw.col(c));
        double marginal = 0.0, dens_z = 0.0;
        for (int k = 0; k < dyn.num_skills; ++k) {
            const double d = std::max(
                std::exp(detail::gmm_log_density(outs.col(k), dn, dyn.num_experts, dyn.delta_dim)),
                kDadsDensityFloor);
            marginal += d;
            if (k == z[static_cast<std::size_t>(c)])
                dens_z = d;
        }
        marginal /= static_cast<double>(dyn.num_skills);
        rewards[c] = std::log(dens_z) - std::log(marginal);
    }
    return rewards;
}

/// Updates the running normalizer with the batch targets, then takes one
/// Adam step on the mean negative log-likelihood. Returns the pre-update
/// mean NLL (under the refreshed normalizer).
inline double train_skill_dynamics(SkillDynamics& dyn, const Mat& deltas_raw, const std::vector<int>& z)
{
    const Eigen::Index b = deltas_raw.cols();
    for (Eigen::Index c = 0; c < b; ++c)
        dyn.normalizer.update(deltas_raw.col(c));

    Mat inputs(dyn.num_skills, b);
    for (Eigen::Index c = 0; c < b; ++c)
        inputs.col(c) = one_hot(z[static_cast<std::size_t>(c)], dyn.num_skills);
    ForwardCache cache;
    Mat outs;
    forward_batch(dyn.net, inputs, outs, &cache);

    const int E = dyn.num_experts, D = dyn.delta_dim;
    Mat upstream = Mat::Zero(outs.rows(), b);
    double nll = 0.0;
    for (Eigen::Index c = 0; c < b; ++c) {
        const Vec dn = dyn.normalizer.normalize(deltas_raw.col(c));
        Vec logits(E);
        for (int k = 0; k < E; ++k)
            logits[k] = outs(k * (1 + D), c);
        const Vec logw = categorical_head::log_softmax(logits);
        Vec terms(E);
        for (int k = 0; k < E; ++k) {
            const Vec mu = outs.col(c).segment(k * (1 + D) + 1, D);
            terms[k] = logw[k] - 0.5 * (dn - mu).squaredNorm() - 0.5 * D * std::log(2.0 * std::numbers::pi);
        }
        const double m = terms.maxCoeff();
        const double lse = m + std::log((terms.array() - m).exp().sum());
        nll -= lse;
        const Vec posterior = (terms.array() - lse).exp().matrix();
        const Vec pw = logw.array().exp().matrix();
        for (int k = 0; k < E; ++k) {
            upstream(k * (1 + D), c) = (pw[k] - posterior[k]) / static_cast<double>(b);
            const Vec mu = outs.col(c).segment(k * (1 + D) + 1, D);
            upstream.col(c).segment(k * (1 + D) + 1, D) = -posterior[k] * (dn - mu) / static_cast<double>(b);
        }
    }
    Vec grad;
    backward_batch(dyn.net, cache, upstream, grad);
    adam_step(dyn.opt, dyn.net.params, grad);
    return nll / static_cast<double>(b);
}

// ---------------------------------------------------------------------------
// Reward shaping

enum class ShapingMode { Sum, SmerlGate, None };

struct ShapingConfig {
    ShapingMode mode = ShapingMode::Sum;
    double beta = 2.0;
    double target_return = 0.0;
    double epsilon = 0.0;
};

/// sum: r_env + beta * r_div. smerl-gate: diversity added only when the
/// transition's episode return reaches target - epsilon (boundary included).
inline double shape_reward(double r_env, double r_div, const ShapingConfig& cfg, double episode_return)
{
    switch (cfg.mode) {
    case ShapingMode::Sum:
        return r_env + cfg.beta * r_div;
    case ShapingMode::SmerlGate:
        return episode_return >= cfg.target_return - cfg.epsilon ? r_env + cfg.beta * r_div : r_env;
    case ShapingMode::None:
        return r_env;
    }
    return r_env;
}

} // namespace skillbench

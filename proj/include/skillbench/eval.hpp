#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <skillbench/env.hpp>
#include <skillbench/policies.hpp>
#include <skillbench/ppo.hpp>
#include <skillbench/repertoire.hpp>
#include <skillbench/skill_rl.hpp>
#include <skillbench/thread_pool.hpp>

namespace skillbench {

struct Skill {
    std::int64_t id = 0;
    PolicyFn policy;
};

inline std::vector<Skill> skills_from_repertoire(const CvtRepertoire& rep, double action_bound)
{
    std::vector<Skill> out;
    for (int c : rep.occupied_cells())
        out.push_back({c, make_deterministic_policy<Vec2>(rep.cell(c)->genotype, action_bound)});
    return out;
}

inline std::vector<Skill> skills_from_skillset(const SkillSet& skills, double action_bound)
{
    std::vector<Skill> out;
    for (int z = 0; z < skills.num_skills; ++z)
        out.push_back({z, make_skill_policy(skills, z, action_bound)});
    return out;
}

/// Linear-interpolation quantile of a sample (q in [0, 1]).
inline double quantile(std::vector<double> values, double q)
{
    if (values.empty())
        throw std::invalid_argument("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

struct AdaptationRow {
    double value = 1.0;        // perturbation value (or target index)
    std::int64_t best_skill = -1;
    double median_fitness = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    double fitness_gain = 0.0; // (median - nominal) / |nominal|
};

struct AdaptationReport {
    std::vector<AdaptationRow> rows;
    double nominal_fitness = 0.0; // best median on the unperturbed env
};

namespace detail {

/// Best-median skill on one env variant: every skill evaluated n_eval times
/// with seeds that depend only on (skill index, eval index), so the nominal
/// grid point reproduces the nominal row exactly.
inline AdaptationRow best_median_on(const std::vector<Skill>& skills, const EnvSpec& env, int n_eval,
                                    const Rng& seed_root, ThreadPool& pool)
{
    const std::size_t total = skills.size() * static_cast<std::size_t>(n_eval);
    std::vector<double> fitness(total);
    pool.parallel_for(total, [&](std::size_t k) {
        const std::size_t s = k / static_cast<std::size_t>(n_eval);
        const std::size_t e = k % static_cast<std::size_t>(n_eval);
        const std::uint64_t seed = seed_root.derive(rng_tag::kEval, s * 1048576ull + e).stream_seed();
        fitness[k] = rollout(skills[s].policy, env, seed).fitness;
    }, 4);
    AdaptationRow best;
    bool first = true;
    for (std::size_t s = 0; s < skills.size(); ++s) {
        std::vector<double> vals(fitness.begin() + static_cast<long>(s * static_cast<std::size_t>(n_eval)),
                                 fitness.begin() + static_cast<long>((s + 1) * static_cast<std::size_t>(n_eval)));
        const double med = median(vals);
        if (first || med > best.median_fitness) {
            best.best_skill = skills[s].id;
            best.median_fitness = med;
            best.q25 = quantile(vals, 0.25);
            best.q75 = quantile(vals, 0.75);
            first = false;
        }
    }
    return best;
}

inline double relative_gain(double med, double nominal)
{
    if (med == nominal)
        return 0.0;
    return (med - nominal) / std::abs(nominal);
}

} // namespace detail

/// The perturbation-grid protocol: every skill evaluated n_eval times per
/// grid value, best median kept, gains relative to the nominal env.
inline AdaptationReport adaptation_eval(const std::vector<Skill>& skills, const EnvSpec& env, PerturbKind kind,
                                        const std::vector<int>& channels, const std::vector<double>& grid,
                                        int n_eval, std::uint64_t seed, ThreadPool& pool)
{
    if (skills.empty())
        throw std::invalid_argument("adaptation_eval: empty skill list");
    const Rng root(seed);
    AdaptationReport report;
    AdaptationRow nominal = detail::best_median_on(skills, env, n_eval, root, pool);
    nominal.value = 1.0;
    report.nominal_fitness = nominal.median_fitness;
    for (double v : grid) {
        const EnvSpec perturbed = apply_perturbation(env, kind, v, channels);
        AdaptationRow row = detail::best_median_on(skills, perturbed, n_eval, root, pool);
        row.value = v;
        row.fitness_gain = detail::relative_gain(row.median_fitness, report.nominal_fitness);
        report.rows.push_back(row);
    }
    return report;
}

struct TargetAdaptationRow {
    Vec2 target{0.0, 0.0};
    AdaptationRow row;
};

struct TargetAdaptationReport {
    std::vector<TargetAdaptationRow> rows;
    double nominal_fitness = 0.0;
};

/// Task adaptation: move the reward target, physics untouched.
inline TargetAdaptationReport target_adaptation_eval(const std::vector<Skill>& skills, const EnvSpec& env,
                                                     const std::vector<Vec2>& targets, int n_eval,
                                                     std::uint64_t seed, ThreadPool& pool)
{
    if (skills.empty())
        throw std::invalid_argument("target_adaptation_eval: empty skill list");
    if (!env.target)
        throw std::invalid_argument("target_adaptation_eval: env has no target");
    const Rng root(seed);
    TargetAdaptationReport report;
    const AdaptationRow nominal = detail::best_median_on(skills, env, n_eval, root, pool);
    report.nominal_fitness = nominal.median_fitness;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const EnvSpec moved = apply_move_target(env, targets[t]);
        TargetAdaptationRow tr;
        tr.target = targets[t];
        tr.row = detail::best_median_on(skills, moved, n_eval, root, pool);
        tr.row.value = static_cast<double>(t);
        tr.row.fitness_gain = detail::relative_gain(tr.row.median_fitness, report.nominal_fitness);
        report.rows.push_back(tr);
    }
    return report;
}

/// Uniformly sampled in-arena targets for the task-adaptation protocol.
inline std::vector<Vec2> sample_targets(const EnvSpec& env, int count, std::uint64_t seed)
{
    Rng rng = Rng(seed).derive(rng_tag::kEval);
    std::vector<Vec2> out;
    for (int i = 0; i < count; ++i)
        out.emplace_back(rng.uniform(env.arena.xmin, env.arena.xmax), rng.uniform(env.arena.ymin, env.arena.ymax));
    return out;
}

// ---------------------------------------------------------------------------
// Hierarchical composition: PPO meta-controller over frozen skills.

struct HierConfig {
    int skill_hold = 10;
    std::int64_t budget_env_steps = 2'000'000;
    int final_eval_episodes = 11;
    PpoConfig ppo;
};

struct HierCurvePoint {
    std::int64_t env_steps = 0;
    double mean_episode_return = 0.0;
};

struct HierResult {
    std::vector<HierCurvePoint> curve;
    double final_meta_fitness = 0.0; // median deterministic-eval return
    std::vector<int> final_skill_sequence; // executed skill per env step (last eval episode)
};

/// Meta-observation: position plus one-hot of the previously executed skill.
inline Vec meta_obs(const Vec2& state, int last_skill, int num_skills)
{
    Vec obs = Vec::Zero(2 + num_skills);
    obs[0] = state.x();
    obs[1] = state.y();
    if (last_skill >= 0)
        obs[2 + last_skill] = 1.0;
    return obs;
}

/// Rolls one meta-episode with a fixed skill-selection function.
/// Returns (env return, executed skill index per env step).
template <typename SelectFn>
std::pair<double, std::vector<int>> meta_episode(const std::vector<Skill>& skills, const EnvSpec& env,
                                                 int skill_hold, std::uint64_t seed, SelectFn&& select)
{
    Vec2 state = env_reset(env, seed);
    Rng policy_rng = Rng(seed).derive(rng_tag::kPolicy);
    double ep_return = 0.0;
    std::vector<int> executed;
    int last_skill = -1;
    for (int t = 0; t < env.horizon;) {
        const int choice = select(meta_obs(state, last_skill, static_cast<int>(skills.size())));
        for (int h = 0; h < skill_hold && t < env.horizon; ++h, ++t) {
            const Vec a = skills[static_cast<std::size_t>(choice)].policy(state, policy_rng);
            const StepResult sr = env_step(env, state, Vec2(a[0], a[1]), t);
            ep_return += sr.reward;
            state = sr.next_state;
            executed.push_back(choice);
        }
        last_skill = choice;
    }
    return {ep_return, executed};
}

/// Trains the PPO meta-controller; skills stay frozen. The curve reports the
/// mean return of episodes finished since the previous update.
inline HierResult hierarchical_train(const std::vector<Skill>& skills, const EnvSpec& env, const HierConfig& cfg,
                                     std::uint64_t seed)
{
    if (skills.size() < 1)
        throw std::invalid_argument("hierarchical_train: need at least one skill");
    const int K = static_cast<int>(skills.size());
    Rng master(seed);
    Rng init_rng = master.derive(rng_tag::kInit);
    Rng update_rng = master.derive(rng_tag::kLearner);
    PpoAgent agent(2 + K, K, cfg.ppo, init_rng);

    HierResult result;
    std::int64_t env_steps = 0;
    std::int64_t episode = 0;

    Vec2 state;
    int t = 0;
    int last_skill = -1;
    double ep_return = 0.0;
    Rng policy_rng{0};
    auto begin_episode = [&] {
        const std::uint64_t tag = static_cast<std::uint64_t>(episode);
        state = env_reset(env, master.derive(rng_tag::kEnvReset, tag).stream_seed());
        policy_rng = master.derive(rng_tag::kPolicy, tag);
        t = 0;
        last_skill = -1;
        ep_return = 0.0;
    };
    begin_episode();

    std::vector<PpoAgent::Step> rollout_buf;
    rollout_buf.reserve(static_cast<std::size_t>(cfg.ppo.rollout_len));
    double window_return_sum = 0.0;
    int window_episodes = 0;

    Rng act_rng = master.derive(rng_tag::kMeta);
    while (env_steps < cfg.budget_env_steps) {
        const Vec obs = meta_obs(state, last_skill, K);
        const auto act = agent.act(obs, act_rng);
        double meta_reward = 0.0;
        for (int h = 0; h < cfg.skill_hold && t < env.horizon; ++h, ++t) {
            const Vec a = skills[static_cast<std::size_t>(act.action)].policy(state, policy_rng);
            const StepResult sr = env_step(env, state, Vec2(a[0], a[1]), t);
            meta_reward += sr.reward;
            state = sr.next_state;
            ++env_steps;
        }
        last_skill = act.action;
        ep_return += meta_reward;
        const bool terminal = t >= env.horizon;
        rollout_buf.push_back({obs, act.action, act.log_prob, act.value, meta_reward, terminal});
        if (terminal) {
            window_return_sum += ep_return;
            ++window_episodes;
            ++episode;
            begin_episode();
        }
        if (static_cast<int>(rollout_buf.size()) >= cfg.ppo.rollout_len) {
            const double bootstrap = rollout_buf.back().terminal ? 0.0 : agent.value_of(meta_obs(state, last_skill, K));
            agent.update(rollout_buf, bootstrap, update_rng);
            rollout_buf.clear();
            if (window_episodes > 0)
                result.curve.push_back({env_steps, window_return_sum / window_episodes});
            window_return_sum = 0.0;
            window_episodes = 0;
        }
    }

    // deterministic final evaluation
    std::vector<double> finals;
    for (int e = 0; e < cfg.final_eval_episodes; ++e) {
        const std::uint64_t eseed = master.derive(rng_tag::kEval, static_cast<std::uint64_t>(e)).stream_seed();
        auto [ret, executed] = meta_episode(skills, env, cfg.skill_hold, eseed,
                                            [&](const Vec& o) { return agent.act_greedy(o); });
        finals.push_back(ret);
        if (e + 1 == cfg.final_eval_episodes)
            result.final_skill_sequence = std::move(executed);
    }
    result.final_meta_fitness = median(finals);
    return result;
}

} // namespace skillbench

#pragma once

#include <Eigen/Core>

#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <skillbench/env.hpp>
#include <skillbench/io.hpp>
#include <skillbench/net.hpp>
#include <skillbench/policies.hpp>
#include <skillbench/replay_buffer.hpp>
#include <skillbench/repertoire.hpp>
#include <skillbench/sac.hpp>
#include <skillbench/skill_models.hpp>
#include <skillbench/thread_pool.hpp>

namespace skillbench {

enum class MiMethod { DiaynReward, DadsReward, SmerlDiayn, SmerlDads };

inline bool mi_uses_dads(MiMethod m) { return m == MiMethod::DadsReward || m == MiMethod::SmerlDads; }
inline bool mi_uses_gate(MiMethod m) { return m == MiMethod::SmerlDiayn || m == MiMethod::SmerlDads; }

// Latent-conditioned policy with a discrete uniform skill prior.
struct SkillSet {
    Genotype policy; // input: state (+) one-hot z
    int num_skills = 5;
    Vec prior;

    void validate() const
    {
        if (num_skills < 1)
            throw std::invalid_argument("SkillSet: need at least one skill");
        if (prior.size() != num_skills || std::abs(prior.sum() - 1.0) > 1e-9)
            throw std::invalid_argument("SkillSet: prior must sum to 1");
    }
};

inline Vec skill_obs(const Vec2& state, int z, int num_skills)
{
    Vec obs(2 + num_skills);
    obs.setZero();
    obs[0] = state.x();
    obs[1] = state.y();
    obs[2 + z] = 1.0;
    return obs;
}

/// Greedy (deterministic) policy for one latent value, in env action units.
inline PolicyFn make_skill_policy(const SkillSet& skills, int z, double action_bound)
{
    Genotype g = skills.policy;
    const int n = skills.num_skills;
    return [g = std::move(g), z, n, action_bound](const Vec2& state, Rng&) -> Vec {
        const Vec prehead = forward(g, skill_obs(state, z, n));
        return gaussian_head::deterministic_action(prehead) * action_bound;
    };
}

/// Stochastic variant used while collecting experience.
inline PolicyFn make_skill_policy_stochastic(const SkillSet& skills, int z, double action_bound)
{
    Genotype g = skills.policy;
    const int n = skills.num_skills;
    return [g = std::move(g), z, n, action_bound](const Vec2& state, Rng& rng) -> Vec {
        const Vec prehead = forward(g, skill_obs(state, z, n));
        return gaussian_head::sample(prehead, rng).action * action_bound;
    };
}

/// count episodes, each under a single skill drawn from the prior.
/// Returns (trajectory, skill) pairs in input order.
inline std::vector<std::pair<Trajectory, int>> skill_rollout_batch(const SkillSet& skills, const EnvSpec& env,
                                                                   int count, Rng& rng, ThreadPool& pool)
{
    std::vector<int> zs(static_cast<std::size_t>(count));
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        zs[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(skills.num_skills)));
        seeds[static_cast<std::size_t>(i)] = rng.next_u64();
    }
    std::vector<PolicyFn> policies;
    policies.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        policies.push_back(make_skill_policy_stochastic(skills, zs[static_cast<std::size_t>(i)], env.action_bound));
    auto trajs = rollout_batch(policies, env, seeds, pool);
    std::vector<std::pair<Trajectory, int>> out;
    out.reserve(trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i)
        out.emplace_back(std::move(trajs[i]), zs[i]);
    return out;
}

struct SkillRlConfig {
    int num_skills = 5;
    int env_batch = 200;        // parallel env copies stepped per collection
    int updates_per_collection = 1;
    int batch_size = 256;
    double alpha = 0.1;
    double discount = 0.99;
    double polyak = 0.005;
    double policy_lr = 3e-4;
    double critic_lr = 3e-4;
    double model_lr = 3e-4;
    double reward_multiplier = 1.0;
    std::vector<int> policy_hidden{64, 64};
    std::vector<int> critic_hidden{64, 64};
    std::vector<int> model_hidden{64, 64};
    int dads_experts = 4;
    std::size_t buffer_capacity = 1'000'000;
    std::int64_t passive_cadence = 100'000; // env steps between passive records
    int passive_cells = 1024;
    bool prior_features = true;
    ShapingConfig shaping;
};

// Trains one of the four MI variants and feeds a passive CVT repertoire on a
// fixed env-step cadence.
class SkillRlTrainer {
public:
    SkillRlTrainer(MiMethod method, EnvSpec env, SkillRlConfig cfg, std::uint64_t seed, ThreadPool& pool)
        : method_(method), env_(std::move(env)), cfg_(std::move(cfg)), pool_(pool),
          master_(seed), learner_rng_(Rng(seed).derive(rng_tag::kLearner))
    {
        env_.validate();
        Rng init_rng = master_.derive(rng_tag::kInit);

        const int obs_dim = 2 + cfg_.num_skills;
        std::vector<int> pol_sizes{obs_dim};
        pol_sizes.insert(pol_sizes.end(), cfg_.policy_hidden.begin(), cfg_.policy_hidden.end());
        pol_sizes.push_back(2 * env_.action_dim());
        std::vector<int> cri_sizes{obs_dim + env_.action_dim()};
        cri_sizes.insert(cri_sizes.end(), cfg_.critic_hidden.begin(), cfg_.critic_hidden.end());
        cri_sizes.push_back(1);

        SacConfig sc;
        sc.alpha = cfg_.alpha;
        sc.discount = cfg_.discount;
        sc.polyak = cfg_.polyak;
        sc.policy_lr = cfg_.policy_lr;
        sc.critic_lr = cfg_.critic_lr;
        sc.batch_size = cfg_.batch_size;
        sac_ = make_sac(make_spec(pol_sizes, Activation::Tanh, OutputHead::TanhSquashedGaussian),
                        make_spec(cri_sizes, Activation::Relu, OutputHead::Linear), sc, init_rng);

        skills_.policy = sac_.policy;
        skills_.num_skills = cfg_.num_skills;
        skills_.prior = Vec::Constant(cfg_.num_skills, 1.0 / cfg_.num_skills);

        const int fdim = prior_feature_dim(env_);
        if (mi_uses_dads(method_))
            dynamics_ = make_skill_dynamics(cfg_.num_skills, fdim, cfg_.dads_experts, cfg_.model_hidden,
                                            cfg_.model_lr, init_rng);
        else
            discriminator_ = make_discriminator(fdim, cfg_.num_skills, cfg_.model_hidden, cfg_.model_lr, init_rng);

        buffer_ = ReplayBuffer(cfg_.buffer_capacity);

        const Box2 dbox = env_.descriptor_box();
        BoxN bounds;
        bounds.lo = Vec(2);
        bounds.hi = Vec(2);
        bounds.lo << dbox.xmin, dbox.ymin;
        bounds.hi << dbox.xmax, dbox.ymax;
        passive_ = CvtRepertoire(build_cvt_centroids(cfg_.passive_cells, bounds, master_.derive(rng_tag::kCvt).stream_seed(), &pool_),
                                 bounds);

        next_passive_ = cfg_.passive_cadence;
        instances_.resize(static_cast<std::size_t>(cfg_.env_batch));
        for (int i = 0; i < cfg_.env_batch; ++i)
            reset_instance(i);
    }

    std::int64_t env_steps() const { return env_steps_; }
    const CvtRepertoire& passive_repertoire() const { return passive_; }
    const SkillSet& skills() const { return skills_; }
    const EnvSpec& env() const { return env_; }
    MiMethod method() const { return method_; }
    double best_eval_return() const { return best_eval_return_; }
    std::int64_t rounds() const { return round_; }

    /// One synchronized env step across all copies plus the scheduled
    /// learner updates; triggers passive records on cadence.
    void step()
    {
        collect_round();
        if (!buffer_.empty())
            for (int u = 0; u < cfg_.updates_per_collection; ++u)
                learner_step();
        ++round_;
        while (env_steps_ >= next_passive_) {
            passive_record();
            next_passive_ += cfg_.passive_cadence;
        }
    }

    /// Deterministic evaluation of one skill; the fitness also refreshes the
    /// best-return tracker used by the SMERL target helper.
    double evaluate_skill(int z, std::uint64_t eval_seed)
    {
        const auto traj = rollout(make_skill_policy(skills_, z, env_.action_bound), env_, eval_seed);
        best_eval_return_ = std::max(best_eval_return_, traj.fitness);
        return traj.fitness;
    }

    /// Evaluates every skill once and inserts into the passive repertoire.
    void passive_record()
    {
        std::vector<PolicyFn> policies;
        std::vector<std::uint64_t> seeds;
        for (int z = 0; z < cfg_.num_skills; ++z) {
            policies.push_back(make_skill_policy(skills_, z, env_.action_bound));
            seeds.push_back(master_.derive(rng_tag::kEval, static_cast<std::uint64_t>(passive_records_) * 1024
                                                                + static_cast<std::uint64_t>(z))
                                .stream_seed());
        }
        const auto trajs = rollout_batch(policies, env_, seeds, pool_);
        for (int z = 0; z < cfg_.num_skills; ++z) {
            best_eval_return_ = std::max(best_eval_return_, trajs[static_cast<std::size_t>(z)].fitness);
            passive_.insert(skills_.policy, trajs[static_cast<std::size_t>(z)].fitness,
                            trajs[static_cast<std::size_t>(z)].descriptor);
        }
        ++passive_records_;
    }

    std::int64_t passive_records() const { return passive_records_; }

    void save(std::ostream& os) const
    {
        BinWriter w(os);
        w.u32(0x534b524c); // "LRKS"
        w.i64(env_steps_);
        w.i64(round_);
        w.i64(passive_records_);
        w.i64(next_passive_);
        w.f64(best_eval_return_);
        write_rng(w, learner_rng_);
        write_genotype_exact(w, sac_.policy);
        write_genotype_exact(w, sac_.critic1);
        write_genotype_exact(w, sac_.critic2);
        write_genotype_exact(w, sac_.target_critic1);
        write_genotype_exact(w, sac_.target_critic2);
        write_adam(w, sac_.opt_policy);
        write_adam(w, sac_.opt_critic1);
        write_adam(w, sac_.opt_critic2);
        w.i64(sac_.updates);
        if (mi_uses_dads(method_)) {
            write_genotype_exact(w, dynamics_.net);
            write_adam(w, dynamics_.opt);
            w.i64(dynamics_.normalizer.count);
            w.vec(dynamics_.normalizer.mean);
            w.vec(dynamics_.normalizer.m2);
        } else {
            write_genotype_exact(w, discriminator_.net);
            write_adam(w, discriminator_.opt);
        }
        write_repertoire_exact(w, passive_);
        // buffer
        w.u64(buffer_.size());
        w.u64(buffer_.write_cursor());
        for (const auto& t : buffer_.data()) {
            w.f64(t.state.x());
            w.f64(t.state.y());
            w.f64(t.action.x());
            w.f64(t.action.y());
            w.f64(t.next_state.x());
            w.f64(t.next_state.y());
            w.f64(t.reward_env);
            w.u8(t.done ? 1 : 0);
            w.f64(t.episode_return);
            w.i32(t.skill);
        }
        // env instances
        w.u64(instances_.size());
        for (const auto& in : instances_) {
            w.f64(in.state.x());
            w.f64(in.state.y());
            w.i32(in.t);
            w.i64(in.episode);
            w.i32(in.z);
            w.f64(in.ep_return);
            write_rng(w, in.policy_rng);
            w.u64(in.pending.size());
            for (const auto& t : in.pending) {
                w.f64(t.state.x());
                w.f64(t.state.y());
                w.f64(t.action.x());
                w.f64(t.action.y());
                w.f64(t.next_state.x());
                w.f64(t.next_state.y());
                w.f64(t.reward_env);
                w.u8(t.done ? 1 : 0);
                w.i32(t.skill);
            }
        }
    }

    void load(std::istream& is)
    {
        BinReader r(is);
        if (r.u32() != 0x534b524c)
            throw std::runtime_error("skill-rl checkpoint: bad magic");
        env_steps_ = r.i64();
        round_ = r.i64();
        passive_records_ = r.i64();
        next_passive_ = r.i64();
        best_eval_return_ = r.f64();
        learner_rng_ = read_rng(r);
        sac_.policy = read_genotype_exact(r);
        sac_.critic1 = read_genotype_exact(r);
        sac_.critic2 = read_genotype_exact(r);
        sac_.target_critic1 = read_genotype_exact(r);
        sac_.target_critic2 = read_genotype_exact(r);
        sac_.opt_policy = read_adam(r);
        sac_.opt_critic1 = read_adam(r);
        sac_.opt_critic2 = read_adam(r);
        sac_.updates = r.i64();
        if (mi_uses_dads(method_)) {
            dynamics_.net = read_genotype_exact(r);
            dynamics_.opt = read_adam(r);
            dynamics_.normalizer.count = r.i64();
            dynamics_.normalizer.mean = r.vec();
            dynamics_.normalizer.m2 = r.vec();
        } else {
            discriminator_.net = read_genotype_exact(r);
            discriminator_.opt = read_adam(r);
        }
        skills_.policy = sac_.policy;
        passive_ = read_repertoire_exact(r);
        const auto bsize = r.u64();
        const auto cursor = r.u64();
        buffer_ = ReplayBuffer(cfg_.buffer_capacity);
        for (std::uint64_t i = 0; i < bsize; ++i) {
            BufferTransition t;
            t.state.x() = r.f64();
            t.state.y() = r.f64();
            t.action.x() = r.f64();
            t.action.y() = r.f64();
            t.next_state.x() = r.f64();
            t.next_state.y() = r.f64();
            t.reward_env = r.f64();
            t.done = r.u8() != 0;
            t.episode_return = r.f64();
            t.skill = r.i32();
            buffer_.data_mutable().push_back(t);
        }
        buffer_.set_write_cursor(cursor);
        const auto ninst = r.u64();
        instances_.resize(ninst);
        for (auto& in : instances_) {
            in.state.x() = r.f64();
            in.state.y() = r.f64();
            in.t = r.i32();
            in.episode = r.i64();
            in.z = r.i32();
            in.ep_return = r.f64();
            in.policy_rng = read_rng(r);
            const auto npend = r.u64();
            in.pending.clear();
            for (std::uint64_t k = 0; k < npend; ++k) {
                BufferTransition t;
                t.state.x() = r.f64();
                t.state.y() = r.f64();
                t.action.x() = r.f64();
                t.action.y() = r.f64();
                t.next_state.x() = r.f64();
                t.next_state.y() = r.f64();
                t.reward_env = r.f64();
                t.done = r.u8() != 0;
                t.skill = r.i32();
                in.pending.push_back(t);
            }
        }
    }

private:
    struct EnvInstance {
        Vec2 state{0.0, 0.0};
        int t = 0;
        std::int64_t episode = -1;
        int z = 0;
        double ep_return = 0.0;
        std::vector<BufferTransition> pending;
        Rng policy_rng{0};
    };

    void reset_instance(int i)
    {
        auto& in = instances_[static_cast<std::size_t>(i)];
        in.episode += 1;
        const std::uint64_t tag = static_cast<std::uint64_t>(i) * 0x100000ull + static_cast<std::uint64_t>(in.episode);
        in.state = env_reset(env_, master_.derive(rng_tag::kEnvReset, tag).stream_seed());
        in.policy_rng = master_.derive(rng_tag::kPolicy, tag);
        Rng zrng = master_.derive(rng_tag::kSkill, tag);
        in.z = static_cast<int>(zrng.uniform_int(static_cast<std::uint64_t>(cfg_.num_skills)));
        in.t = 0;
        in.ep_return = 0.0;
        in.pending.clear();
    }

    void collect_round()
    {
        const int n = cfg_.env_batch;
        Mat obs(2 + cfg_.num_skills, n);
        for (int i = 0; i < n; ++i)
            obs.col(i) = skill_obs(instances_[static_cast<std::size_t>(i)].state,
                                   instances_[static_cast<std::size_t>(i)].z, cfg_.num_skills);
        Mat prehead;
        forward_batch(sac_.policy, obs, prehead);
        for (int i = 0; i < n; ++i) {
            auto& in = instances_[static_cast<std::size_t>(i)];
            const auto sample = gaussian_head::sample(prehead.col(i), in.policy_rng);
            const Vec2 a_env(sample.action[0] * env_.action_bound, sample.action[1] * env_.action_bound);
            const StepResult sr = env_step(env_, in.state, a_env, in.t);
            BufferTransition t;
            t.state = in.state;
            t.action = sr.clipped_action / env_.action_bound;
            t.next_state = sr.next_state;
            t.reward_env = sr.reward;
            t.done = false; // horizon timeout bootstraps
            t.skill = in.z;
            in.pending.push_back(t);
            in.ep_return += sr.reward;
            in.state = sr.next_state;
            in.t += 1;
            if (sr.done) {
                for (auto& pt : in.pending) {
                    pt.episode_return = in.ep_return;
                    buffer_.append(pt);
                }
                reset_instance(i);
            }
        }
        env_steps_ += n;
    }

    void learner_step()
    {
        // intrinsic model first, so rewards reflect the freshest model
        train_model_step();
        sac_batch_step();
        skills_.policy = sac_.policy;
    }

    void train_model_step()
    {
        const auto idx = buffer_.sample_indices(static_cast<std::size_t>(cfg_.batch_size), learner_rng_);
        const Eigen::Index b = static_cast<Eigen::Index>(idx.size());
        std::vector<int> z(idx.size());
        if (mi_uses_dads(method_)) {
            Mat deltas(prior_feature_dim(env_), b);
            for (Eigen::Index i = 0; i < b; ++i) {
                const auto& t = buffer_[idx[static_cast<std::size_t>(i)]];
                deltas.col(i) = descriptor_prior_features(t.next_state, env_, cfg_.prior_features)
                                - descriptor_prior_features(t.state, env_, cfg_.prior_features);
                z[static_cast<std::size_t>(i)] = t.skill;
            }
            train_skill_dynamics(dynamics_, deltas, z);
        } else {
            Mat feats(prior_feature_dim(env_), b);
            for (Eigen::Index i = 0; i < b; ++i) {
                const auto& t = buffer_[idx[static_cast<std::size_t>(i)]];
                feats.col(i) = descriptor_prior_features(t.state, env_, cfg_.prior_features);
                z[static_cast<std::size_t>(i)] = t.skill;
            }
            train_discriminator(discriminator_, feats, z);
        }
    }

    void sac_batch_step()
    {
        const auto idx = buffer_.sample_indices(static_cast<std::size_t>(cfg_.batch_size), learner_rng_);
        const Eigen::Index b = static_cast<Eigen::Index>(idx.size());
        SacBatch batch;
        batch.obs = Mat(2 + cfg_.num_skills, b);
        batch.obs2 = Mat(2 + cfg_.num_skills, b);
        batch.act = Mat(2, b);
        batch.reward = Vec(b);
        batch.not_done = Vec(b);
        Mat feats(prior_feature_dim(env_), b);
        Mat deltas(prior_feature_dim(env_), b);
        std::vector<int> z(idx.size());
        for (Eigen::Index i = 0; i < b; ++i) {
            const auto& t = buffer_[idx[static_cast<std::size_t>(i)]];
            z[static_cast<std::size_t>(i)] = t.skill;
            batch.obs.col(i) = skill_obs(t.state, t.skill, cfg_.num_skills);
            batch.obs2.col(i) = skill_obs(t.next_state, t.skill, cfg_.num_skills);
            batch.act.col(i) = t.action;
            batch.not_done[i] = t.done ? 0.0 : 1.0;
            feats.col(i) = descriptor_prior_features(t.state, env_, cfg_.prior_features);
            deltas.col(i) = descriptor_prior_features(t.next_state, env_, cfg_.prior_features)
                            - descriptor_prior_features(t.state, env_, cfg_.prior_features);
        }
        const Vec r_div = mi_uses_dads(method_) ? dads_reward_batch(dynamics_, deltas, z)
                                                : diayn_reward_batch(discriminator_, feats, z);
        for (Eigen::Index i = 0; i < b; ++i) {
            const auto& t = buffer_[idx[static_cast<std::size_t>(i)]];
            batch.reward[i] = shape_reward(t.reward_env * cfg_.reward_multiplier, r_div[i], cfg_.shaping,
                                           t.episode_return);
        }
        sac_update(sac_, batch, learner_rng_);
    }

    MiMethod method_;
    EnvSpec env_;
    SkillRlConfig cfg_;
    ThreadPool& pool_;
    Rng master_;
    Rng learner_rng_;

    SacState sac_;
    SkillSet skills_;
    Discriminator discriminator_;
    SkillDynamics dynamics_;
    ReplayBuffer buffer_{1'000'000};
    CvtRepertoire passive_;
    std::vector<EnvInstance> instances_;

    std::int64_t env_steps_ = 0;
    std::int64_t round_ = 0;
    std::int64_t passive_records_ = 0;
    std::int64_t next_passive_ = 0;
    double best_eval_return_ = -std::numeric_limits<double>::infinity();
};

} // namespace skillbench

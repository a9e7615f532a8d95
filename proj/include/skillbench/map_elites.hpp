#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include <skillbench/env.hpp>
#include <skillbench/io.hpp>
#include <skillbench/net.hpp>
#include <skillbench/policies.hpp>
#include <skillbench/repertoire.hpp>
#include <skillbench/replay_buffer.hpp>
#include <skillbench/td3.hpp>
#include <skillbench/thread_pool.hpp>
#include <skillbench/variation.hpp>

namespace skillbench {

inline std::shared_ptr<const NetSpec> policy_spec_for(const EnvSpec& env, const std::vector<int>& hidden)
{
    std::vector<int> sizes{env.state_dim()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * env.action_dim());
    return make_spec(sizes, Activation::Tanh, OutputHead::TanhSquashedGaussian);
}

inline std::shared_ptr<const NetSpec> critic_spec_for(const EnvSpec& env, const std::vector<int>& hidden)
{
    std::vector<int> sizes{env.state_dim() + env.action_dim()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    return make_spec(sizes, Activation::Relu, OutputHead::Linear);
}

inline BoxN descriptor_bounds(const EnvSpec& env)
{
    const Box2 b = env.descriptor_box();
    BoxN out;
    out.lo = Vec(2);
    out.hi = Vec(2);
    out.lo << b.xmin, b.ymin;
    out.hi << b.xmax, b.ymax;
    return out;
}

struct MapElitesConfig {
    VariationConfig variation{0.005, 0.05, 1000};
    std::vector<int> policy_hidden{64, 64};
    int num_cells = 1024;
};

// Plain MAP-Elites over a CVT repertoire with Iso+LineDD variation.
class MapElitesTrainer {
public:
    MapElitesTrainer(EnvSpec env, MapElitesConfig cfg, std::uint64_t seed, ThreadPool& pool)
        : env_(std::move(env)), cfg_(std::move(cfg)), pool_(pool), master_(seed),
          selection_rng_(Rng(seed).derive(rng_tag::kSelection))
    {
        env_.validate();
        spec_ = policy_spec_for(env_, cfg_.policy_hidden);
        const BoxN bounds = descriptor_bounds(env_);
        rep_ = CvtRepertoire(build_cvt_centroids(cfg_.num_cells, bounds, master_.derive(rng_tag::kCvt).stream_seed(), &pool_),
                             bounds);
    }

    const CvtRepertoire& repertoire() const { return rep_; }
    std::int64_t env_steps() const { return env_steps_; }
    std::int64_t iterations() const { return iteration_; }

    /// Seeds the repertoire with an evaluated batch of random genotypes.
    void init_population()
    {
        std::vector<Genotype> batch;
        batch.reserve(static_cast<std::size_t>(cfg_.variation.batch_size));
        for (int i = 0; i < cfg_.variation.batch_size; ++i) {
            Rng r = master_.derive(rng_tag::kInit, static_cast<std::uint64_t>(i));
            batch.push_back(init_genotype(spec_, r));
        }
        evaluate_and_insert(batch);
    }

    void iteration()
    {
        if (rep_.coverage() == 0)
            throw std::runtime_error("MapElitesTrainer: call init_population() first");
        const int n = cfg_.variation.batch_size;
        const auto parents = select_uniform(rep_, 2 * n, selection_rng_);
        std::vector<Genotype> children(static_cast<std::size_t>(n));
        pool_.parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
            Rng vr = master_.derive(rng_tag::kVariation,
                                    static_cast<std::uint64_t>(iteration_ + 1) * 0x400000ull + i);
            const Elite& p1 = *rep_.cell(parents[2 * i]);
            const Elite& p2 = *rep_.cell(parents[2 * i + 1]);
            children[i] = iso_line_dd(p1.genotype, p2.genotype, cfg_.variation, vr);
        }, 8);
        evaluate_and_insert(children);
        ++iteration_;
    }

    void save(std::ostream& os) const
    {
        BinWriter w(os);
        w.u32(0x454d414d); // "MAME"
        w.i64(env_steps_);
        w.i64(iteration_);
        w.i64(eval_batches_);
        write_rng(w, selection_rng_);
        write_repertoire_exact(w, rep_);
    }

    void load(std::istream& is)
    {
        BinReader r(is);
        if (r.u32() != 0x454d414d)
            throw std::runtime_error("map-elites checkpoint: bad magic");
        env_steps_ = r.i64();
        iteration_ = r.i64();
        eval_batches_ = r.i64();
        selection_rng_ = read_rng(r);
        rep_ = read_repertoire_exact(r);
    }

private:
    void evaluate_and_insert(const std::vector<Genotype>& batch)
    {
        std::vector<PolicyFn> policies;
        std::vector<std::uint64_t> seeds;
        policies.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            policies.push_back(make_deterministic_policy<Vec2>(batch[i], env_.action_bound));
            seeds.push_back(master_.derive(rng_tag::kEvaluation,
                                           static_cast<std::uint64_t>(eval_batches_) * 0x400000ull + i)
                                .stream_seed());
        }
        ++eval_batches_;
        const auto trajs = rollout_batch(policies, env_, seeds, pool_);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            rep_.insert(batch[i], trajs[i].fitness, trajs[i].descriptor);
            env_steps_ += static_cast<std::int64_t>(trajs[i].transitions.size());
        }
    }

    EnvSpec env_;
    MapElitesConfig cfg_;
    ThreadPool& pool_;
    Rng master_;
    Rng selection_rng_;
    std::shared_ptr<const NetSpec> spec_;
    CvtRepertoire rep_;
    std::int64_t env_steps_ = 0;
    std::int64_t iteration_ = 0;
    std::int64_t eval_batches_ = 0;
};

struct PgaConfig {
    VariationConfig variation{0.005, 0.05, 100};
    std::vector<int> policy_hidden{64, 64};
    std::vector<int> critic_hidden{64, 64};
    int num_cells = 1024;
    double pg_proportion = 0.5;
    int critic_training_steps = 300;
    int policy_training_steps = 100;
    std::size_t buffer_capacity = 1'000'000;
    Td3Config td3;
};

// PGA-MAP-Elites: half the batch is mutated by gradient ascent on a TD3
// critic trained from all evaluation transitions.
class PgaMapElitesTrainer {
public:
    PgaMapElitesTrainer(EnvSpec env, PgaConfig cfg, std::uint64_t seed, ThreadPool& pool)
        : env_(std::move(env)), cfg_(std::move(cfg)), pool_(pool), master_(seed),
          selection_rng_(Rng(seed).derive(rng_tag::kSelection)),
          learner_rng_(Rng(seed).derive(rng_tag::kLearner)), buffer_(cfg_.buffer_capacity)
    {
        env_.validate();
        spec_ = policy_spec_for(env_, cfg_.policy_hidden);
        const BoxN bounds = descriptor_bounds(env_);
        rep_ = CvtRepertoire(build_cvt_centroids(cfg_.num_cells, bounds, master_.derive(rng_tag::kCvt).stream_seed(), &pool_),
                             bounds);
        Rng init_rng = master_.derive(rng_tag::kInit);
        td3_ = make_td3(spec_, critic_spec_for(env_, cfg_.critic_hidden), cfg_.td3, init_rng);
    }

    const CvtRepertoire& repertoire() const { return rep_; }
    const Td3State& td3() const { return td3_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    std::int64_t env_steps() const { return env_steps_; }
    std::int64_t iterations() const { return iteration_; }

    void init_population()
    {
        std::vector<Genotype> batch;
        for (int i = 0; i < cfg_.variation.batch_size; ++i) {
            Rng r = master_.derive(rng_tag::kInit, static_cast<std::uint64_t>(i) + 1);
            batch.push_back(init_genotype(spec_, r));
        }
        evaluate_insert_collect(batch);
        td3_critic_update(td3_, buffer_, cfg_.critic_training_steps, learner_rng_);
    }

    void iteration()
    {
        if (rep_.coverage() == 0)
            throw std::runtime_error("PgaMapElitesTrainer: call init_population() first");
        const int n = cfg_.variation.batch_size;
        const int n_pg = static_cast<int>(n * cfg_.pg_proportion + 0.5);
        const int n_ga = n - n_pg;
        const auto primary = select_uniform(rep_, n, selection_rng_);
        const auto secondary = select_uniform(rep_, n_ga, selection_rng_);

        std::vector<Genotype> children(static_cast<std::size_t>(n));
        pool_.parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
            Rng vr = master_.derive(rng_tag::kVariation,
                                    static_cast<std::uint64_t>(iteration_ + 1) * 0x400000ull + i);
            if (static_cast<int>(i) < n_ga) {
                const Elite& p1 = *rep_.cell(primary[i]);
                const Elite& p2 = *rep_.cell(secondary[i]);
                children[i] = iso_line_dd(p1.genotype, p2.genotype, cfg_.variation, vr);
            } else {
                const Elite& p = *rep_.cell(primary[i]);
                children[i] = pg_variation(p.genotype, td3_, buffer_, cfg_.policy_training_steps, vr);
            }
        }, 1);
        evaluate_insert_collect(children);
        td3_critic_update(td3_, buffer_, cfg_.critic_training_steps, learner_rng_);
        ++iteration_;
    }

    void save(std::ostream& os) const
    {
        BinWriter w(os);
        w.u32(0x41475041); // "APGA"
        w.i64(env_steps_);
        w.i64(iteration_);
        w.i64(eval_batches_);
        write_rng(w, selection_rng_);
        write_rng(w, learner_rng_);
        write_repertoire_exact(w, rep_);
        write_genotype_exact(w, td3_.critic1);
        write_genotype_exact(w, td3_.critic2);
        write_genotype_exact(w, td3_.target_critic1);
        write_genotype_exact(w, td3_.target_critic2);
        write_genotype_exact(w, td3_.actor);
        write_genotype_exact(w, td3_.target_actor);
        write_adam(w, td3_.opt_critic1);
        write_adam(w, td3_.opt_critic2);
        write_adam(w, td3_.opt_actor);
        w.i64(td3_.updates);
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
        }
    }

    void load(std::istream& is)
    {
        BinReader r(is);
        if (r.u32() != 0x41475041)
            throw std::runtime_error("pga checkpoint: bad magic");
        env_steps_ = r.i64();
        iteration_ = r.i64();
        eval_batches_ = r.i64();
        selection_rng_ = read_rng(r);
        learner_rng_ = read_rng(r);
        rep_ = read_repertoire_exact(r);
        td3_.critic1 = read_genotype_exact(r);
        td3_.critic2 = read_genotype_exact(r);
        td3_.target_critic1 = read_genotype_exact(r);
        td3_.target_critic2 = read_genotype_exact(r);
        td3_.actor = read_genotype_exact(r);
        td3_.target_actor = read_genotype_exact(r);
        td3_.opt_critic1 = read_adam(r);
        td3_.opt_critic2 = read_adam(r);
        td3_.opt_actor = read_adam(r);
        td3_.updates = r.i64();
        const auto n = r.u64();
        const auto cursor = r.u64();
        buffer_ = ReplayBuffer(cfg_.buffer_capacity);
        for (std::uint64_t i = 0; i < n; ++i) {
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
            buffer_.data_mutable().push_back(t);
        }
        buffer_.set_write_cursor(cursor);
    }

private:
    void evaluate_insert_collect(const std::vector<Genotype>& batch)
    {
        std::vector<PolicyFn> policies;
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            policies.push_back(make_deterministic_policy<Vec2>(batch[i], env_.action_bound));
            seeds.push_back(master_.derive(rng_tag::kEvaluation,
                                           static_cast<std::uint64_t>(eval_batches_) * 0x400000ull + i)
                                .stream_seed());
        }
        ++eval_batches_;
        const auto trajs = rollout_batch(policies, env_, seeds, pool_);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            for (const auto& t : trajs[i].transitions) {
                BufferTransition bt;
                bt.state = t.state;
                bt.action = t.action / env_.action_bound;
                bt.next_state = t.next_state;
                bt.reward_env = t.reward;
                bt.done = false;
                bt.episode_return = trajs[i].fitness;
                buffer_.append(bt);
            }
            env_steps_ += static_cast<std::int64_t>(trajs[i].transitions.size());
            rep_.insert(batch[i], trajs[i].fitness, trajs[i].descriptor);
        }
    }

    EnvSpec env_;
    PgaConfig cfg_;
    ThreadPool& pool_;
    Rng master_;
    Rng selection_rng_;
    Rng learner_rng_;
    std::shared_ptr<const NetSpec> spec_;
    CvtRepertoire rep_;
    Td3State td3_;
    ReplayBuffer buffer_;
    std::int64_t env_steps_ = 0;
    std::int64_t iteration_ = 0;
    std::int64_t eval_batches_ = 0;
};

} // namespace skillbench

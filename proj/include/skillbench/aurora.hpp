#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include <skillbench/env.hpp>
#include <skillbench/io.hpp>
#include <skillbench/map_elites.hpp>
#include <skillbench/net.hpp>
#include <skillbench/policies.hpp>
#include <skillbench/replay_buffer.hpp>
#include <skillbench/td3.hpp>
#include <skillbench/thread_pool.hpp>
#include <skillbench/unstructured_archive.hpp>
#include <skillbench/variation.hpp>

namespace skillbench {

/// Flattened states at `points` evenly spaced timesteps; the autoencoder's
/// input and the stored per-entry trajectory summary.
inline Vec trajectory_summary(const Trajectory& traj, int points)
{
    const auto n = static_cast<Eigen::Index>(traj.transitions.size());
    Vec out(2 * points);
    for (int k = 0; k < points; ++k) {
        const Eigen::Index idx = points == 1 ? n - 1 : (k * (n - 1)) / (points - 1);
        const Vec2& s = traj.transitions[static_cast<std::size_t>(idx)].next_state;
        out[2 * k] = s.x();
        out[2 * k + 1] = s.y();
    }
    return out;
}

struct TrajectoryAutoencoder {
    Genotype encoder, decoder;
    AdamState opt_encoder, opt_decoder;
    int latent_dim = 5;
    int summary_dim = 16;
};

inline TrajectoryAutoencoder make_autoencoder(int summary_dim, int latent_dim, const std::vector<int>& hidden,
                                              double lr, Rng& rng)
{
    TrajectoryAutoencoder ae;
    ae.latent_dim = latent_dim;
    ae.summary_dim = summary_dim;
    std::vector<int> enc{summary_dim};
    enc.insert(enc.end(), hidden.begin(), hidden.end());
    enc.push_back(latent_dim);
    std::vector<int> dec{latent_dim};
    dec.insert(dec.end(), hidden.begin(), hidden.end());
    dec.push_back(summary_dim);
    ae.encoder = init_genotype(make_spec(enc, Activation::Relu, OutputHead::Linear), rng);
    ae.decoder = init_genotype(make_spec(dec, Activation::Relu, OutputHead::Linear), rng);
    ae.opt_encoder = AdamState(static_cast<Eigen::Index>(ae.encoder.spec->param_count()), lr);
    ae.opt_decoder = AdamState(static_cast<Eigen::Index>(ae.decoder.spec->param_count()), lr);
    return ae;
}

inline Vec encode_summary(const TrajectoryAutoencoder& ae, const Vec& summary)
{
    return forward(ae.encoder, summary);
}

/// Mean squared reconstruction error over a dataset of summaries.
inline double reconstruction_loss(const TrajectoryAutoencoder& ae, const std::vector<Vec>& data)
{
    if (data.empty())
        return 0.0;
    Mat x(ae.summary_dim, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i)
        x.col(static_cast<Eigen::Index>(i)) = data[i];
    Mat z, y;
    forward_batch(ae.encoder, x, z);
    forward_batch(ae.decoder, z, y);
    return (y - x).squaredNorm() / static_cast<double>(data.size());
}

/// Fixed number of Adam steps on squared reconstruction error of the given
/// summaries. Returns (loss before, loss after), measured on the full set.
inline std::pair<double, double> train_autoencoder(TrajectoryAutoencoder& ae, const std::vector<Vec>& data,
                                                   int steps, int batch_size, Rng& rng)
{
    if (data.empty())
        throw std::invalid_argument("train_autoencoder: empty dataset");
    const double before = reconstruction_loss(ae, data);
    const Eigen::Index b = std::min<Eigen::Index>(batch_size, static_cast<Eigen::Index>(data.size()));
    for (int s = 0; s < steps; ++s) {
        Mat x(ae.summary_dim, b);
        for (Eigen::Index i = 0; i < b; ++i)
            x.col(i) = data[rng.uniform_int(data.size())];
        ForwardCache ecache, dcache;
        Mat z, y;
        forward_batch(ae.encoder, x, z, &ecache);
        forward_batch(ae.decoder, z, y, &dcache);
        Mat upstream = (2.0 / static_cast<double>(b)) * (y - x);
        Vec dgrad;
        Mat zgrad;
        backward_batch(ae.decoder, dcache, upstream, dgrad, &zgrad);
        Vec egrad;
        backward_batch(ae.encoder, ecache, zgrad, egrad);
        adam_step(ae.opt_decoder, ae.decoder.params, dgrad);
        adam_step(ae.opt_encoder, ae.encoder.params, egrad);
    }
    return {before, reconstruction_loss(ae, data)};
}

struct AuroraConfig {
    VariationConfig variation{0.005, 0.05, 1000};
    std::vector<int> policy_hidden{64, 64};
    std::vector<int> critic_hidden{64, 64}; // pga variant
    std::vector<int> ae_hidden{64, 64};
    int latent_dim = 5;
    double initial_l = 0.2;
    std::size_t archive_budget = 1024;
    int summary_points = 8;
    int ae_train_steps = 500;
    int ae_batch = 64;
    double ae_lr = 3e-4;
    int retrain_start = 10; // geometric schedule: 10, 20, 40, ...
    int metrics_cells = 1024;
    // pga variant only
    bool use_pg = false;
    double pg_proportion = 0.5;
    int critic_training_steps = 300;
    int policy_training_steps = 100;
    std::size_t buffer_capacity = 1'000'000;
    Td3Config td3;
};

// AURORA / PGA-AURORA: MAP-Elites-style loop over an unstructured archive
// whose descriptors come from a trajectory autoencoder. A passive CVT
// repertoire over the hand-defined descriptor space tracks QD metrics so all
// methods are scored identically.
class AuroraTrainer {
public:
    AuroraTrainer(EnvSpec env, AuroraConfig cfg, std::uint64_t seed, ThreadPool& pool)
        : env_(std::move(env)), cfg_(std::move(cfg)), pool_(pool), master_(seed),
          selection_rng_(Rng(seed).derive(rng_tag::kSelection)),
          learner_rng_(Rng(seed).derive(rng_tag::kLearner)),
          archive_(cfg_.initial_l, cfg_.archive_budget), buffer_(cfg_.buffer_capacity)
    {
        env_.validate();
        spec_ = policy_spec_for(env_, cfg_.policy_hidden);
        Rng init_rng = master_.derive(rng_tag::kInit);
        ae_ = make_autoencoder(2 * cfg_.summary_points, cfg_.latent_dim, cfg_.ae_hidden, cfg_.ae_lr, init_rng);
        const BoxN bounds = descriptor_bounds(env_);
        metrics_rep_ = CvtRepertoire(build_cvt_centroids(cfg_.metrics_cells, bounds,
                                                         master_.derive(rng_tag::kCvt).stream_seed(), &pool_),
                                     bounds);
        if (cfg_.use_pg)
            td3_ = make_td3(spec_, critic_spec_for(env_, cfg_.critic_hidden), cfg_.td3, init_rng);
        next_retrain_ = cfg_.retrain_start;
    }

    const UnstructuredArchive& archive() const { return archive_; }
    const CvtRepertoire& metrics_repertoire() const { return metrics_rep_; }
    const TrajectoryAutoencoder& autoencoder() const { return ae_; }
    std::int64_t env_steps() const { return env_steps_; }
    std::int64_t iterations() const { return iteration_; }
    std::int64_t retrains() const { return retrains_; }
    double last_recon_loss() const { return last_recon_loss_; }

    void init_population()
    {
        std::vector<Genotype> batch;
        for (int i = 0; i < cfg_.variation.batch_size; ++i) {
            Rng r = master_.derive(rng_tag::kInit, static_cast<std::uint64_t>(i) + 1);
            batch.push_back(init_genotype(spec_, r));
        }
        const auto evals = evaluate(batch);
        // fit the autoencoder on the first batch so initial descriptors are
        // defined, then insert
        std::vector<Vec> summaries;
        for (const auto& e : evals)
            summaries.push_back(e.summary);
        last_recon_loss_ = train_autoencoder(ae_, summaries, cfg_.ae_train_steps, cfg_.ae_batch, learner_rng_).second;
        insert_evals(batch, evals);
        if (cfg_.use_pg)
            td3_critic_update(td3_, buffer_, cfg_.critic_training_steps, learner_rng_);
    }

    void iteration()
    {
        if (archive_.empty())
            throw std::runtime_error("AuroraTrainer: call init_population() first");
        const int n = cfg_.variation.batch_size;
        const int n_pg = cfg_.use_pg ? static_cast<int>(n * cfg_.pg_proportion + 0.5) : 0;
        const int n_ga = n - n_pg;
        std::vector<std::size_t> primary(static_cast<std::size_t>(n)), secondary(static_cast<std::size_t>(n_ga));
        for (auto& p : primary)
            p = selection_rng_.uniform_int(archive_.size());
        for (auto& p : secondary)
            p = selection_rng_.uniform_int(archive_.size());

        std::vector<Genotype> children(static_cast<std::size_t>(n));
        pool_.parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
            Rng vr = master_.derive(rng_tag::kVariation,
                                    static_cast<std::uint64_t>(iteration_ + 1) * 0x400000ull + i);
            if (static_cast<int>(i) < n_ga) {
                children[i] = iso_line_dd(archive_.entry(primary[i]).genotype,
                                          archive_.entry(secondary[i]).genotype, cfg_.variation, vr);
            } else {
                children[i] = pg_variation(archive_.entry(primary[i]).genotype, td3_, buffer_,
                                           cfg_.policy_training_steps, vr);
            }
        }, cfg_.use_pg ? 1 : 8);

        const auto evals = evaluate(children);
        insert_evals(children, evals);
        if (cfg_.use_pg)
            td3_critic_update(td3_, buffer_, cfg_.critic_training_steps, learner_rng_);
        ++iteration_;
        if (iteration_ == next_retrain_) {
            retrain_autoencoder();
            next_retrain_ *= 2;
        }
    }

    /// Trains the autoencoder on archive summaries, then recomputes every
    /// entry's descriptor with the new encoder and re-applies the archive
    /// discipline.
    void retrain_autoencoder()
    {
        std::vector<Vec> summaries;
        for (const auto& e : archive_.entries())
            summaries.push_back(e.trajectory_summary);
        last_recon_loss_ = train_autoencoder(ae_, summaries, cfg_.ae_train_steps, cfg_.ae_batch, learner_rng_).second;
        archive_.recompute_descriptors([this](const ArchiveEntry& e) { return encode_summary(ae_, e.trajectory_summary); });
        ++retrains_;
    }

    void save(std::ostream& os) const
    {
        BinWriter w(os);
        w.u32(0x41525541); // "AURA"
        w.i64(env_steps_);
        w.i64(iteration_);
        w.i64(eval_batches_);
        w.i64(retrains_);
        w.i64(next_retrain_);
        w.f64(last_recon_loss_);
        write_rng(w, selection_rng_);
        write_rng(w, learner_rng_);
        write_genotype_exact(w, ae_.encoder);
        write_genotype_exact(w, ae_.decoder);
        write_adam(w, ae_.opt_encoder);
        write_adam(w, ae_.opt_decoder);
        write_unstructured_archive(w, archive_);
        write_repertoire_exact(w, metrics_rep_);
        w.u8(cfg_.use_pg ? 1 : 0);
        if (cfg_.use_pg) {
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
    }

    void load(std::istream& is)
    {
        BinReader r(is);
        if (r.u32() != 0x41525541)
            throw std::runtime_error("aurora checkpoint: bad magic");
        env_steps_ = r.i64();
        iteration_ = r.i64();
        eval_batches_ = r.i64();
        retrains_ = r.i64();
        next_retrain_ = r.i64();
        last_recon_loss_ = r.f64();
        selection_rng_ = read_rng(r);
        learner_rng_ = read_rng(r);
        ae_.encoder = read_genotype_exact(r);
        ae_.decoder = read_genotype_exact(r);
        ae_.opt_encoder = read_adam(r);
        ae_.opt_decoder = read_adam(r);
        archive_ = read_unstructured_archive(r);
        metrics_rep_ = read_repertoire_exact(r);
        const bool has_pg = r.u8() != 0;
        if (has_pg != cfg_.use_pg)
            throw std::runtime_error("aurora checkpoint: variant mismatch");
        if (cfg_.use_pg) {
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
    }

private:
    struct Eval {
        double fitness = 0.0;
        Vec hand_descriptor;
        Vec summary;
    };

    std::vector<Eval> evaluate(const std::vector<Genotype>& batch)
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
        std::vector<Eval> out(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            out[i].fitness = trajs[i].fitness;
            out[i].hand_descriptor = trajs[i].descriptor;
            out[i].summary = trajectory_summary(trajs[i], cfg_.summary_points);
            env_steps_ += static_cast<std::int64_t>(trajs[i].transitions.size());
            if (cfg_.use_pg) {
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
            }
        }
        return out;
    }

    void insert_evals(const std::vector<Genotype>& batch, const std::vector<Eval>& evals)
    {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            ArchiveEntry e;
            e.genotype = batch[i];
            e.fitness = evals[i].fitness;
            e.trajectory_summary = evals[i].summary;
            e.descriptor = encode_summary(ae_, e.trajectory_summary);
            archive_.insert(std::move(e));
            metrics_rep_.insert(batch[i], evals[i].fitness, evals[i].hand_descriptor);
        }
    }

    EnvSpec env_;
    AuroraConfig cfg_;
    ThreadPool& pool_;
    Rng master_;
    Rng selection_rng_;
    Rng learner_rng_;
    std::shared_ptr<const NetSpec> spec_;
    TrajectoryAutoencoder ae_;
    UnstructuredArchive archive_;
    CvtRepertoire metrics_rep_;
    Td3State td3_;
    ReplayBuffer buffer_;
    std::int64_t env_steps_ = 0;
    std::int64_t iteration_ = 0;
    std::int64_t eval_batches_ = 0;
    std::int64_t retrains_ = 0;
    std::int64_t next_retrain_ = 10;
    double last_recon_loss_ = 0.0;
};

} // namespace skillbench

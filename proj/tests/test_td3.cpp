#include <catch2/catch_amalgamated.hpp>

#include <skillbench/replay_buffer.hpp>
#include <skillbench/td3.hpp>

using namespace skillbench;

namespace {

std::shared_ptr<const NetSpec> policy_spec()
{
    return make_spec({2, 16, 16, 4}, Activation::Tanh, OutputHead::TanhSquashedGaussian);
}

std::shared_ptr<const NetSpec> critic_spec()
{
    return make_spec({4, 16, 16, 1}, Activation::Relu, OutputHead::Linear);
}

/// Random transitions with rewards in [r_lo, r_hi].
ReplayBuffer synthetic_buffer(int n, double r_lo, double r_hi, std::uint64_t seed)
{
    ReplayBuffer buf(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        BufferTransition t;
        t.state = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
        t.action = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
        t.next_state = t.state + 0.05 * Vec2(t.action.x(), t.action.y());
        t.reward_env = rng.uniform(r_lo, r_hi);
        t.done = false;
        t.episode_return = 0.0;
        buf.append(t);
    }
    return buf;
}

double critic_bellman_loss(const Td3State& td3, const ReplayBuffer& buf)
{
    // evaluated against the frozen targets with noiseless target actions
    const auto n = static_cast<Eigen::Index>(buf.size());
    Mat s(2, n), a(2, n), s2(2, n);
    Vec r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s.col(i) = buf[static_cast<std::size_t>(i)].state;
        a.col(i) = buf[static_cast<std::size_t>(i)].action;
        s2.col(i) = buf[static_cast<std::size_t>(i)].next_state;
        r[i] = buf[static_cast<std::size_t>(i)].reward_env;
    }
    Mat prehead;
    forward_batch(td3.target_actor, s2, prehead);
    Mat a2 = prehead.topRows(2).array().tanh().matrix();
    Mat x2(4, n);
    x2 << s2, a2;
    Mat q1t, q2t;
    forward_batch(td3.target_critic1, x2, q1t);
    forward_batch(td3.target_critic2, x2, q2t);
    const Vec y = (r.array() + td3.cfg.discount * q1t.row(0).transpose().array().min(q2t.row(0).transpose().array())).matrix();
    Mat x(4, n);
    x << s, a;
    Mat q1, q2;
    forward_batch(td3.critic1, x, q1);
    forward_batch(td3.critic2, x, q2);
    return ((q1.row(0).transpose() - y).squaredNorm() + (q2.row(0).transpose() - y).squaredNorm())
           / static_cast<double>(n);
}

} // namespace

TEST_CASE("replay buffer: ring behavior and uniform sampling")
{
    ReplayBuffer buf(4);
    for (int i = 0; i < 6; ++i) {
        BufferTransition t;
        t.reward_env = i;
        buf.append(t);
    }
    CHECK(buf.size() == 4);
    // oldest two entries were overwritten
    double min_r = 1e9;
    for (std::size_t i = 0; i < buf.size(); ++i)
        min_r = std::min(min_r, buf[i].reward_env);
    CHECK(min_r == 2.0);

    Rng rng(3);
    const auto idx = buf.sample_indices(1000, rng);
    for (auto i : idx)
        CHECK(i < 4);
    Rng rng2(3);
    CHECK(buf.sample_indices(1000, rng2) == idx);

    ReplayBuffer empty(4);
    Rng r3(0);
    CHECK_THROWS(empty.sample_indices(1, r3));
}

TEST_CASE("td3: critic loss decreases over 300 steps")
{
    int improved = 0;
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Rng rng(100 + trial);
        Td3Config cfg;
        cfg.batch_size = 64;
        Td3State td3 = make_td3(policy_spec(), critic_spec(), cfg, rng);
        const auto buf = synthetic_buffer(2000, -1.0, 1.0, 200 + trial);
        const double before = critic_bellman_loss(td3, buf);
        Rng lr(300 + trial);
        td3_critic_update(td3, buf, 300, lr);
        const double after = critic_bellman_loss(td3, buf);
        improved += after < before ? 1 : 0;
    }
    CHECK(improved >= 9);
}

TEST_CASE("td3: zero rewards and zero critics form a fixed point")
{
    Rng rng(7);
    Td3Config cfg;
    cfg.batch_size = 32;
    Td3State td3 = make_td3(policy_spec(), critic_spec(), cfg, rng);
    td3.critic1.params.setZero();
    td3.critic2.params.setZero();
    td3.target_critic1.params.setZero();
    td3.target_critic2.params.setZero();
    const Vec critic_before = td3.critic1.params;
    const Vec actor_before = td3.actor.params;
    const auto buf = synthetic_buffer(500, 0.0, 0.0, 11);
    Rng lr(13);
    td3_critic_update(td3, buf, 50, lr);
    CHECK((td3.critic1.params - critic_before).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((td3.critic2.params - critic_before).lpNorm<Eigen::Infinity>() < 1e-6);
    // zero critics give zero action gradients, so the actor holds still too
    CHECK((td3.actor.params - actor_before).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("td3: learned Q stays within the discounted reward envelope")
{
    Rng rng(21);
    Td3Config cfg;
    cfg.batch_size = 128;
    Td3State td3 = make_td3(policy_spec(), critic_spec(), cfg, rng);
    const double r_lo = 0.0, r_hi = 1.0;
    const auto buf = synthetic_buffer(4000, r_lo, r_hi, 22);
    Rng lr(23);
    td3_critic_update(td3, buf, 3000, lr);
    const double q_lo = r_lo / (1.0 - cfg.discount);
    const double q_hi = r_hi / (1.0 - cfg.discount);
    const double margin = 0.1 * (q_hi - q_lo);
    const auto n = static_cast<Eigen::Index>(buf.size());
    Mat x(4, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x.col(i).head(2) = buf[static_cast<std::size_t>(i)].state;
        x.col(i).tail(2) = buf[static_cast<std::size_t>(i)].action;
    }
    Mat q;
    forward_batch(td3.critic1, x, q);
    CHECK(q.row(0).minCoeff() > q_lo - margin);
    CHECK(q.row(0).maxCoeff() < q_hi + margin);
}

TEST_CASE("pg_variation: zero steps is identity, ascent raises critic value")
{
    Rng rng(31);
    Td3Config cfg;
    cfg.batch_size = 64;
    Td3State td3 = make_td3(policy_spec(), critic_spec(), cfg, rng);
    const auto buf = synthetic_buffer(1000, -1.0, 1.0, 32);

    Genotype parent = init_genotype(policy_spec(), rng);
    Rng pg0(1);
    const Genotype same = pg_variation(parent, td3, buf, 0, pg0);
    CHECK(same.params == parent.params);

    // held-out state batch
    Mat held(2, 200);
    Rng hr(33);
    for (int i = 0; i < 200; ++i)
        held.col(i) = Vec2(hr.uniform(-1, 1), hr.uniform(-1, 1));

    int improved = 0;
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Rng pr(50 + trial);
        Genotype p = init_genotype(policy_spec(), pr);
        const double before = mean_policy_value(p, td3, held);
        Rng pg(60 + trial);
        const Genotype mutated = pg_variation(p, td3, buf, 100, pg);
        const double after = mean_policy_value(mutated, td3, held);
        improved += after >= before ? 1 : 0;
    }
    CHECK(improved >= 9);
}

TEST_CASE("pg_variation: bitwise deterministic")
{
    Rng rng(41);
    Td3Config cfg;
    cfg.batch_size = 32;
    Td3State td3 = make_td3(policy_spec(), critic_spec(), cfg, rng);
    const auto buf = synthetic_buffer(500, -1.0, 1.0, 42);
    Genotype parent = init_genotype(policy_spec(), rng);
    Rng a(77), b(77);
    const Genotype m1 = pg_variation(parent, td3, buf, 20, a);
    const Genotype m2 = pg_variation(parent, td3, buf, 20, b);
    CHECK(m1.params == m2.params);
}

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <skillbench/rng.hpp>
#include <skillbench/thread_pool.hpp>
#include <skillbench/types.hpp>

namespace skillbench {

using Vec2 = Eigen::Vector2d;

enum class EnvKind { PointMaze, PointTrap, PointOmni, PointGait, PointHurdle };

inline std::string env_kind_name(EnvKind k)
{
    switch (k) {
    case EnvKind::PointMaze: return "point-maze";
    case EnvKind::PointTrap: return "point-trap";
    case EnvKind::PointOmni: return "point-omni";
    case EnvKind::PointGait: return "point-gait";
    case EnvKind::PointHurdle: return "point-hurdle";
    }
    return "?";
}

inline EnvKind env_kind_from_name(const std::string& s)
{
    if (s == "point-maze") return EnvKind::PointMaze;
    if (s == "point-trap") return EnvKind::PointTrap;
    if (s == "point-omni") return EnvKind::PointOmni;
    if (s == "point-gait") return EnvKind::PointGait;
    if (s == "point-hurdle") return EnvKind::PointHurdle;
    throw std::invalid_argument("unknown env kind: " + s);
}

// Axis-aligned wall segment.
struct Wall {
    double x1, y1, x2, y2;
    bool vertical() const { return x1 == x2; }
};

struct Box2 {
    double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;
    bool contains(const Vec2& p) const
    {
        return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
    }
    double diagonal() const { return std::hypot(xmax - xmin, ymax - ymin); }
};

struct EnvSpec {
    EnvKind kind = EnvKind::PointMaze;
    int horizon = 250;
    double action_bound = 0.05;
    Box2 arena;
    std::vector<Wall> walls;
    std::optional<Vec2> target;
    Vec2 dynamics_scale{1.0, 1.0};
    Vec2 drift{0.0, 0.0};
    double energy_scale = 1.0;
    double reset_jitter = 1e-3;
    double gait_activity_threshold = 0.5; // fraction of action_bound
    double hurdle_jump_threshold = 0.5;   // fraction of action_bound, channel 1
    std::vector<double> hurdle_positions;

    int state_dim() const { return 2; }
    int action_dim() const { return 2; }

    int descriptor_dim() const { return 2; }

    /// Declared behavior-descriptor box for this kind.
    Box2 descriptor_box() const
    {
        if (kind == EnvKind::PointGait)
            return Box2{0.0, 1.0, 0.0, 1.0};
        return arena;
    }

    void validate() const
    {
        if (horizon < 1)
            throw std::invalid_argument("EnvSpec: horizon must be >= 1");
        if (action_bound <= 0.0)
            throw std::invalid_argument("EnvSpec: action_bound must be positive");
        if (dynamics_scale.minCoeff() < 0.0)
            throw std::invalid_argument("EnvSpec: dynamics_scale entries must be >= 0");
        if (target && !arena.contains(*target))
            throw std::invalid_argument("EnvSpec: target outside arena");
        for (const auto& w : walls)
            if (w.x1 != w.x2 && w.y1 != w.y2)
                throw std::invalid_argument("EnvSpec: walls must be axis-aligned");
    }
};

/// Shipped default geometry per kind. point-maze is a double-baffle layout;
/// all acceptance thresholds are pinned against it.
inline EnvSpec make_env_spec(EnvKind kind)
{
    EnvSpec s;
    s.kind = kind;
    switch (kind) {
    case EnvKind::PointMaze:
        s.arena = Box2{-1.0, 1.0, -1.0, 1.0};
        s.walls = {{-1.0, 0.3, 0.6, 0.3}, {-0.6, 0.62, 1.0, 0.62}};
        s.target = Vec2(0.0, 0.85);
        break;
    case EnvKind::PointTrap:
        s.arena = Box2{-1.0, 3.0, -1.0, 1.0};
        s.walls = {{0.45, -0.2, 0.45, 0.2}, {0.15, -0.2, 0.45, -0.2}, {0.15, 0.2, 0.45, 0.2}};
        s.energy_scale = 0.01;
        break;
    case EnvKind::PointOmni:
        s.arena = Box2{-1.0, 1.0, -1.0, 1.0};
        s.energy_scale = 1.0;
        break;
    case EnvKind::PointGait:
        s.arena = Box2{-1.0, 3.0, -1.0, 1.0};
        s.energy_scale = 0.01;
        break;
    case EnvKind::PointHurdle:
        s.arena = Box2{-1.0, 3.0, -1.0, 1.0};
        s.hurdle_positions = {0.3, 0.8, 1.3, 1.8, 2.3, 2.8};
        s.energy_scale = 0.01;
        break;
    }
    s.validate();
    return s;
}

struct Transition {
    Vec2 state;
    Vec2 action; // clipped, env units
    Vec2 next_state;
    double reward = 0.0;
    bool done = false;
    std::uint8_t aux_bits = 0; // per-channel activity (point-gait descriptor)
};

struct Trajectory {
    std::vector<Transition> transitions;
    double fitness = 0.0;
    Vec descriptor; // inside the spec's descriptor box

    const Vec2& final_state() const { return transitions.back().next_state; }
};

namespace detail {

// True when the motion p -> q crosses (or lands on) the wall segment.
inline bool segment_hits_wall(const Vec2& p, const Vec2& q, const Wall& w)
{
    if (w.vertical()) {
        const double c = w.x1;
        const double lo = std::min(w.y1, w.y2), hi = std::max(w.y1, w.y2);
        if (p.x() == c)
            return false; // starting on the wall plane: allowed to leave
        if ((p.x() < c && q.x() >= c) || (p.x() > c && q.x() <= c)) {
            const double t = (c - p.x()) / (q.x() - p.x());
            const double y = p.y() + t * (q.y() - p.y());
            return y >= lo && y <= hi;
        }
        return false;
    }
    const double c = w.y1;
    const double lo = std::min(w.x1, w.x2), hi = std::max(w.x1, w.x2);
    if (p.y() == c)
        return false;
    if ((p.y() < c && q.y() >= c) || (p.y() > c && q.y() <= c)) {
        const double t = (c - p.y()) / (q.y() - p.y());
        const double x = p.x() + t * (q.x() - p.x());
        return x >= lo && x <= hi;
    }
    return false;
}

} // namespace detail

/// Deterministic initial state: arena origin plus tiny seeded jitter.
inline Vec2 env_reset(const EnvSpec& spec, std::uint64_t seed)
{
    Rng rng = Rng(seed).derive(rng_tag::kEnvReset);
    const double j = spec.reset_jitter;
    return Vec2(j * rng.uniform(-1.0, 1.0), j * rng.uniform(-1.0, 1.0));
}

struct StepResult {
    Vec2 next_state;
    double reward = 0.0;
    bool done = false;
    Vec2 clipped_action;
    std::uint8_t aux_bits = 0;
};

inline StepResult env_step(const EnvSpec& spec, const Vec2& state, const Vec2& action, int step_index)
{
    if (!action.allFinite())
        throw std::invalid_argument("env_step: non-finite action");

    const double b = spec.action_bound;
    Vec2 a = action.cwiseMax(-b).cwiseMin(b);
    Vec2 disp = a.cwiseProduct(spec.dynamics_scale) + spec.drift;
    if (spec.kind == EnvKind::PointHurdle)
        disp.y() = 0.0; // channel 1 is jump effort, not translation

    // hurdles: block x-crossings unless the jump channel is engaged
    if (spec.kind == EnvKind::PointHurdle && disp.x() != 0.0) {
        const double jump = a.y() / b;
        if (jump < spec.hurdle_jump_threshold) {
            const double x0 = state.x(), x1 = state.x() + disp.x();
            for (double h : spec.hurdle_positions) {
                if (x0 == h)
                    continue;
                if ((x0 < h && x1 >= h) || (x0 > h && x1 <= h)) {
                    disp.x() = 0.0;
                    break;
                }
            }
        }
    }

    // walls: zero the violating component until the realized move (with the
    // arena clamp applied) is collision-free
    const auto endpoint = [&spec, &state](const Vec2& d) {
        Vec2 q = state + d;
        q.x() = std::clamp(q.x(), spec.arena.xmin, spec.arena.xmax);
        q.y() = std::clamp(q.y(), spec.arena.ymin, spec.arena.ymax);
        return q;
    };
    bool changed = true;
    while (changed && (disp.x() != 0.0 || disp.y() != 0.0)) {
        changed = false;
        const Vec2 q = endpoint(disp);
        for (const auto& w : spec.walls) {
            if (!detail::segment_hits_wall(state, q, w))
                continue;
            if (w.vertical() && disp.x() != 0.0) {
                disp.x() = 0.0;
                changed = true;
                break;
            }
            if (!w.vertical() && disp.y() != 0.0) {
                disp.y() = 0.0;
                changed = true;
                break;
            }
        }
    }

    StepResult r;
    r.clipped_action = a;
    r.next_state = endpoint(disp);

    const double energy = (a / b).squaredNorm();
    const double vx = r.next_state.x() - state.x();
    switch (spec.kind) {
    case EnvKind::PointMaze:
        r.reward = -(r.next_state - *spec.target).norm();
        break;
    case EnvKind::PointTrap:
    case EnvKind::PointGait:
        r.reward = vx - spec.energy_scale * energy;
        break;
    case EnvKind::PointOmni:
        r.reward = -spec.energy_scale * energy;
        break;
    case EnvKind::PointHurdle:
        if (spec.target)
            r.reward = -(r.next_state - *spec.target).norm();
        else
            r.reward = vx - spec.energy_scale * energy;
        break;
    }

    const double thr = spec.gait_activity_threshold * b;
    r.aux_bits = static_cast<std::uint8_t>((a.x() > thr ? 1 : 0) | (a.y() > thr ? 2 : 0));
    r.done = step_index + 1 >= spec.horizon;
    return r;
}

/// Policy closure: env-unit action from (state, per-rollout rng stream).
using PolicyFn = std::function<Vec (const Vec2&, Rng&)>;

inline Trajectory rollout(const PolicyFn& policy, const EnvSpec& spec, std::uint64_t seed)
{
    Trajectory traj;
    traj.transitions.reserve(static_cast<std::size_t>(spec.horizon));
    Vec2 state = env_reset(spec, seed);
    Rng policy_rng = Rng(seed).derive(rng_tag::kPolicy);
    int act0 = 0, act1 = 0;
    for (int t = 0; t < spec.horizon; ++t) {
        const Vec a = policy(state, policy_rng);
        const StepResult sr = env_step(spec, state, Vec2(a[0], a[1]), t);
        traj.transitions.push_back({state, sr.clipped_action, sr.next_state, sr.reward, sr.done, sr.aux_bits});
        traj.fitness += sr.reward;
        act0 += sr.aux_bits & 1 ? 1 : 0;
        act1 += sr.aux_bits & 2 ? 1 : 0;
        state = sr.next_state;
        if (sr.done)
            break;
    }
    if (spec.kind == EnvKind::PointGait) {
        const double n = static_cast<double>(traj.transitions.size());
        traj.descriptor = Vec(2);
        traj.descriptor << act0 / n, act1 / n;
    } else {
        traj.descriptor = Vec(2);
        traj.descriptor << state.x(), state.y();
    }
    return traj;
}

/// Evaluates many (policy, seed) pairs in parallel; results in input order.
inline std::vector<Trajectory> rollout_batch(const std::vector<PolicyFn>& policies,
                                             const EnvSpec& spec,
                                             const std::vector<std::uint64_t>& seeds,
                                             ThreadPool& pool)
{
    if (policies.size() != seeds.size())
        throw std::invalid_argument("rollout_batch: policies/seeds size mismatch");
    std::vector<Trajectory> out(policies.size());
    pool.parallel_for(policies.size(), [&](std::size_t i) { out[i] = rollout(policies[i], spec, seeds[i]); });
    return out;
}

enum class PerturbKind { DynamicsScale, DriftScale, MoveTarget };

inline PerturbKind perturb_kind_from_name(const std::string& s)
{
    if (s == "dynamics-scale") return PerturbKind::DynamicsScale;
    if (s == "drift-scale") return PerturbKind::DriftScale;
    if (s == "move-target") return PerturbKind::MoveTarget;
    throw std::invalid_argument("unknown perturbation kind: " + s);
}

/// Scales actuator channels or drift. Nominal value 1.0 returns the spec
/// unchanged. channels empty = all channels.
inline EnvSpec apply_perturbation(const EnvSpec& spec, PerturbKind kind, double value,
                                  const std::vector<int>& channels = {})
{
    EnvSpec out = spec;
    switch (kind) {
    case PerturbKind::DynamicsScale: {
        if (value < 0.0 || value > 4.5)
            throw std::invalid_argument("dynamics-scale outside [0, 4.5]");
        if (channels.empty()) {
            out.dynamics_scale *= value;
        } else {
            for (int c : channels) {
                if (c < 0 || c > 1)
                    throw std::invalid_argument("dynamics-scale: bad channel");
                out.dynamics_scale[c] *= value;
            }
        }
        break;
    }
    case PerturbKind::DriftScale:
        if (value < 0.25 || value > 50.0)
            throw std::invalid_argument("drift-scale outside [0.25, 50]");
        out.drift *= value;
        break;
    case PerturbKind::MoveTarget:
        throw std::invalid_argument("move-target takes a point, not a scalar");
    }
    return out;
}

/// Task perturbation: new reward target, physics unchanged.
inline EnvSpec apply_move_target(const EnvSpec& spec, const Vec2& new_target)
{
    if (!spec.target)
        throw std::invalid_argument("move-target: env has no target");
    if (!spec.arena.contains(new_target))
        throw std::invalid_argument("move-target: target outside arena");
    EnvSpec out = spec;
    out.target = new_target;
    return out;
}

} // namespace skillbench

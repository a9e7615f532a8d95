#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <skillbench/net.hpp>
#include <skillbench/rng.hpp>
#include <skillbench/thread_pool.hpp>
#include <skillbench/types.hpp>

namespace skillbench {

// Axis-aligned box in descriptor space, any dimension.
struct BoxN {
    Vec lo, hi;

    Eigen::Index dim() const { return lo.size(); }

    Vec clip(const Vec& p) const { return p.cwiseMax(lo).cwiseMin(hi); }

    bool contains(const Vec& p) const
    {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }

    void validate() const
    {
        if (lo.size() != hi.size() || lo.size() == 0)
            throw std::invalid_argument("BoxN: bad bounds");
        if (((hi - lo).array() <= 0.0).any())
            throw std::invalid_argument("BoxN: degenerate bounds (zero volume)");
    }
};

/// Centroidal Voronoi tessellation of a box: k-means over 50*num_cells
/// uniform samples, at most 100 Lloyd iterations, empty clusters reseeded to
/// the farthest sample. Returns num_cells x dim centroids, deterministic per
/// seed and worker count.
inline Mat build_cvt_centroids(int num_cells, const BoxN& bounds, std::uint64_t seed, ThreadPool* pool = nullptr)
{
    if (num_cells < 1)
        throw std::invalid_argument("build_cvt_centroids: num_cells must be >= 1");
    bounds.validate();
    const Eigen::Index dim = bounds.dim();
    const Eigen::Index n_samples = static_cast<Eigen::Index>(50) * num_cells;

    Rng rng = Rng(seed).derive(rng_tag::kCvt);
    Mat samples(n_samples, dim);
    for (Eigen::Index i = 0; i < n_samples; ++i)
        for (Eigen::Index d = 0; d < dim; ++d)
            samples(i, d) = rng.uniform(bounds.lo[d], bounds.hi[d]);

    // k-means++ init: spreads seeds, avoiding badly imbalanced local optima
    Mat centroids(num_cells, dim);
    centroids.row(0) = samples.row(0);
    Vec d2 = (samples.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < num_cells; ++c) {
        const double total = d2.sum();
        double pick = rng.uniform() * total;
        Eigen::Index chosen = n_samples - 1;
        for (Eigen::Index i = 0; i < n_samples; ++i) {
            pick -= d2[i];
            if (pick <= 0.0) {
                chosen = i;
                break;
            }
        }
        centroids.row(c) = samples.row(chosen);
        d2 = d2.cwiseMin((samples.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<std::size_t>(n_samples));
    std::vector<double> dist(static_cast<std::size_t>(n_samples));
    const auto assign_all = [&] {
        const auto body = [&](std::size_t i) {
            Eigen::Index best;
            dist[i] = (centroids.rowwise() - samples.row(static_cast<Eigen::Index>(i)))
                          .rowwise()
                          .squaredNorm()
                          .minCoeff(&best);
            assign[i] = static_cast<int>(best);
        };
        if (pool)
            pool->parallel_for(static_cast<std::size_t>(n_samples), body, 2048);
        else
            for (std::size_t i = 0; i < static_cast<std::size_t>(n_samples); ++i)
                body(i);
    };

    for (int iter = 0; iter < 100; ++iter) {
        assign_all();
        Mat sums = Mat::Zero(num_cells, dim);
        std::vector<std::int64_t> counts(static_cast<std::size_t>(num_cells), 0);
        for (Eigen::Index i = 0; i < n_samples; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += samples.row(i);
            counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]++;
        }
        // reseed empties to the farthest-from-centroid samples
        std::vector<Eigen::Index> order;
        for (int c = 0; c < num_cells; ++c)
            if (counts[static_cast<std::size_t>(c)] == 0)
                order.push_back(c);
        Mat next(num_cells, dim);
        if (!order.empty()) {
            std::vector<Eigen::Index> idx(static_cast<std::size_t>(n_samples));
            for (Eigen::Index i = 0; i < n_samples; ++i)
                idx[static_cast<std::size_t>(i)] = i;
            std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(order.size()), idx.end(),
                              [&dist](Eigen::Index a, Eigen::Index b) {
                                  return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
                              });
            for (std::size_t k = 0; k < order.size(); ++k)
                next.row(order[k]) = samples.row(idx[k]);
        }
        for (int c = 0; c < num_cells; ++c)
            if (counts[static_cast<std::size_t>(c)] > 0)
                next.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        const double moved = (next - centroids).rowwise().norm().maxCoeff();
        centroids = std::move(next);
        if (moved < 1e-10 && order.empty())
            break;
    }
    return centroids;
}

struct Elite {
    Genotype genotype;
    double fitness = 0.0;
    Vec descriptor;
};

struct QdMetrics {
    std::optional<double> max_fitness;
    int coverage = 0;
    double qd_score = 0.0;
    double offset = 0.0;
};

// CVT-tessellated elite archive. Out-of-bounds descriptors are clipped and
// counted; ties keep the incumbent.
class CvtRepertoire {
public:
    CvtRepertoire() = default;

    CvtRepertoire(Mat centroids, BoxN bounds)
        : centroids_(std::move(centroids)), bounds_(std::move(bounds)),
          cells_(static_cast<std::size_t>(centroids_.rows()))
    {
        bounds_.validate();
        if (centroids_.cols() != bounds_.dim())
            throw std::invalid_argument("CvtRepertoire: centroid/bounds dimension mismatch");
    }

    int num_cells() const { return static_cast<int>(centroids_.rows()); }
    Eigen::Index descriptor_dim() const { return centroids_.cols(); }
    const Mat& centroids() const { return centroids_; }
    const BoxN& bounds() const { return bounds_; }
    std::uint64_t clip_events() const { return clip_events_; }

    const std::optional<Elite>& cell(int i) const { return cells_[static_cast<std::size_t>(i)]; }

    int nearest_cell(const Vec& descriptor) const
    {
        Eigen::Index best;
        (centroids_.rowwise() - descriptor.transpose()).rowwise().squaredNorm().minCoeff(&best);
        return static_cast<int>(best);
    }

    struct InsertResult {
        bool inserted = false;
        int cell = -1;
        bool clipped = false;
    };

    /// MAP-Elites rule: fill empty cell, otherwise replace only on strictly
    /// higher fitness.
    InsertResult insert(const Genotype& genotype, double fitness, const Vec& descriptor)
    {
        if (!std::isfinite(fitness))
            throw std::invalid_argument("CvtRepertoire::insert: non-finite fitness");
        InsertResult res;
        Vec d = descriptor;
        if (!bounds_.contains(d)) {
            d = bounds_.clip(d);
            ++clip_events_;
            res.clipped = true;
        }
        res.cell = nearest_cell(d);
        auto& slot = cells_[static_cast<std::size_t>(res.cell)];
        if (!slot || fitness > slot->fitness) {
            slot = Elite{genotype, fitness, std::move(d)};
            res.inserted = true;
        }
        return res;
    }

    std::vector<int> occupied_cells() const
    {
        std::vector<int> out;
        for (int i = 0; i < num_cells(); ++i)
            if (cells_[static_cast<std::size_t>(i)])
                out.push_back(i);
        return out;
    }

    int coverage() const
    {
        int n = 0;
        for (const auto& c : cells_)
            n += c.has_value() ? 1 : 0;
        return n;
    }

    QdMetrics metrics(double offset) const
    {
        QdMetrics m;
        m.offset = offset;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& c : cells_) {
            if (!c)
                continue;
            ++m.coverage;
            m.qd_score += c->fitness + offset;
            best = std::max(best, c->fitness);
        }
        if (m.coverage > 0)
            m.max_fitness = best;
        return m;
    }

    // direct access for serialization
    std::vector<std::optional<Elite>>& cells_mutable() { return cells_; }
    const std::vector<std::optional<Elite>>& cells() const { return cells_; }
    void set_clip_events(std::uint64_t v) { clip_events_ = v; }

private:
    Mat centroids_;
    BoxN bounds_;
    std::vector<std::optional<Elite>> cells_;
    std::uint64_t clip_events_ = 0;
};

inline QdMetrics qd_metrics(const CvtRepertoire& rep, double offset) { return rep.metrics(offset); }

} // namespace skillbench

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <skillbench/net.hpp>
#include <skillbench/types.hpp>

namespace skillbench {

struct ArchiveEntry {
    Genotype genotype;
    double fitness = 0.0;
    Vec descriptor;       // learned (latent) descriptor
    Vec trajectory_summary; // raw input the encoder sees, kept for retraining
};

// Distance-thresholded archive for learned descriptors. A candidate farther
// than l from everything is appended; otherwise it competes on fitness with
// its nearest neighbor. When the archive outgrows its budget, l grows by 5%
// and below-l clusters are merged keeping the fittest member.
class UnstructuredArchive {
public:
    UnstructuredArchive() = default;

    UnstructuredArchive(double initial_l, std::size_t size_budget)
        : l_(initial_l), budget_(size_budget)
    {
        if (initial_l <= 0.0)
            throw std::invalid_argument("UnstructuredArchive: l must be positive");
    }

    double l() const { return l_; }
    void set_l(double v) { l_ = v; }
    std::size_t budget() const { return budget_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const ArchiveEntry& entry(std::size_t i) const { return entries_[i]; }
    const std::vector<ArchiveEntry>& entries() const { return entries_; }
    std::vector<ArchiveEntry>& entries_mutable() { return entries_; }

    std::optional<double> max_fitness() const
    {
        if (entries_.empty())
            return std::nullopt;
        double best = entries_.front().fitness;
        for (const auto& e : entries_)
            best = std::max(best, e.fitness);
        return best;
    }

    struct InsertResult {
        bool accepted = false;
        bool appended = false;
        std::size_t index = 0;
    };

    InsertResult insert(ArchiveEntry entry)
    {
        if (!std::isfinite(entry.fitness))
            throw std::invalid_argument("UnstructuredArchive::insert: non-finite fitness");
        InsertResult res;
        if (entries_.empty()) {
            entries_.push_back(std::move(entry));
            res.accepted = res.appended = true;
            res.index = 0;
            enforce_budget();
            return res;
        }
        if (entry.descriptor.size() != entries_.front().descriptor.size())
            throw std::invalid_argument("UnstructuredArchive::insert: descriptor dimension mismatch");
        std::size_t nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const double d = (entries_[i].descriptor - entry.descriptor).norm();
            if (d < best) {
                best = d;
                nearest = i;
            }
        }
        if (best > l_) {
            entries_.push_back(std::move(entry));
            res.accepted = res.appended = true;
            res.index = entries_.size() - 1;
            enforce_budget();
        } else if (entry.fitness > entries_[nearest].fitness) {
            entries_[nearest] = std::move(entry);
            res.accepted = true;
            res.index = nearest;
        }
        return res;
    }

    /// Rebuilds the archive so no two kept entries are within dist < l of
    /// each other, keeping the fittest member of every below-l cluster.
    void refilter()
    {
        if (entries_.size() < 2)
            return;
        std::vector<std::size_t> order(entries_.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
            return entries_[a].fitness > entries_[b].fitness;
        });
        std::vector<ArchiveEntry> kept;
        kept.reserve(entries_.size());
        for (std::size_t oi : order) {
            bool dominated = false;
            for (const auto& k : kept) {
                if ((k.descriptor - entries_[oi].descriptor).norm() <= l_) {
                    dominated = true;
                    break;
                }
            }
            if (!dominated)
                kept.push_back(std::move(entries_[oi]));
        }
        entries_ = std::move(kept);
    }

    /// Replaces every descriptor via fn(entry) and re-applies the insertion
    /// discipline under the current l.
    template <typename Fn>
    void recompute_descriptors(Fn&& fn)
    {
        for (auto& e : entries_)
            e.descriptor = fn(e);
        refilter();
        enforce_budget();
    }

private:
    void enforce_budget()
    {
        while (entries_.size() > budget_) {
            l_ *= 1.05;
            refilter();
        }
    }

    std::vector<ArchiveEntry> entries_;
    double l_ = 0.2;
    std::size_t budget_ = 1024;
};

} // namespace skillbench

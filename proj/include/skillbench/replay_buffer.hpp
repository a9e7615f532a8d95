#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <skillbench/env.hpp>
#include <skillbench/rng.hpp>

namespace skillbench {

// One stored interaction. Actions are kept in normalized [-1, 1] units.
// episode_return is the undiscounted env return of the episode the
// transition came from (needed by SMERL gating).
struct BufferTransition {
    Vec2 state;
    Vec2 action;
    Vec2 next_state;
    double reward_env = 0.0;
    bool done = false;
    double episode_return = 0.0;
    std::int32_t skill = -1;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 1'000'000) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    void append(const BufferTransition& t)
    {
        if (data_.size() < capacity_) {
            data_.push_back(t);
        } else {
            data_[write_] = t;
            write_ = (write_ + 1) % capacity_;
        }
    }

    const BufferTransition& operator[](std::size_t i) const { return data_[i]; }

    std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const
    {
        if (data_.empty())
            throw std::runtime_error("ReplayBuffer: sampling from empty buffer");
        std::vector<std::size_t> idx(batch);
        for (auto& i : idx)
            i = rng.uniform_int(data_.size());
        return idx;
    }

    const std::vector<BufferTransition>& data() const { return data_; }
    std::vector<BufferTransition>& data_mutable() { return data_; }
    std::size_t write_cursor() const { return write_; }
    void set_write_cursor(std::size_t w) { write_ = w; }

private:
    std::size_t capacity_;
    std::size_t write_ = 0;
    std::vector<BufferTransition> data_;
};

} // namespace skillbench

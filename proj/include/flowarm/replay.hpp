#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "flowarm/rng.hpp"

namespace flowarm {

struct Transition {
    Eigen::VectorXd obs;
    Eigen::VectorXd action;
    double reward = 0.0;
    Eigen::VectorXd next_obs;
    bool done = false;
};

using Trajectory = std::vector<Transition>;

// Bounded ring storage; once full, inserts overwrite the oldest entry.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
        storage_.reserve(capacity);
    }

    void push(Transition t) {
        if (storage_.size() < capacity_) {
            storage_.push_back(std::move(t));
        } else {
            storage_[cursor_] = std::move(t);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t cursor() const { return cursor_; }
    bool empty() const { return storage_.empty(); }

    const Transition& operator[](std::size_t i) const { return storage_[i]; }

    std::vector<const Transition*> sample(std::size_t n, Rng& rng) const {
        if (empty()) throw std::invalid_argument("ReplayBuffer: sample from empty buffer");
        std::vector<const Transition*> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(&storage_[rng.uniform_index(storage_.size())]);
        return out;
    }

    // Raw access for checkpoint serialization.
    const std::vector<Transition>& storage() const { return storage_; }
    void restore(std::vector<Transition> storage, std::size_t cursor) {
        if (storage.size() > capacity_) throw std::invalid_argument("ReplayBuffer: restore exceeds capacity");
        storage_ = std::move(storage);
        cursor_ = cursor % capacity_;
    }

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> storage_;
};

} // namespace flowarm

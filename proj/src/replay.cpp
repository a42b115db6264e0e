#include "mamorl/replay.hpp"

#include "mamorl/errors.hpp"

#include <algorithm>

namespace mamorl::train {

bool Transition::is_finite() const {
    auto finite = [](const auto& list) {
        return std::all_of(list.begin(), list.end(), [](const auto& v) { return v.allFinite(); });
    };
    return state.allFinite() && actions.allFinite() && rewards.allFinite() &&
           next_state.allFinite() && prefs.allFinite() && finite(obs) && finite(next_obs);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
    count_ = std::min(count_ + 1, capacity_);
}

std::optional<std::vector<std::size_t>> ReplayBuffer::sample_indices(Rng& rng,
                                                                     std::size_t n) const {
    if (n == 0 || count_ < n) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, count_ - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    return idx;
}

std::optional<std::vector<Transition>> ReplayBuffer::sample(Rng& rng, std::size_t n) const {
    const auto idx = sample_indices(rng, n);
    if (!idx) return std::nullopt;
    std::vector<Transition> batch;
    batch.reserve(n);
    for (const auto i : *idx) batch.push_back(items_[i]);
    return batch;
}

}  // namespace mamorl::train

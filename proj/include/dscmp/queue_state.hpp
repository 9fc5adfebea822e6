#ifndef DSCMP_QUEUE_STATE_HPP_
#define DSCMP_QUEUE_STATE_HPP_

#include <cstddef>
#include <vector>

#include "dscmp/numkit/tensor.hpp"

namespace dscmp {

/// Per-agent ring buffer of the last q hidden and cell vectors.
///
/// Slots are addressed oldest first: slot 0 holds h_{t-q}, slot q-1 holds h_{t-1}.
/// Both sequences always hold exactly q entries of the same width.
class FeatureQueue {
public:
    /// q zero entries of width `width` in both sequences. Throws on zero sizes.
    FeatureQueue(std::size_t length, std::size_t width);

    std::size_t length() const noexcept { return hidden_.size(); }
    std::size_t width() const noexcept { return width_; }

    const Vec& hidden(std::size_t slot) const { return hidden_[physical(slot)]; }
    const Vec& cell(std::size_t slot) const { return cell_[physical(slot)]; }
    const Vec& newest_hidden() const { return hidden(length() - 1); }
    const Vec& newest_cell() const { return cell(length() - 1); }

    /// Replaces one hidden entry (used by social refinement). Width must match.
    void set_hidden(std::size_t slot, Vec value);

    /// Drops the oldest entry and appends (h, c) as the newest.
    void push_pop(const Vec& h, const Vec& c);

private:
    std::size_t physical(std::size_t slot) const noexcept { return (head_ + slot) % hidden_.size(); }

    std::size_t width_;
    std::size_t head_ = 0;  // physical index of the oldest slot
    std::vector<Vec> hidden_;
    std::vector<Vec> cell_;
};

std::vector<FeatureQueue> init_queues(std::size_t n_agents, std::size_t length, std::size_t width);

/// Value-semantic update: returns `queue` after one push_pop.
FeatureQueue push_pop(FeatureQueue queue, const Vec& h, const Vec& c);

/// (1/q) Σ_l h_{t-l}
Vec mean_hidden(const FeatureQueue& queue);

}  // namespace dscmp

#endif  // DSCMP_QUEUE_STATE_HPP_

#include "dscmp/queue_state.hpp"

#include <stdexcept>
#include <string>

namespace dscmp {

namespace {

void require_width(const Vec& v, std::size_t width, const char* what) {
    if (v.size() != width) {
        throw ShapeError(std::string("FeatureQueue: ") + what + " has width " + std::to_string(v.size()) +
                         ", queue width is " + std::to_string(width));
    }
    if (!all_finite(v)) throw NumericError(std::string("FeatureQueue: non-finite ") + what);
}

}  // namespace

FeatureQueue::FeatureQueue(std::size_t length, std::size_t width)
    : width_(width), hidden_(length, Vec(width)), cell_(length, Vec(width)) {
    if (length == 0 || width == 0) throw std::invalid_argument("FeatureQueue: length and width must be positive");
}

void FeatureQueue::set_hidden(std::size_t slot, Vec value) {
    if (slot >= length()) throw std::out_of_range("FeatureQueue::set_hidden: slot out of range");
    require_width(value, width_, "hidden entry");
    hidden_[physical(slot)] = std::move(value);
}

void FeatureQueue::push_pop(const Vec& h, const Vec& c) {
    require_width(h, width_, "hidden entry");
    require_width(c, width_, "cell entry");
    hidden_[head_] = h;
    cell_[head_] = c;
    head_ = (head_ + 1) % hidden_.size();
}

std::vector<FeatureQueue> init_queues(std::size_t n_agents, std::size_t length, std::size_t width) {
    if (n_agents == 0) throw std::invalid_argument("init_queues: need at least one agent");
    return std::vector<FeatureQueue>(n_agents, FeatureQueue(length, width));
}

FeatureQueue push_pop(FeatureQueue queue, const Vec& h, const Vec& c) {
    queue.push_pop(h, c);
    return queue;
}

Vec mean_hidden(const FeatureQueue& queue) {
    Vec sum(queue.width());
    for (std::size_t s = 0; s < queue.length(); ++s) sum += queue.hidden(s);
    sum *= Real(1) / static_cast<Real>(queue.length());
    return sum;
}

}  // namespace dscmp

#include "dscmp/numkit/param_store.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dscmp {

void Gradients::zero() noexcept {
    for (auto& slot : slots_) slot.fill(Real(0));
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.slots_.size() != slots_.size()) throw ShapeError("Gradients: slot count mismatch");
    for (std::size_t i = 0; i < slots_.size(); ++i) slots_[i] += other.slots_[i];
    return *this;
}

ParamId ParamStore::add(std::string name, std::size_t rows, std::size_t cols) {
    if (index_.contains(name)) throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
    const ParamId id{values_.size()};
    index_.emplace(name, id.index);
    names_.push_back(std::move(name));
    values_.emplace_back(rows, cols);
    grads_.add_slot(rows, cols);
    ++version_;
    return id;
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return ParamId{it->second};
}

ParamId ParamStore::id(std::string_view name) const {
    if (auto found = find(name)) return *found;
    throw std::out_of_range("ParamStore: unknown parameter '" + std::string(name) + "'");
}

Gradients ParamStore::make_gradients() const {
    Gradients out;
    for (const auto& v : values_) out.add_slot(v.rows(), v.cols());
    return out;
}

std::size_t ParamStore::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

std::vector<ParamId> ParamStore::ids() const {
    std::vector<ParamId> out;
    out.reserve(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out.push_back(ParamId{i});
    return out;
}

void ParamStore::write(std::ostream& out) const {
    out << "params " << values_.size() << '\n';
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const Mat& v = values_[i];
        out << names_[i] << ' ' << v.rows() << ' ' << v.cols() << '\n';
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (k) out << ' ';
            out << format_real(v[k]);
        }
        out << '\n';
    }
}

void ParamStore::read_values(std::istream& in) {
    std::string tag;
    std::size_t count = 0;
    if (!(in >> tag >> count) || tag != "params") throw ParseError("expected 'params <count>'", 0);
    if (count != values_.size()) {
        throw ParseError("parameter count " + std::to_string(count) + " does not match model (" +
                             std::to_string(values_.size()) + ")",
                         0);
    }
    std::vector<Mat> loaded(values_.size());
    std::vector<bool> seen(values_.size(), false);
    for (std::size_t n = 0; n < count; ++n) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(in >> name >> rows >> cols)) throw ParseError("truncated parameter header", 0);
        const ParamId pid = id(name);
        if (seen[pid.index]) throw ParseError("parameter '" + name + "' listed twice", 0);
        const Mat& current = values_[pid.index];
        if (current.rows() != rows || current.cols() != cols) {
            throw ShapeError("parameter '" + name + "' has shape " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", model expects " + std::to_string(current.rows()) +
                             "x" + std::to_string(current.cols()));
        }
        std::vector<Real> payload(rows * cols);
        std::string token;
        for (auto& v : payload) {
            if (!(in >> token)) throw ParseError("truncated values for '" + name + "'", 0);
            v = parse_real(token);
        }
        loaded[pid.index] = Mat(rows, cols, std::move(payload));
        seen[pid.index] = true;
    }
    values_ = std::move(loaded);
    ++version_;
}

std::string format_real(Real value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

Real parse_real(std::string_view text, std::size_t line) {
    Real value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last) {
        throw ParseError("not a number: '" + std::string(text) + "'", line);
    }
    return value;
}

}  // namespace dscmp

#ifndef DSCMP_NUMKIT_PARAM_STORE_HPP_
#define DSCMP_NUMKIT_PARAM_STORE_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dscmp/numkit/tensor.hpp"

namespace dscmp {

/// Index of a tensor inside a ParamStore.
struct ParamId {
    std::size_t index = static_cast<std::size_t>(-1);
    friend bool operator==(ParamId, ParamId) = default;
};

/// Gradient buffer whose slots mirror the tensors of one ParamStore.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(std::vector<Mat> slots) : slots_(std::move(slots)) {}

    Mat& operator[](ParamId id) { return slots_.at(id.index); }
    const Mat& operator[](ParamId id) const { return slots_.at(id.index); }
    std::size_t size() const noexcept { return slots_.size(); }

    void add_slot(std::size_t rows, std::size_t cols) { slots_.emplace_back(rows, cols); }
    void zero() noexcept;
    /// Element-wise accumulate; shapes must match slot by slot.
    Gradients& operator+=(const Gradients& other);

private:
    std::vector<Mat> slots_;
};

/// Named learnable tensors, each with a value slot and a gradient slot of the same shape.
///
/// Any mutable access to a value bumps version(); forward caches record the
/// version they were computed at so a backward pass can reject stale caches.
class ParamStore {
public:
    ParamStore() = default;

    /// Registers a zero tensor. Throws std::invalid_argument on a duplicate name.
    ParamId add(std::string name, std::size_t rows, std::size_t cols);

    std::optional<ParamId> find(std::string_view name) const;
    /// Throws std::out_of_range when the name is unknown.
    ParamId id(std::string_view name) const;

    const Mat& value(ParamId id) const { return values_.at(id.index); }
    Mat& mutable_value(ParamId id) {
        ++version_;
        return values_.at(id.index);
    }

    Gradients& grads() noexcept { return grads_; }
    const Gradients& grads() const noexcept { return grads_; }
    /// Fresh zero buffer shaped like this store.
    Gradients make_gradients() const;
    void zero_grad() noexcept { grads_.zero(); }

    std::size_t size() const noexcept { return values_.size(); }
    std::size_t scalar_count() const noexcept;
    const std::string& name(ParamId id) const { return names_.at(id.index); }
    std::vector<ParamId> ids() const;

    std::uint64_t version() const noexcept { return version_; }

    /// Text checkpoint block; see docs/formats.md.
    void write(std::ostream& out) const;
    /// Overwrites values from a block written by write(). Every stored name must be
    /// present with the same shape; extra or missing tensors are an error.
    void read_values(std::istream& in);

private:
    std::vector<std::string> names_;
    std::vector<Mat> values_;
    Gradients grads_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t version_ = 0;
};

/// Shortest round-trip decimal text for a real.
std::string format_real(Real value);
/// Parses text produced by format_real (or any decimal/hex float). Throws ParseError.
Real parse_real(std::string_view text, std::size_t line = 0);

}  // namespace dscmp

#endif  // DSCMP_NUMKIT_PARAM_STORE_HPP_

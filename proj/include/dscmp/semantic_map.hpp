#ifndef DSCMP_SEMANTIC_MAP_HPP_
#define DSCMP_SEMANTIC_MAP_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dscmp/numkit/tensor.hpp"

namespace dscmp {

/// Class-score or one-hot label grid describing a scene's static layout.
/// Values are held channel-major: index (c * height + y) * width + x.
struct SemanticMap {
    std::string scene_id;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<Real> values;

    static SemanticMap zeros(std::string scene_id, std::size_t height, std::size_t width, std::size_t channels);

    Real at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
    Real& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
};

/// Text grid format (docs/formats.md):
///   dscmp-map 1
///   scene <id>
///   <H> <W> <C>
///   H lines of W*C values, row-major over (row, column, channel)
SemanticMap read_semantic_map(std::istream& in);
SemanticMap read_semantic_map(const std::filesystem::path& path);
void write_semantic_map(std::ostream& out, const SemanticMap& map);
void write_semantic_map(const std::filesystem::path& path, const SemanticMap& map);

}  // namespace dscmp

#endif  // DSCMP_SEMANTIC_MAP_HPP_

#include "dscmp/semantic_map.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dscmp/numkit/param_store.hpp"

namespace dscmp {

SemanticMap SemanticMap::zeros(std::string scene_id, std::size_t height, std::size_t width, std::size_t channels) {
    SemanticMap map;
    map.scene_id = std::move(scene_id);
    map.height = height;
    map.width = width;
    map.channels = channels;
    map.values.assign(height * width * channels, Real(0));
    return map;
}

SemanticMap read_semantic_map(std::istream& in) {
    std::size_t line_no = 0;
    std::string line;
    const auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) throw ParseError("semantic map: unexpected end of file", line_no + 1);
        ++line_no;
        return line;
    };

    if (next_line().rfind("dscmp-map 1", 0) != 0) throw ParseError("semantic map: missing 'dscmp-map 1' header", 1);
    SemanticMap map;
    {
        std::istringstream ss(next_line());
        std::string tag;
        if (!(ss >> tag) || tag != "scene") throw ParseError("semantic map: expected 'scene <id>'", line_no);
        ss >> map.scene_id;
    }
    {
        std::istringstream ss(next_line());
        if (!(ss >> map.height >> map.width >> map.channels) || map.height == 0 || map.width == 0 ||
            map.channels == 0) {
            throw ParseError("semantic map: expected positive '<H> <W> <C>'", line_no);
        }
    }
    map.values.assign(map.height * map.width * map.channels, Real(0));
    for (std::size_t y = 0; y < map.height; ++y) {
        std::istringstream ss(next_line());
        std::string token;
        for (std::size_t x = 0; x < map.width; ++x) {
            for (std::size_t c = 0; c < map.channels; ++c) {
                if (!(ss >> token)) throw ParseError("semantic map: row too short", line_no);
                const Real v = parse_real(token, line_no);
                if (!std::isfinite(v)) throw ParseError("semantic map: non-finite value", line_no);
                map.at(c, y, x) = v;
            }
        }
        if (ss >> token) throw ParseError("semantic map: row too long", line_no);
    }
    return map;
}

SemanticMap read_semantic_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open semantic map '" + path.string() + "'");
    return read_semantic_map(in);
}

void write_semantic_map(std::ostream& out, const SemanticMap& map) {
    out << "dscmp-map 1\n";
    out << "scene " << (map.scene_id.empty() ? "-" : map.scene_id) << '\n';
    out << map.height << ' ' << map.width << ' ' << map.channels << '\n';
    for (std::size_t y = 0; y < map.height; ++y) {
        for (std::size_t x = 0; x < map.width; ++x) {
            for (std::size_t c = 0; c < map.channels; ++c) {
                if (x || c) out << ' ';
                out << format_real(map.at(c, y, x));
            }
        }
        out << '\n';
    }
}

void write_semantic_map(const std::filesystem::path& path, const SemanticMap& map) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write semantic map '" + path.string() + "'");
    write_semantic_map(out, map);
}

}  // namespace dscmp

#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cchain {

/// Semantic level of a visual concept. Scene is the deepest level (aligned
/// with the network output side), color the shallowest.
enum class Level { Color = 0, Material = 1, Part = 2, Object = 3, Scene = 4 };

inline constexpr std::array<Level, 5> kLevelsDeepToShallow = {
    Level::Scene, Level::Object, Level::Part, Level::Material, Level::Color};

inline std::string_view level_name(Level level) {
    switch (level) {
        case Level::Color: return "color";
        case Level::Material: return "material";
        case Level::Part: return "part";
        case Level::Object: return "object";
        case Level::Scene: return "scene";
    }
    throw std::logic_error("level_name: invalid level");
}

inline std::optional<Level> try_parse_level(std::string_view name) {
    for (Level level : kLevelsDeepToShallow)
        if (level_name(level) == name) return level;
    return std::nullopt;
}

inline Level parse_level(std::string_view name) {
    if (auto level = try_parse_level(name)) return *level;
    throw std::invalid_argument("unknown semantic level: " + std::string(name));
}

/// Level one step shallower (scene -> object -> ... -> color -> none).
inline std::optional<Level> shallower_level(Level level) {
    if (level == Level::Color) return std::nullopt;
    return static_cast<Level>(static_cast<int>(level) - 1);
}

}  // namespace cchain

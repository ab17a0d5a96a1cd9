#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "pyroprop/errors.hpp"

namespace pyroprop {

// Strict config parsing: any key outside `allowed` is a ConfigError, so typos
// fail loudly instead of silently keeping a default.
inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
    if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return it.key() == k; });
        if (!known) throw ConfigError(ctx + ": unknown key \"" + it.key() + "\"");
    }
}

template <typename T>
T config_get(const nlohmann::json& j, const char* key, T fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(ctx + ": bad value for \"" + std::string(key) + "\"");
    }
}

} // namespace pyroprop

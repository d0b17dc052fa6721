#pragma once

#include <stdexcept>
#include <string>

namespace stackplanner {

// Base class for all library errors. Subsystems derive one type per
// failure condition so callers can discriminate without string matching.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stackplanner

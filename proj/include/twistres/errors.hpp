#pragma once

#include <stdexcept>
#include <string>

namespace twistres {

/// Bad user input: malformed config, invalid geometry, out-of-range parameter.
/// The CLI maps this to exit code 1.
class invalid_input : public std::invalid_argument {
public:
    explicit invalid_input(const std::string& what) : std::invalid_argument(what) {}
};

/// A well-posed request that the numerics cannot honour: degenerate target,
/// threshold collision, lost resonance, stagnating iteration. Exit code 2.
class numeric_failure : public std::runtime_error {
public:
    explicit numeric_failure(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw invalid_input(what);
}

}  // namespace twistres

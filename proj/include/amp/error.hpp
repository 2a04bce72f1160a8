#pragma once

#include <stdexcept>
#include <string>

namespace amp {

// Bad inputs: out-of-domain parameters, malformed priors, inconsistent shapes.
class SpecError : public std::invalid_argument {
public:
    explicit SpecError(const std::string& what) : std::invalid_argument(what) {}
};

// Iterations that blow up or solvers that fail to bracket a root.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw SpecError(msg);
}

} // namespace amp

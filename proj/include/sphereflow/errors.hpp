#pragma once

#include <stdexcept>
#include <string>

namespace sphereflow {

// Base for every error the library raises on purpose. The CLI maps these to
// exit code 2 (numerical guard) or 1 (bad input) by type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error("DimensionMismatch: " + msg) {}
};

struct NearZeroVector : Error {
    explicit NearZeroVector(const std::string& msg) : Error("NearZeroVector: " + msg) {}
};

struct AntipodalPoints : Error {
    explicit AntipodalPoints(const std::string& msg) : Error("AntipodalPoints: " + msg) {}
};

struct StepCountMismatch : Error {
    explicit StepCountMismatch(const std::string& msg) : Error("StepCountMismatch: " + msg) {}
};

struct GridMismatch : Error {
    explicit GridMismatch(const std::string& msg) : Error("GridMismatch: " + msg) {}
};

struct IllPosedBound : Error {
    explicit IllPosedBound(const std::string& msg) : Error("IllPosedBound: " + msg) {}
};

struct ZeroMeanParticles : Error {
    explicit ZeroMeanParticles(const std::string& msg) : Error("ZeroMeanParticles: " + msg) {}
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& msg) : Error("InvalidArgument: " + msg) {}
};

} // namespace sphereflow

#ifndef KAMFORGE_ERRORS_HPP
#define KAMFORGE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kamforge {

enum class failure {
    structural,
    domain,
    resonance,
    hypothesis,
    equilibrium,
    smallness,
    solver,
    step_failed,
    divergence,
    strip_exhausted,
    ill_posed_boundary,
    unsupported,
    blow_up,
    config,
    io
};

inline const char* failure_name(failure f) {
    switch (f) {
    case failure::structural: return "structural";
    case failure::domain: return "domain";
    case failure::resonance: return "resonance";
    case failure::hypothesis: return "hypothesis";
    case failure::equilibrium: return "equilibrium";
    case failure::smallness: return "smallness";
    case failure::solver: return "solver";
    case failure::step_failed: return "step_failed";
    case failure::divergence: return "divergence";
    case failure::strip_exhausted: return "strip_exhausted";
    case failure::ill_posed_boundary: return "ill_posed_boundary";
    case failure::unsupported: return "unsupported";
    case failure::blow_up: return "blow_up";
    case failure::config: return "config";
    case failure::io: return "io";
    }
    return "unknown";
}

class kam_error : public std::runtime_error {
public:
    kam_error(failure kind, const std::string& what)
        : std::runtime_error(std::string(failure_name(kind)) + ": " + what), kind_(kind) {}
    failure kind() const noexcept { return kind_; }

private:
    failure kind_;
};

}  // namespace kamforge

#endif

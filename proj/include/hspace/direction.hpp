#pragma once

// A discovered editing direction in the bottleneck space, with enough
// provenance to reproduce or audit it.

#include <stdexcept>
#include <string>

#include "hspace/core/matrix.hpp"

namespace hspace {

enum class DirectionComponent { joint, individual };

inline const char* to_string(DirectionComponent c) {
    return c == DirectionComponent::joint ? "joint" : "individual";
}

inline DirectionComponent direction_component_from_string(const std::string& s) {
    if (s == "joint") return DirectionComponent::joint;
    if (s == "individual") return DirectionComponent::individual;
    throw std::invalid_argument("unknown direction component '" + s + "'");
}

struct SemanticDirection {
    Vector v;                                               // unit vector, dim d_h
    DirectionComponent component = DirectionComponent::joint;
    std::string region;                                     // empty for joint
    int rank_index = 0;                                     // position within its component
    int timestep = -1;                                      // discovery timestep, -1 if n/a
    std::string source_image_id;
    std::string model_hash;
};

}  // namespace hspace

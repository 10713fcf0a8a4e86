#pragma once

#include <string>

#include "hebbseed/network.hpp"

namespace hebbseed {

// Single-file checkpoint: version tag, the network spec as canonical text,
// then every parameter tensor as (name, shape, little-endian f64 payload).
// save/load round-trips bit-exactly.
void save_checkpoint(Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

} // namespace hebbseed

#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "demix/network.hpp"

namespace demix {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout (all integers little-endian uint32, all reals little-endian float64):
//   "DMX1" | layer count | per layer: kind, activation, in_channels, in_height,
//   in_width, weight rows, weight cols, bias length | per layer: weights
//   (row-major) then bias.
void write_checkpoint(std::ostream& out, const Parameters& params);
Parameters read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Parameters& params);
Parameters load_checkpoint(const std::filesystem::path& path);

}  // namespace demix

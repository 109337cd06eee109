#pragma once

#include <filesystem>
#include <iosfwd>

#include "nn/network.hpp"

namespace bayesft::nn {

// Flat little-endian parameter file:
//   "DOPT" | version u32 | record count u32 |
//   per record: name length u32 | UTF-8 name | rank u32 | dims u32 x rank | f64 values
// Trainable parameters come first (sorted by name), then batch-norm buffers.
inline constexpr std::uint32_t kParamFileVersion = 1;

void write_parameters(std::ostream& out, const Network& net);
void save_parameters(const std::filesystem::path& path, const Network& net);

// Loads parameters for `spec`; every record must match a parameter or buffer
// of the spec with the same shape, and all of them must be present.
Network read_parameters(std::istream& in, const NetworkSpec& spec);
Network load_parameters(const std::filesystem::path& path, const NetworkSpec& spec);

}  // namespace bayesft::nn

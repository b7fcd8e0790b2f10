#pragma once

#include <span>
#include <string>

#include "lexa/nn.hpp"

namespace lexa {

// Parameter checkpoint file:
//   magic "LEXA" | u32 version
//   u32 count | count x { u32 name_len | name | u32 rank | u32 extents... | f32 data... }   values
//   u32 count | same record layout                                                          Adam state
//   u32 meta_len | meta bytes (JSON)
// The Adam section stores "<name>.m", "<name>.v" and a rank-0 "<name>.t"
// holding the step count. All integers and floats are little-endian; the f32
// payload round-trips bit-exactly.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, std::span<const ParamPtr> params, const std::string& meta_json);

// Loads into an existing registry; every stored parameter must already exist
// with a matching shape. Returns the meta JSON string.
std::string load_checkpoint(const std::string& path, const ParamSet& params);

// Reads only the trailing meta JSON, skipping the tensor payload.
std::string read_checkpoint_meta(const std::string& path);

}  // namespace lexa

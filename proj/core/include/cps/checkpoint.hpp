#pragma once

// Parameter checkpoints: one line of JSON header (format, version, model
// fingerprint, layout) terminated by '\n', followed by the flat values as
// little-endian IEEE-754 float32.

#include <iosfwd>
#include <string>

#include "cps/model.hpp"

namespace cps {

inline constexpr int kCheckpointVersion = 1;

void write_params(std::ostream& os, const ParamVector& params);
ParamVector read_params(std::istream& is);

void save_params(const std::string& path, const ParamVector& params);
/// Throws DataError on a malformed header or when the payload size disagrees with the layout.
ParamVector load_params(const std::string& path);

/// Little-endian float32 block helpers shared by the other binary formats.
void write_f32_le(std::ostream& os, std::span<const float> values);
std::vector<float> read_f32_le(std::istream& is, std::size_t count);

}  // namespace cps

#pragma once

#include <cstdint>
#include <string>

namespace mfclab {

/// %.17g formatting: enough digits for bit-stable round trips, '.' decimal.
std::string format17(double v);

/// Writes via a temp file in the same directory followed by a rename.
void write_file_atomic(const std::string& path, const std::string& content);

std::string artifact_version();

}  // namespace mfclab

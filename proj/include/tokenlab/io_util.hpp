#pragma once

#include <bit>
#include <string>

namespace tokenlab {

// The binary file formats (EMVOL1, EMSEG1, TUCKPT1) are little-endian on
// disk; the raw-buffer I/O below assumes a little-endian host.
static_assert(std::endian::native == std::endian::little,
              "binary volume/checkpoint I/O requires a little-endian host");

// Writes content to a temp file in the target directory, then renames it
// into place. On any failure the temp file is removed, so a failed run
// never leaves a partial output behind.
void write_file_atomic(const std::string& path, const std::string& content);

} // namespace tokenlab

// SPDX-License-Identifier: Apache-2.0
#pragma once

// DTM1 dense matrix interchange format:
//
//   bytes 0-3   magic "DTM1"
//   bytes 4-7   row count, uint32 little-endian
//   bytes 8-11  column count, uint32 little-endian
//   then rows*cols IEEE-754 float32 little-endian, row-major.
//
// No padding and no footer. Values are narrowed to float32 on write.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "softtopic/matrix.hpp"

namespace softtopic {

void write_dtm1(std::ostream& out, const Matrix& m);
void write_dtm1(const std::filesystem::path& path, const Matrix& m);

/// Throws FormatError on bad magic or a truncated/oversized payload.
Matrix read_dtm1(std::istream& in);
Matrix read_dtm1(const std::filesystem::path& path);

/// Serialised bytes of `m`, convenient for hashing and golden tests.
std::string dtm1_bytes(const Matrix& m);

/// Rounds every entry to the nearest float32, the precision of DTM1.
void round_to_float32(Matrix& m);

}  // namespace softtopic

#pragma once

#include <functional>
#include <iosfwd>
#include <string>

namespace morphkit {

// Writes through a temporary file in the same directory and renames it into
// place, so readers never observe a partial file. "-" writes to stdout.
void write_atomic(const std::string& path, const std::function<void(std::ostream&)>& fill);

// Throws DataError when the file cannot be read.
std::string read_file(const std::string& path);

}  // namespace morphkit

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "morphkit/autodiff.h"

namespace morphkit {

// Binary container, little-endian: magic "MKCK", u32 version, u32 float width
// (8 or 4), u32 record count, then per record: u32 name length, name bytes,
// u32 rank, u64 dims..., row-major data at the given width.
void save_checkpoint(std::ostream& out, const ParamSet& params, unsigned float_width = 8);

struct NamedTensor {
  std::string name;
  Tensor value;
};

std::vector<NamedTensor> load_checkpoint(std::istream& in);

// Copies checkpoint records into `params`, matching by name and shape.
// Throws DataError on any missing, extra or mis-shaped record.
void restore_checkpoint(std::istream& in, ParamSet& params);

}  // namespace morphkit

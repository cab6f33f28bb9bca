#pragma once

#include <iosfwd>
#include <string>

#include "arc/tensor.hpp"

namespace arc {

// Flat binary tensor record: magic "ARCT", version u32, rank u32,
// dims u64 each, then the row-major payload as little-endian f64.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace arc

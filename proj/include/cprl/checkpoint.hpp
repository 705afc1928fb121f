#pragma once

#include <string>
#include <vector>

#include "cprl/tensor.hpp"

namespace cprl {

struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<double> values;  // row-major
};

// Flat binary container: magic "CPRLCKP1", u32 record count, then per record
// u32 name length, name bytes, u32 ndim, u64 dims, f64 values. Little-endian.
void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> load_checkpoint(const std::string& path);

}  // namespace cprl

#pragma once

#include <map>
#include <string>

#include "mimatch/tensor.hpp"

namespace mimatch {

// MGCK container: magic "MGCK", version u32 LE, entry count u32 LE, then per
// entry: name length u32 + UTF-8 name, rank u32, extents u32 x rank, payload
// float32 LE row-major. Entries are written in sorted name order so that
// load -> save reproduces the file byte for byte.
inline constexpr uint32_t kMgckVersion = 1;

void save_mgck(const std::string& path, const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> load_mgck(const std::string& path);

}  // namespace mimatch

#pragma once

#include <map>
#include <string>

#include "adgen/autodiff.hpp"
#include "adgen/tensor.hpp"

namespace adgen {

// Named-array archive: every tensor stored under its dotted path with shape
// and dtype recorded, raw little-endian payload. Round-trips are bit-exact.
void save_archive(const std::string& path, const std::map<std::string, const Tensor*>& entries);
std::map<std::string, Tensor> load_archive(const std::string& path);

// Convenience forms for a parameter store. Loading requires an exact match of
// names and shapes in both directions.
void save_params(const std::string& path, const ad::ParamStore& params);
void load_params(const std::string& path, ad::ParamStore& params);

uint64_t fnv1a64(const void* data, size_t n);
uint64_t file_checksum(const std::string& path);
std::string checksum_hex(uint64_t h);

}  // namespace adgen

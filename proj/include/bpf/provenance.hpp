#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bpf/jsonl.hpp"

namespace bpf {

inline constexpr std::string_view kToolVersion = "0.3.0";

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Hash of the key-sorted compact dump of `config`.
std::string config_hash(const json& config);

/// Header stamped into every artifact: tool version, config hash, backend ids.
json make_provenance(const std::string& config_hash, const std::vector<std::string>& backends);

} // namespace bpf

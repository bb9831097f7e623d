#include "bpf/provenance.hpp"

#include <cstdio>

namespace bpf {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t value) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

std::string config_hash(const json& config) {
    // nlohmann::json objects are std::map-backed, so dump() is already key-sorted.
    return hex64(fnv1a64(config.dump()));
}

json make_provenance(const std::string& hash, const std::vector<std::string>& backends) {
    return {{"tool", "bpf"}, {"version", kToolVersion}, {"config_hash", hash}, {"backends", backends}};
}

} // namespace bpf

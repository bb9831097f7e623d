#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace bpf {

using json = nlohmann::json;

inline constexpr const char* kProvenanceKey = "_provenance";

/// Calls `visit(line_number, object)` for every JSON object line of `path`.
/// Empty lines and `{"_provenance": ...}` header lines are skipped.
/// Throws ParseError naming the line on malformed JSON or non-object lines.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(std::size_t, const json&)>& visit);

std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Returns the provenance header of a JSONL file, if it has one.
std::optional<json> read_provenance(const std::filesystem::path& path);

/// Serializes one JSONL line (compact, UTF-8, trailing LF).
std::string to_jsonl_line(const json& object);

/// Writes `lines` to `path`, prefixed by a provenance header when given.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines,
                 const std::optional<json>& provenance = std::nullopt);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

} // namespace bpf

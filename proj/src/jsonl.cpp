#include "bpf/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "bpf/error.hpp"

namespace bpf {

void read_jsonl(const std::filesystem::path& path,
                const std::function<void(std::size_t, const json&)>& visit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json object;
        try {
            object = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
        }
        if (!object.is_object()) throw ParseError("expected a JSON object", line_no);
        if (object.contains(kProvenanceKey)) continue;
        visit(line_no, object);
    }
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::vector<json> out;
    read_jsonl(path, [&](std::size_t, const json& object) { out.push_back(object); });
    return out;
}

std::optional<json> read_provenance(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    if (!in || !std::getline(in, line)) return std::nullopt;
    auto object = json::parse(line, nullptr, false);
    if (object.is_object() && object.contains(kProvenanceKey)) return object[kProvenanceKey];
    return std::nullopt;
}

std::string to_jsonl_line(const json& object) {
    return object.dump(-1, ' ', false, json::error_handler_t::strict) + "\n";
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines,
                 const std::optional<json>& provenance) {
    std::string buffer;
    if (provenance) buffer += to_jsonl_line(json{{kProvenanceKey, *provenance}});
    for (const auto& line : lines) buffer += to_jsonl_line(line);
    write_file(path, buffer);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << contents;
    if (!out) throw Error("write failed: " + path.string());
}

} // namespace bpf

#include "bpf/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace bpf {
namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

LogSink& sink() {
    static LogSink s;
    return s;
}

} // namespace

LogSink set_warning_sink(LogSink next) {
    std::lock_guard lock(sink_mutex());
    return std::exchange(sink(), std::move(next));
}

void log_warning(const std::string& message) {
    std::lock_guard lock(sink_mutex());
    if (sink()) {
        sink()(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

} // namespace bpf

#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <string>
#include <string_view>

namespace nnnh {

using WarningSink = std::function<void(std::string_view)>;

namespace detail {
struct WarningState {
    std::mutex mutex;
    WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    std::set<std::string> seen;
};

inline WarningState& warning_state() {
    static WarningState state;
    return state;
}
} // namespace detail

/// Replace the warning sink; returns the previous one.
inline WarningSink set_warning_sink(WarningSink sink) {
    auto& st = detail::warning_state();
    std::lock_guard lock(st.mutex);
    std::swap(st.sink, sink);
    return sink;
}

inline void warn(std::string_view msg) {
    auto& st = detail::warning_state();
    std::lock_guard lock(st.mutex);
    if (st.sink) st.sink(msg);
}

/// Emits `msg` only the first time `key` is seen in this process.
inline void warn_once(std::string_view key, std::string_view msg) {
    auto& st = detail::warning_state();
    std::lock_guard lock(st.mutex);
    if (!st.seen.emplace(key).second) return;
    if (st.sink) st.sink(msg);
}

inline void reset_warnings_seen() {
    auto& st = detail::warning_state();
    std::lock_guard lock(st.mutex);
    st.seen.clear();
}

} // namespace nnnh

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace msstream {

enum class EventKind { add_time_point, add_series, remove_time_point, remove_series };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::add_time_point: return "add_time_point";
        case EventKind::add_series: return "add_series";
        case EventKind::remove_time_point: return "remove_time_point";
        case EventKind::remove_series: return "remove_series";
    }
    return "unknown";
}

/// One ingestion update. Which payload fields are meaningful depends on `kind`:
/// add_time_point uses `values` (one per series), add_series uses `id` + `values`
/// (full history), remove_time_point uses `index`, remove_series uses `id`.
struct StreamEvent {
    EventKind kind = EventKind::add_time_point;
    std::vector<double> values;
    std::string id;
    std::size_t index = 0;
    std::optional<double> ts;

    static StreamEvent time_point(std::vector<double> values, std::optional<double> ts = std::nullopt) {
        return {EventKind::add_time_point, std::move(values), {}, 0, ts};
    }
    static StreamEvent series(std::string id, std::vector<double> values) {
        return {EventKind::add_series, std::move(values), std::move(id), 0, std::nullopt};
    }
    static StreamEvent drop_time_point(std::size_t index) {
        return {EventKind::remove_time_point, {}, {}, index, std::nullopt};
    }
    static StreamEvent drop_series(std::string id) {
        return {EventKind::remove_series, {}, std::move(id), 0, std::nullopt};
    }

    friend bool operator==(const StreamEvent&, const StreamEvent&) = default;
};

}  // namespace msstream

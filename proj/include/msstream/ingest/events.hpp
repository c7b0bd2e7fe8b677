#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <istream>
#include <string>
#include <vector>

#include "msstream/error.hpp"
#include "msstream/event.hpp"

namespace msstream::ingest {

namespace detail {

inline std::vector<double> finite_values(const nlohmann::json& j, std::size_t line) {
    if (!j.contains("values") || !j["values"].is_array()) throw ParseError("missing array field 'values'", line);
    std::vector<double> out;
    out.reserve(j["values"].size());
    for (const auto& v : j["values"]) {
        if (!v.is_number()) throw ParseError("non-numeric entry in 'values'", line);
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ParseError("non-finite entry in 'values'", line);
        out.push_back(d);
    }
    return out;
}

inline std::string required_id(const nlohmann::json& j, std::size_t line) {
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
        throw ParseError("missing string field 'id'", line);
    }
    return j["id"].get<std::string>();
}

}  // namespace detail

/// Decodes one JSON-lines event object.
inline StreamEvent event_from_json(const nlohmann::json& j, std::size_t line = 0) {
    if (!j.is_object()) throw ParseError("event must be a JSON object", line);
    if (!j.contains("kind") || !j["kind"].is_string()) throw ParseError("missing string field 'kind'", line);
    const auto kind = j["kind"].get<std::string>();
    StreamEvent ev;
    if (j.contains("ts") && !j["ts"].is_null()) {
        if (!j["ts"].is_number()) throw ParseError("field 'ts' must be a number", line);
        ev.ts = j["ts"].get<double>();
    }
    if (kind == "add_time_point") {
        ev.kind = EventKind::add_time_point;
        ev.values = detail::finite_values(j, line);
        if (ev.values.empty()) throw ParseError("add_time_point needs at least one value", line);
    } else if (kind == "add_series") {
        ev.kind = EventKind::add_series;
        ev.id = detail::required_id(j, line);
        ev.values = detail::finite_values(j, line);
        if (ev.values.empty()) throw ParseError("add_series needs the full history in 'values'", line);
    } else if (kind == "remove_time_point") {
        ev.kind = EventKind::remove_time_point;
        if (!j.contains("index") || !j["index"].is_number_unsigned()) {
            throw ParseError("missing non-negative integer field 'index'", line);
        }
        ev.index = j["index"].get<std::size_t>();
    } else if (kind == "remove_series") {
        ev.kind = EventKind::remove_series;
        ev.id = detail::required_id(j, line);
    } else {
        throw ParseError("unknown kind '" + kind + "'", line);
    }
    return ev;
}

inline StreamEvent parse_event_jsonl(const std::string& text, std::size_t line = 0) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), line);
    }
    return event_from_json(j, line);
}

inline nlohmann::json event_to_json(const StreamEvent& ev) {
    nlohmann::json j{{"kind", to_string(ev.kind)}};
    switch (ev.kind) {
        case EventKind::add_time_point: j["values"] = ev.values; break;
        case EventKind::add_series:
            j["id"] = ev.id;
            j["values"] = ev.values;
            break;
        case EventKind::remove_time_point: j["index"] = ev.index; break;
        case EventKind::remove_series: j["id"] = ev.id; break;
    }
    if (ev.ts) j["ts"] = *ev.ts;
    return j;
}

/// Result of reading a JSON-lines stream: every nonblank line yields an event or an error.
struct EventLog {
    std::vector<StreamEvent> events;
    std::vector<ParseError> errors;
};

inline EventLog read_event_log(std::istream& in) {
    EventLog log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            log.events.push_back(parse_event_jsonl(line, line_no));
        } catch (const ParseError& e) {
            log.errors.push_back(e);
        }
    }
    return log;
}

}  // namespace msstream::ingest

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "canto/common.hpp"

namespace canto {

// A timed, pitched note. Onset and duration are in seconds, pitch is a MIDI
// note number, velocity a MIDI velocity.
struct NoteEvent {
    double onset = 0.0;
    int pitch = 0;
    double duration = 0.0;
    int velocity = 64;

    friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

// Events are kept sorted by (onset, pitch).
struct NoteSequence {
    std::string id;
    std::vector<NoteEvent> events;

    bool empty() const { return events.empty(); }
    std::size_t size() const { return events.size(); }

    // End of the last sounding note, 0 for an empty sequence.
    double end_time() const {
        double end = 0.0;
        for (const auto& e : events) end = std::max(end, e.onset + e.duration);
        return end;
    }

    friend bool operator==(const NoteSequence&, const NoteSequence&) = default;
};

class MalformedLine : public Error {
public:
    MalformedLine(int line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class PitchOutOfRange : public Error {
public:
    using Error::Error;
};

class NonPositiveFactor : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void validate_event(const NoteEvent& e, int line) {
    if (e.onset < 0.0) throw MalformedLine(line, "negative onset");
    if (!(e.duration > 0.0)) throw MalformedLine(line, "non-positive duration");
    if (e.pitch < 0 || e.pitch > 127) throw MalformedLine(line, "pitch out of range");
    if (e.velocity < 1 || e.velocity > 127) throw MalformedLine(line, "velocity out of range");
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline double parse_double_field(std::string_view field, int line) {
    field = trim(field);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw MalformedLine(line, "not a number: '" + std::string(field) + "'");
    return value;
}

inline int parse_int_field(std::string_view field, int line) {
    field = trim(field);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw MalformedLine(line, "not an integer: '" + std::string(field) + "'");
    return value;
}

// Shortest-exact is not needed; %.17g round-trips every double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void sort_events(NoteSequence& seq) {
    std::stable_sort(seq.events.begin(), seq.events.end(),
                     [](const NoteEvent& a, const NoteEvent& b) {
                         if (a.onset != b.onset) return a.onset < b.onset;
                         return a.pitch < b.pitch;
                     });
}

// Plain-text note format: one `onset,duration,pitch,velocity` record per
// line, `#` starts a comment, blank lines are skipped.
inline NoteSequence parse_note_csv(std::string_view text, std::string id = "") {
    NoteSequence seq;
    seq.id = std::move(id);
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = detail::trim(text.substr(pos, eol - pos));
        ++line_no;
        pos = eol + 1;
        if (line.empty() || line.front() == '#') continue;

        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string_view::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (fields.size() != 4)
            throw MalformedLine(line_no, "expected 4 fields, got " +
                                             std::to_string(fields.size()));
        NoteEvent e;
        e.onset = detail::parse_double_field(fields[0], line_no);
        e.duration = detail::parse_double_field(fields[1], line_no);
        e.pitch = detail::parse_int_field(fields[2], line_no);
        e.velocity = detail::parse_int_field(fields[3], line_no);
        detail::validate_event(e, line_no);
        seq.events.push_back(e);
    }
    sort_events(seq);
    return seq;
}

inline std::string serialize_note_csv(const NoteSequence& seq) {
    std::string out = "# onset,duration,pitch,velocity\n";
    for (const auto& e : seq.events) {
        out += detail::format_double(e.onset);
        out += ',';
        out += detail::format_double(e.duration);
        out += ',';
        out += std::to_string(e.pitch);
        out += ',';
        out += std::to_string(e.velocity);
        out += '\n';
    }
    return out;
}

inline NoteSequence transpose(const NoteSequence& seq, int semitones) {
    NoteSequence out = seq;
    for (auto& e : out.events) {
        const int p = e.pitch + semitones;
        if (p < 0 || p > 127)
            throw PitchOutOfRange("transpose by " + std::to_string(semitones) +
                                  " moves pitch " + std::to_string(e.pitch) +
                                  " out of range");
        e.pitch = p;
    }
    return out;
}

inline NoteSequence time_scale(const NoteSequence& seq, double factor) {
    if (!(factor > 0.0))
        throw NonPositiveFactor("time scale factor must be positive");
    NoteSequence out = seq;
    for (auto& e : out.events) {
        e.onset *= factor;
        e.duration *= factor;
    }
    return out;
}

}  // namespace canto

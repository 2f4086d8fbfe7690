#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "canto/notes.hpp"

namespace canto {

class BadHeader : public Error {
public:
    using Error::Error;
};

class TruncatedChunk : public Error {
public:
    using Error::Error;
};

class UnsupportedFormat : public Error {
public:
    explicit UnsupportedFormat(int format)
        : Error("unsupported SMF format " + std::to_string(format)), format_(format) {}
    int format() const { return format_; }

private:
    int format_;
};

struct MidiWarning {
    enum class Kind { dangling_note_on, zero_duration_note, unmatched_note_off };
    Kind kind;
    int pitch;
};

namespace detail {

struct MidiTimedEvent {
    std::int64_t tick;
    int order;        // position in the merged stream, for stable sorting
    bool is_note_on;  // false -> note off
    int pitch;
    int velocity;
};

struct TempoChange {
    std::int64_t tick;
    double usec_per_quarter;
};

class MidiCursor {
public:
    MidiCursor(std::span<const std::uint8_t> data, std::size_t begin, std::size_t end)
        : data_(data), pos_(begin), end_(end) {}

    bool at_end() const { return pos_ >= end_; }

    std::uint8_t byte() {
        if (pos_ >= end_) throw TruncatedChunk("track data ends mid-event");
        return data_[pos_++];
    }

    std::uint8_t peek() const {
        if (pos_ >= end_) throw TruncatedChunk("track data ends mid-event");
        return data_[pos_];
    }

    void skip(std::uint32_t n) {
        if (pos_ + n > end_) throw TruncatedChunk("track data ends mid-event");
        pos_ += n;
    }

    std::uint32_t vlq() {
        std::uint32_t value = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = byte();
            value = (value << 7) | (b & 0x7f);
            if ((b & 0x80) == 0) return value;
        }
        throw TruncatedChunk("variable-length quantity too long");
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_;
    std::size_t end_;
};

// Converts a tick position to seconds under a sorted tempo map.
class TickClock {
public:
    TickClock(std::vector<TempoChange> tempi, int ticks_per_quarter)
        : tempi_(std::move(tempi)), division_(ticks_per_quarter) {}

    double seconds(std::int64_t tick) const {
        double secs = 0.0;
        std::int64_t at = 0;
        double usec_per_quarter = 500000.0;  // 120 BPM until the first tempo event
        for (const auto& t : tempi_) {
            if (t.tick >= tick) break;
            secs += static_cast<double>(t.tick - at) * usec_per_quarter /
                    (division_ * 1e6);
            at = t.tick;
            usec_per_quarter = t.usec_per_quarter;
        }
        secs += static_cast<double>(tick - at) * usec_per_quarter / (division_ * 1e6);
        return secs;
    }

private:
    std::vector<TempoChange> tempi_;
    int division_;
};

}  // namespace detail

// Parses a Standard MIDI File (format 0 or 1) into a NoteSequence. Channel
// and program data are discarded; only note timing, pitch and velocity
// survive. A note-on with velocity 0 acts as a note-off. A second note-on on
// an already-sounding pitch closes the first note at the new onset. Notes
// still open at end-of-track are closed there and reported as warnings.
inline NoteSequence parse_midi(std::span<const std::uint8_t> bytes,
                               std::vector<MidiWarning>* warnings = nullptr,
                               std::string id = "") {
    using detail::MidiTimedEvent;

    if (bytes.size() < 14) throw BadHeader("file shorter than a MIDI header");
    if (!(bytes[0] == 'M' && bytes[1] == 'T' && bytes[2] == 'h' && bytes[3] == 'd'))
        throw BadHeader("missing MThd magic");
    const auto be16 = [&](std::size_t i) {
        return (static_cast<int>(bytes[i]) << 8) | bytes[i + 1];
    };
    const auto be32 = [&](std::size_t i) {
        return (static_cast<std::uint32_t>(bytes[i]) << 24) |
               (static_cast<std::uint32_t>(bytes[i + 1]) << 16) |
               (static_cast<std::uint32_t>(bytes[i + 2]) << 8) |
               static_cast<std::uint32_t>(bytes[i + 3]);
    };
    const std::uint32_t header_len = be32(4);
    if (header_len < 6) throw BadHeader("MThd length below 6");
    const int format = be16(8);
    const int num_tracks = be16(10);
    const int division = be16(12);
    if (format != 0 && format != 1) throw UnsupportedFormat(format);
    if (division & 0x8000) throw BadHeader("SMPTE time division not supported");
    if (division == 0) throw BadHeader("zero ticks per quarter");

    std::vector<MidiTimedEvent> events;
    std::vector<detail::TempoChange> tempi;
    std::int64_t max_tick = 0;
    int order = 0;

    std::size_t pos = 8 + header_len;
    for (int track = 0; track < num_tracks; ++track) {
        if (pos + 8 > bytes.size()) throw TruncatedChunk("missing MTrk chunk");
        if (!(bytes[pos] == 'M' && bytes[pos + 1] == 'T' && bytes[pos + 2] == 'r' &&
              bytes[pos + 3] == 'k'))
            throw TruncatedChunk("expected MTrk magic");
        const std::uint32_t track_len = be32(pos + 4);
        const std::size_t track_begin = pos + 8;
        if (track_begin + track_len > bytes.size())
            throw TruncatedChunk("track extends past end of file");
        pos = track_begin + track_len;

        detail::MidiCursor cur(bytes, track_begin, track_begin + track_len);
        std::int64_t tick = 0;
        std::uint8_t running_status = 0;
        while (!cur.at_end()) {
            tick += cur.vlq();
            std::uint8_t status = cur.peek();
            if (status & 0x80) {
                cur.byte();
                if (status < 0xf0) running_status = status;
            } else {
                if (running_status == 0)
                    throw TruncatedChunk("data byte without running status");
                status = running_status;
            }

            if (status == 0xff) {  // meta event
                const std::uint8_t type = cur.byte();
                const std::uint32_t len = cur.vlq();
                if (type == 0x51) {
                    if (len != 3) throw TruncatedChunk("bad tempo meta length");
                    const double usec = (static_cast<double>(cur.byte()) * 65536.0) +
                                        (static_cast<double>(cur.byte()) * 256.0);
                    tempi.push_back({tick, usec + cur.byte()});
                } else {
                    cur.skip(len);
                    if (type == 0x2f) break;  // end of track
                }
            } else if (status == 0xf0 || status == 0xf7) {  // sysex
                cur.skip(cur.vlq());
            } else {
                const int kind = status >> 4;
                switch (kind) {
                    case 0x8: {  // note off
                        const int pitch = cur.byte() & 0x7f;
                        cur.byte();
                        events.push_back({tick, order++, false, pitch, 0});
                        break;
                    }
                    case 0x9: {  // note on (velocity 0 acts as note off)
                        const int pitch = cur.byte() & 0x7f;
                        const int vel = cur.byte() & 0x7f;
                        events.push_back({tick, order++, vel > 0, pitch, vel});
                        break;
                    }
                    case 0xa:  // poly aftertouch
                    case 0xb:  // controller
                    case 0xe:  // pitch bend
                        cur.skip(2);
                        break;
                    case 0xc:  // program change
                    case 0xd:  // channel aftertouch
                        cur.skip(1);
                        break;
                    default:
                        throw TruncatedChunk("unexpected status byte");
                }
            }
        }
        max_tick = std::max(max_tick, tick);
    }

    std::stable_sort(tempi.begin(), tempi.end(),
                     [](const auto& a, const auto& b) { return a.tick < b.tick; });
    const detail::TickClock clock(tempi, division);

    // Merge-order pairing: ticks ascending, note-offs before note-ons at the
    // same tick so a same-tick off+on re-triggers cleanly.
    std::stable_sort(events.begin(), events.end(),
                     [](const MidiTimedEvent& a, const MidiTimedEvent& b) {
                         if (a.tick != b.tick) return a.tick < b.tick;
                         if (a.is_note_on != b.is_note_on) return !a.is_note_on;
                         return a.order < b.order;
                     });

    const auto warn = [&](MidiWarning::Kind kind, int pitch) {
        if (warnings) warnings->push_back({kind, pitch});
    };

    NoteSequence seq;
    seq.id = std::move(id);
    struct OpenNote {
        std::int64_t tick;
        int velocity;
    };
    std::map<int, OpenNote> open;
    const auto close_note = [&](int pitch, const OpenNote& note, std::int64_t end_tick) {
        const double onset = clock.seconds(note.tick);
        const double duration = clock.seconds(end_tick) - onset;
        if (duration > 0.0) {
            seq.events.push_back({onset, pitch, duration, std::max(1, note.velocity)});
        } else {
            warn(MidiWarning::Kind::zero_duration_note, pitch);
        }
    };

    std::vector<bool> consumed(events.size(), false);
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (consumed[i]) continue;
        const auto& ev = events[i];
        const auto it = open.find(ev.pitch);
        if (ev.is_note_on) {
            if (it != open.end()) {
                close_note(ev.pitch, it->second, ev.tick);
                open.erase(it);
            }
            open[ev.pitch] = {ev.tick, ev.velocity};
        } else if (it != open.end()) {
            close_note(ev.pitch, it->second, ev.tick);
            open.erase(it);
        } else {
            // A same-tick on/off pair is a zero-duration note, not an
            // unmatched off plus a dangling on.
            bool paired = false;
            for (std::size_t j = i + 1;
                 j < events.size() && events[j].tick == ev.tick; ++j) {
                if (!consumed[j] && events[j].is_note_on &&
                    events[j].pitch == ev.pitch) {
                    consumed[j] = true;
                    paired = true;
                    break;
                }
            }
            warn(paired ? MidiWarning::Kind::zero_duration_note
                        : MidiWarning::Kind::unmatched_note_off,
                 ev.pitch);
        }
    }
    for (const auto& [pitch, note] : open) {
        warn(MidiWarning::Kind::dangling_note_on, pitch);
        close_note(pitch, note, max_tick);
    }

    sort_events(seq);
    return seq;
}

}  // namespace canto

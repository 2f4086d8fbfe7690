#pragma once

#include <deque>
#include <functional>
#include <future>
#include <limits>

#include "canto/chroma.hpp"
#include "canto/fingerprint.hpp"
#include "canto/matching.hpp"

namespace canto {

class PositionOutOfRange : public Error {
public:
    using Error::Error;
};

class NotInitialized : public Error {
public:
    using Error::Error;
};

// Online alignment state: a bounded window of accumulated costs, rebased to
// zero each step so only per-step increments matter.
struct TrackerState {
    std::string doc_id;
    std::size_t position = 0;
    std::size_t window_start = 0;
    std::vector<double> frontier;
    std::deque<double> recent_costs;  // per-step increments, newest last
    double confidence = 1.0;
};

namespace detail {

inline constexpr int kConfidenceWindow = 20;

}  // namespace detail

inline TrackerState seed_tracker(std::string doc_id, std::size_t position) {
    TrackerState state;
    state.doc_id = std::move(doc_id);
    state.position = position;
    return state;
}

// Extends the accumulated-cost window by one input frame over document
// frames [position-1, position+width], with the offline matcher's cost and
// step set. Position follows the window argmin but never moves backwards.
inline TrackerState tracker_step(const TrackerState& state,
                                 const ChromaVector& frame,
                                 const Chromagram& doc, int width = 50) {
    if (width < 3) throw Error("width must be >= 3");
    if (doc.empty() || state.position >= doc.size())
        throw PositionOutOfRange("position " + std::to_string(state.position) +
                                 " in document of " +
                                 std::to_string(doc.size()) + " frames");

    constexpr double kInf = std::numeric_limits<double>::infinity();
    const std::size_t lo = state.position == 0 ? 0 : state.position - 1;
    const std::size_t hi =
        std::min(doc.size() - 1, state.position + static_cast<std::size_t>(width));

    const auto prev = [&](std::size_t j) {
        if (state.frontier.empty()) return 0.0;  // fresh seed: row of local costs
        if (j < state.window_start) return kInf;
        const std::size_t i = j - state.window_start;
        return i < state.frontier.size() ? state.frontier[i] : kInf;
    };

    TrackerState next = state;
    next.window_start = lo;
    next.frontier.assign(hi - lo + 1, kInf);
    for (std::size_t j = lo; j <= hi; ++j) {
        double best = prev(j);                                      // repeat frame
        if (j > 0) best = std::min(best, prev(j - 1));              // advance
        if (j > lo) best = std::min(best, next.frontier[j - 1 - lo]);  // skip
        if (best == kInf) continue;
        next.frontier[j - lo] = cosine_cost(frame, doc.frames[j]) + best;
    }

    double low = kInf;
    std::size_t at = lo;
    for (std::size_t i = 0; i < next.frontier.size(); ++i)
        if (next.frontier[i] < low) {
            low = next.frontier[i];
            at = lo + i;
        }
    for (double& v : next.frontier)
        if (v != kInf) v -= low;

    next.position = std::max(state.position, at);
    next.recent_costs.push_back(low);
    if (next.recent_costs.size() > detail::kConfidenceWindow)
        next.recent_costs.pop_front();
    double mean = 0.0;
    for (const double c : next.recent_costs) mean += c;
    mean /= static_cast<double>(next.recent_costs.size());
    next.confidence = std::min(1.0, std::max(0.0, 1.0 - mean / 2.0));
    return next;
}

enum class CompanionStatus { identifying, tracking, lost };

inline std::string_view to_string(CompanionStatus status) {
    switch (status) {
        case CompanionStatus::identifying: return "identifying";
        case CompanionStatus::tracking: return "tracking";
        case CompanionStatus::lost: return "lost";
    }
    return "identifying";
}

struct CompanionHypothesis {
    std::string piece_id;
    double score_time = 0.0;
    double tempo_ratio = 1.0;
    CompanionStatus status = CompanionStatus::identifying;
    double confidence = 0.0;
};

struct CompanionConfig {
    double buffer_seconds = 8.0;
    double eval_interval = 1.0;
    double vote_margin = 1.5;
    int margin_evals = 3;
    double min_confidence = 0.4;
    int min_votes = 5;  // margin stand-in when there is no runner-up
    int tracker_width = 50;
    double derived_frame_rate = 10.0;
    bool derive_frames = true;
};

struct IdentifyJob {
    NoteSequence query;        // buffer snapshot, clock zeroed at first onset
    double first_onset = 0.0;  // stream time of query time zero
};

struct IdentifyReport {
    std::vector<PieceHypothesis> hypotheses;
    double first_onset = 0.0;
};

using IdentifyExecutor = std::function<std::future<IdentifyReport>(IdentifyJob)>;

inline IdentifyReport run_identify(const FingerprintIndex& index, const IdentifyJob& job) {
    IdentifyReport report;
    report.first_onset = job.first_onset;
    try {
        report.hypotheses = query_index(index, job.query);
    } catch (const Error&) {
        // too little material buffered yet; report stays empty
    }
    return report;
}

// Couples the global identifier with the local tracker. Identification jobs
// go through an injectable executor and come back as immutable reports; the
// driver blocks on the report at the boundary that dispatched it, so the
// hypothesis trace is independent of where the executor runs the job.
class Companion {
public:
    Companion(FingerprintIndex index, std::map<std::string, Chromagram> scores,
              CompanionConfig config = {}, IdentifyExecutor executor = {})
        : index_(std::move(index)),
          scores_(std::move(scores)),
          config_(std::move(config)),
          executor_(std::move(executor)),
          next_eval_(config_.eval_interval) {
        if (config_.eval_interval <= 0.0 || config_.buffer_seconds <= 0.0 ||
            config_.derived_frame_rate <= 0.0)
            throw Error("companion intervals must be positive");
    }

    Companion(const Companion&) = delete;
    Companion& operator=(const Companion&) = delete;

    // The event's onset is its stream timestamp.
    CompanionHypothesis process_event(const NoteEvent& event) {
        require_initialized();
        advance_to(event.onset);
        buffer_.push_back(event);
        prune(event.onset);
        return hypothesis_;
    }

    CompanionHypothesis process_frame(double stream_time, const ChromaVector& frame) {
        require_initialized();
        advance_to(stream_time);
        feed_frame(normalize_frame(frame));
        return hypothesis_;
    }

    const CompanionHypothesis& hypothesis() const { return hypothesis_; }
    const TrackerState& tracker() const { return tracker_; }

private:
    void require_initialized() const {
        if (index_.piece_ids.empty() || scores_.empty())
            throw NotInitialized("companion needs an index and score chromagrams");
    }

    void prune(double now) {
        while (!buffer_.empty() && buffer_.front().onset < now - config_.buffer_seconds)
            buffer_.pop_front();
    }

    // Fires every derived frame and evaluation boundary due before `t`,
    // oldest first; a frame tied with a boundary covers earlier input, so it
    // goes first.
    void advance_to(double t) {
        constexpr double kInf = std::numeric_limits<double>::infinity();
        for (;;) {
            const double frame_due =
                config_.derive_frames
                    ? static_cast<double>(derived_ + 1) / config_.derived_frame_rate
                    : kInf;
            if (frame_due > t && next_eval_ > t) break;
            if (frame_due <= next_eval_) {
                feed_frame(derived_frame());
                ++derived_;
            } else {
                run_eval(next_eval_);
                next_eval_ += config_.eval_interval;
            }
        }
    }

    ChromaVector derived_frame() const {
        const double rate = config_.derived_frame_rate;
        const double begin = static_cast<double>(derived_) / rate;
        const double end = static_cast<double>(derived_ + 1) / rate;
        ChromaVector v{};
        for (const NoteEvent& e : buffer_) {
            const double overlap =
                std::min(end, e.onset + e.duration) - std::max(begin, e.onset);
            if (overlap > 0.0) v[static_cast<std::size_t>(e.pitch % 12)] += overlap * rate;
        }
        return normalize_frame(v);
    }

    void feed_frame(const ChromaVector& frame) {
        if (hypothesis_.status != CompanionStatus::tracking) return;
        const Chromagram& doc = scores_.at(tracker_.doc_id);
        tracker_ = tracker_step(tracker_, frame, doc, config_.tracker_width);
        hypothesis_.score_time =
            static_cast<double>(tracker_.position) / doc.frame_rate;
        hypothesis_.confidence = tracker_.confidence;
    }

    void run_eval(double now) {
        IdentifyJob job;
        job.query.id = "buffer";
        if (!buffer_.empty()) {
            job.first_onset = buffer_.front().onset;
            for (const NoteEvent& e : buffer_) {
                NoteEvent out = e;
                out.onset -= job.first_onset;
                job.query.events.push_back(out);
            }
            sort_events(job.query);
        }
        IdentifyReport report;
        if (executor_)
            report = executor_(std::move(job)).get();
        else
            report = run_identify(index_, job);
        apply_report(report, now);
    }

    void apply_report(const IdentifyReport& report, double now) {
        const auto& hyps = report.hypotheses;
        bool margin_ok = false;
        if (!hyps.empty()) {
            margin_ok = hyps.size() >= 2
                            ? static_cast<double>(hyps[0].votes) >=
                                  config_.vote_margin * hyps[1].votes
                            : hyps[0].votes >= config_.min_votes;
            margin_ok = margin_ok && scores_.count(hyps[0].piece_id) > 0;
        }

        switch (hypothesis_.status) {
            case CompanionStatus::identifying:
            case CompanionStatus::lost:
                if (margin_ok) seed(hyps[0], report.first_onset, now);
                break;
            case CompanionStatus::tracking:
                if (margin_ok && hyps[0].piece_id != tracker_.doc_id)
                    ++disagree_;
                else
                    disagree_ = 0;
                if (disagree_ >= config_.margin_evals) {
                    seed(hyps[0], report.first_onset, now);
                } else if (tracker_.confidence < config_.min_confidence) {
                    if (margin_ok)
                        seed(hyps[0], report.first_onset, now);
                    else
                        hypothesis_.status = CompanionStatus::lost;
                }
                break;
        }
    }

    void seed(const PieceHypothesis& top, double first_onset, double now) {
        const Chromagram& doc = scores_.at(top.piece_id);
        const double seconds =
            top.score_time + (now - first_onset) / top.tempo_ratio;
        const auto frame = static_cast<std::size_t>(std::min(
            static_cast<long>(doc.size()) - 1,
            std::max(0L, std::lround(seconds * doc.frame_rate))));
        tracker_ = seed_tracker(top.piece_id, frame);
        disagree_ = 0;
        hypothesis_.piece_id = top.piece_id;
        hypothesis_.score_time = static_cast<double>(frame) / doc.frame_rate;
        hypothesis_.tempo_ratio = top.tempo_ratio;
        hypothesis_.status = CompanionStatus::tracking;
        hypothesis_.confidence = tracker_.confidence;
    }

    FingerprintIndex index_;
    std::map<std::string, Chromagram> scores_;
    CompanionConfig config_;
    IdentifyExecutor executor_;
    std::deque<NoteEvent> buffer_;
    TrackerState tracker_;
    CompanionHypothesis hypothesis_;
    double next_eval_ = 0.0;
    long derived_ = 0;
    int disagree_ = 0;
};

// One `E,onset,duration,pitch,velocity` note or `F,v0,...,v11` chroma frame
// per line. Frames carry no timestamp; the i-th frame closes at (i+1)/rate.
struct StreamRecord {
    double time = 0.0;
    bool is_frame = false;
    NoteEvent event;
    ChromaVector frame{};
};

inline std::vector<StreamRecord> parse_stream(const std::string& text,
                                              double frame_rate = 10.0) {
    if (frame_rate <= 0.0) throw Error("frame_rate must be positive");
    std::vector<StreamRecord> records;
    int line_no = 0;
    long frames_seen = 0;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        const std::size_t end = std::min(text.find('\n', begin), text.size());
        ++line_no;
        const auto line = detail::trim(std::string_view(text).substr(begin, end - begin));
        begin = end + 1;
        if (line.empty() || line.front() == '#') continue;

        std::vector<std::string_view> fields;
        std::size_t at = 0;
        while (at <= line.size()) {
            const std::size_t comma = std::min(line.find(',', at), line.size());
            fields.push_back(detail::trim(line.substr(at, comma - at)));
            at = comma + 1;
        }

        StreamRecord rec;
        if (fields.front() == "E") {
            if (fields.size() != 5)
                throw MalformedLine(line_no, "expected E,onset,duration,pitch,velocity");
            rec.event.onset = detail::parse_double_field(fields[1], line_no);
            rec.event.duration = detail::parse_double_field(fields[2], line_no);
            rec.event.pitch = detail::parse_int_field(fields[3], line_no);
            rec.event.velocity = detail::parse_int_field(fields[4], line_no);
            detail::validate_event(rec.event, line_no);
            rec.time = rec.event.onset;
        } else if (fields.front() == "F") {
            if (fields.size() != 13)
                throw MalformedLine(line_no, "expected F and 12 chroma values");
            rec.is_frame = true;
            for (std::size_t i = 0; i < 12; ++i)
                rec.frame[i] = detail::parse_double_field(fields[i + 1], line_no);
            rec.time = static_cast<double>(++frames_seen) / frame_rate;
        } else {
            throw MalformedLine(line_no, "record must start with E or F");
        }
        records.push_back(rec);
    }
    return records;
}

struct TraceRow {
    double stream_time = 0.0;
    CompanionHypothesis hypothesis;
};

inline std::string serialize_trace_csv(const std::vector<TraceRow>& rows) {
    std::string out = "stream_time,status,piece_id,score_time,tempo_ratio,confidence\n";
    for (const TraceRow& r : rows) {
        out += detail::format_double(r.stream_time);
        out += ',';
        out += to_string(r.hypothesis.status);
        out += ',';
        out += r.hypothesis.piece_id;
        out += ',';
        out += detail::format_double(r.hypothesis.score_time);
        out += ',';
        out += detail::format_double(r.hypothesis.tempo_ratio);
        out += ',';
        out += detail::format_double(r.hypothesis.confidence);
        out += '\n';
    }
    return out;
}

}  // namespace canto

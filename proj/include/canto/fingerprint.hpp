#pragma once

#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "canto/notes.hpp"

namespace canto {

class TooFewEvents : public Error {
public:
    using Error::Error;
};

class EmptyIndex : public Error {
public:
    using Error::Error;
};

// Tempo- and transposition-invariant triple descriptor: pitch deltas between
// three events plus the ratio of their onset gaps.
struct SymbolicFingerprint {
    int dp12 = 0;
    int dp23 = 0;
    double tau = 1.0;

    friend bool operator==(const SymbolicFingerprint&,
                           const SymbolicFingerprint&) = default;
};

struct LocatedFingerprint {
    SymbolicFingerprint fp;
    double anchor_time = 0.0;  // onset of the first event
    double dt12 = 0.0;         // onset gap between the first two events
};

struct ExtractionConstraints {
    double d_min = 0.05;
    double d_max = 2.0;
    int fanout = 5;
};

struct Posting {
    std::uint32_t piece = 0;  // index into FingerprintIndex::piece_ids
    double anchor_time = 0.0;
    double dt12 = 0.0;
};

struct FingerprintIndex {
    ExtractionConstraints constraints;
    int bins_per_octave = 8;
    std::vector<std::string> piece_ids;
    std::map<std::uint32_t, std::vector<Posting>> postings;

    std::size_t posting_count() const {
        std::size_t n = 0;
        for (const auto& [key, list] : postings) n += list.size();
        return n;
    }
};

struct PieceHypothesis {
    std::string piece_id;
    double score_time = 0.0;
    double tempo_ratio = 1.0;
    int votes = 0;
};

namespace detail {

inline void validate_constraints(const ExtractionConstraints& c) {
    if (!(c.d_min > 0.0) || !(c.d_max > c.d_min))
        throw Error("need 0 < d_min < d_max");
    if (c.fanout < 1) throw Error("fanout must be >= 1");
}

inline void require_extractable(const NoteSequence& seq) {
    if (seq.size() < 3)
        throw TooFewEvents("need at least 3 events, got " +
                           std::to_string(seq.size()));
    int distinct = 1;
    for (std::size_t i = 1; i < seq.size() && distinct < 3; ++i)
        if (seq.events[i].onset != seq.events[i - 1].onset) ++distinct;
    if (distinct < 3)
        throw TooFewEvents("need at least 3 distinct onset times");
}

}  // namespace detail

// For each event, successors are the first `fanout` events (by onset, ties by
// pitch) whose onset gap lies in [d_min, d_max], applied twice to form
// triples.
inline std::vector<LocatedFingerprint> extract_fingerprints(
    const NoteSequence& seq, const ExtractionConstraints& c) {
    detail::validate_constraints(c);
    detail::require_extractable(seq);

    const auto& ev = seq.events;
    const auto successors = [&](std::size_t i) {
        std::vector<std::size_t> out;
        for (std::size_t j = i + 1;
             j < ev.size() && static_cast<int>(out.size()) < c.fanout; ++j) {
            const double gap = ev[j].onset - ev[i].onset;
            if (gap > c.d_max) break;
            if (gap >= c.d_min) out.push_back(j);
        }
        return out;
    };

    std::vector<LocatedFingerprint> fps;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        for (const std::size_t j : successors(i)) {
            for (const std::size_t k : successors(j)) {
                LocatedFingerprint lf;
                lf.fp.dp12 = ev[j].pitch - ev[i].pitch;
                lf.fp.dp23 = ev[k].pitch - ev[j].pitch;
                lf.fp.tau = (ev[k].onset - ev[j].onset) / (ev[j].onset - ev[i].onset);
                lf.anchor_time = ev[i].onset;
                lf.dt12 = ev[j].onset - ev[i].onset;
                fps.push_back(lf);
            }
        }
    }
    return fps;
}

// 24-bit key: pitch deltas biased into bytes, tau quantized into log2 buckets
// clamped to three octaves either side of 1.
inline std::uint32_t hash_fingerprint(const SymbolicFingerprint& fp,
                                      int bins_per_octave = 8) {
    if (bins_per_octave < 1) throw Error("bins_per_octave must be >= 1");
    const double clamped = std::min(8.0, std::max(0.125, fp.tau));
    const auto bucket = static_cast<std::uint32_t>(
        std::lround(std::log2(clamped) * bins_per_octave) + 3 * bins_per_octave);
    return (static_cast<std::uint32_t>(fp.dp12 + 128) << 16) |
           (static_cast<std::uint32_t>(fp.dp23 + 128) << 8) | bucket;
}

inline int tau_bucket_count(int bins_per_octave) { return 6 * bins_per_octave + 1; }

struct SkippedPiece {
    std::string piece_id;
    std::string reason;
};

inline FingerprintIndex build_index(const std::vector<NoteSequence>& corpus,
                                    const ExtractionConstraints& c = {},
                                    int bins_per_octave = 8,
                                    std::vector<SkippedPiece>* skipped = nullptr) {
    detail::validate_constraints(c);
    FingerprintIndex index;
    index.constraints = c;
    index.bins_per_octave = bins_per_octave;
    for (const auto& seq : corpus) {
        std::vector<LocatedFingerprint> fps;
        try {
            fps = extract_fingerprints(seq, c);
        } catch (const TooFewEvents& e) {
            if (skipped) skipped->push_back({seq.id, e.what()});
            continue;
        }
        const auto piece = static_cast<std::uint32_t>(index.piece_ids.size());
        index.piece_ids.push_back(seq.id);
        for (const auto& lf : fps)
            index.postings[hash_fingerprint(lf.fp, bins_per_octave)].push_back(
                {piece, lf.anchor_time, lf.dt12});
    }
    for (auto& [key, list] : index.postings)
        std::sort(list.begin(), list.end(), [&](const Posting& a, const Posting& b) {
            if (index.piece_ids[a.piece] != index.piece_ids[b.piece])
                return index.piece_ids[a.piece] < index.piece_ids[b.piece];
            if (a.anchor_time != b.anchor_time) return a.anchor_time < b.anchor_time;
            return a.dt12 < b.dt12;
        });
    return index;
}

// Histogram voting: every matched posting votes for (piece, score-clock
// offset of query time zero); the winner is the piece whose best 1 s offset
// bin (merged with its two neighbours) collects the most votes.
inline std::vector<PieceHypothesis> query_index(const FingerprintIndex& index,
                                                const NoteSequence& query,
                                                int tau_tolerance_bins = 1) {
    if (index.piece_ids.empty() || index.postings.empty())
        throw EmptyIndex("index holds no fingerprints");

    // Doubled d_max so slow performances still land inside the window.
    ExtractionConstraints qc = index.constraints;
    qc.d_max *= 2.0;
    const auto fps = extract_fingerprints(query, qc);

    struct Vote {
        double offset;
        double ratio;
    };
    std::map<std::uint32_t, std::vector<Vote>> votes_by_piece;
    const int buckets = tau_bucket_count(index.bins_per_octave);
    for (const auto& lf : fps) {
        const auto key = hash_fingerprint(lf.fp, index.bins_per_octave);
        const int bucket = static_cast<int>(key & 0xff);
        for (int db = -tau_tolerance_bins; db <= tau_tolerance_bins; ++db) {
            const int b = bucket + db;
            if (b < 0 || b >= buckets) continue;
            const auto it = index.postings.find((key & 0xffffff00u) |
                                                static_cast<std::uint32_t>(b));
            if (it == index.postings.end()) continue;
            for (const Posting& p : it->second) {
                const double r = lf.dt12 / p.dt12;
                votes_by_piece[p.piece].push_back(
                    {p.anchor_time - lf.anchor_time / r, r});
            }
        }
    }

    std::vector<PieceHypothesis> hypotheses;
    for (auto& [piece, votes] : votes_by_piece) {
        std::map<long, int> bins;
        for (const Vote& v : votes)
            ++bins[static_cast<long>(std::floor(v.offset))];
        long best_bin = 0;
        int best_count = -1;
        for (const auto& [bin, count] : bins) {
            int merged = count;
            if (const auto it = bins.find(bin - 1); it != bins.end())
                merged += it->second;
            if (const auto it = bins.find(bin + 1); it != bins.end())
                merged += it->second;
            if (merged > best_count) {
                best_count = merged;
                best_bin = bin;
            }
        }

        std::vector<double> ratios;
        double offset_sum = 0.0;
        int in_bin = 0;
        for (const Vote& v : votes) {
            const auto bin = static_cast<long>(std::floor(v.offset));
            if (bin < best_bin - 1 || bin > best_bin + 1) continue;
            ratios.push_back(v.ratio);
            offset_sum += v.offset;
            ++in_bin;
        }
        std::sort(ratios.begin(), ratios.end());
        PieceHypothesis hyp;
        hyp.piece_id = index.piece_ids[piece];
        hyp.votes = in_bin;
        hyp.score_time = offset_sum / in_bin;
        hyp.tempo_ratio = ratios.size() % 2 == 1
                              ? ratios[ratios.size() / 2]
                              : 0.5 * (ratios[ratios.size() / 2 - 1] +
                                       ratios[ratios.size() / 2]);
        hypotheses.push_back(hyp);
    }

    std::sort(hypotheses.begin(), hypotheses.end(),
              [](const PieceHypothesis& a, const PieceHypothesis& b) {
                  if (a.votes != b.votes) return a.votes > b.votes;
                  return a.piece_id < b.piece_id;
              });
    return hypotheses;
}

// Binary layout: magic, constraints, piece table, then per-key posting lists
// with keys ascending (little-endian fixed-width records).
inline std::vector<std::uint8_t> serialize_index(const FingerprintIndex& index) {
    ByteWriter w;
    w.raw("SFPI1");
    w.f64(index.constraints.d_min);
    w.f64(index.constraints.d_max);
    w.u32(static_cast<std::uint32_t>(index.constraints.fanout));
    w.u32(static_cast<std::uint32_t>(index.bins_per_octave));
    w.u32(static_cast<std::uint32_t>(index.piece_ids.size()));
    for (const auto& id : index.piece_ids) w.str(id);
    w.u32(static_cast<std::uint32_t>(index.postings.size()));
    for (const auto& [key, list] : index.postings) {
        w.u32(key);
        w.u32(static_cast<std::uint32_t>(list.size()));
        for (const Posting& p : list) {
            w.u32(p.piece);
            w.f64(p.anchor_time);
            w.f64(p.dt12);
        }
    }
    return w.bytes();
}

inline FingerprintIndex parse_index(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.raw(5) != "SFPI1") throw Error("not a fingerprint index file");
    FingerprintIndex index;
    index.constraints.d_min = r.f64();
    index.constraints.d_max = r.f64();
    index.constraints.fanout = static_cast<int>(r.u32());
    index.bins_per_octave = static_cast<int>(r.u32());
    const std::uint32_t pieces = r.u32();
    for (std::uint32_t i = 0; i < pieces; ++i) index.piece_ids.push_back(r.str());
    const std::uint32_t keys = r.u32();
    for (std::uint32_t i = 0; i < keys; ++i) {
        const std::uint32_t key = r.u32();
        const std::uint32_t count = r.u32();
        auto& list = index.postings[key];
        list.reserve(count);
        for (std::uint32_t j = 0; j < count; ++j) {
            Posting p;
            p.piece = r.u32();
            if (p.piece >= pieces) throw Error("posting references unknown piece");
            p.anchor_time = r.f64();
            p.dt12 = r.f64();
            list.push_back(p);
        }
    }
    if (!r.at_end()) throw Error("trailing bytes after index");
    return index;
}

inline void save_index(const std::string& path, const FingerprintIndex& index) {
    write_binary_file(path, serialize_index(index));
}

inline FingerprintIndex load_index(const std::string& path) {
    const auto bytes = read_binary_file(path);
    return parse_index(bytes);
}

// Human-readable dump of the same content, for debugging.
inline nlohmann::json index_to_json(const FingerprintIndex& index) {
    nlohmann::json j;
    j["format"] = "SFPI1";
    j["constraints"] = {{"d_min", index.constraints.d_min},
                        {"d_max", index.constraints.d_max},
                        {"fanout", index.constraints.fanout}};
    j["bins_per_octave"] = index.bins_per_octave;
    j["pieces"] = index.piece_ids;
    auto& keys = j["postings"] = nlohmann::json::object();
    for (const auto& [key, list] : index.postings) {
        auto& entries = keys[std::to_string(key)] = nlohmann::json::array();
        for (const Posting& p : list)
            entries.push_back({{"piece", index.piece_ids[p.piece]},
                               {"anchor_time", p.anchor_time},
                               {"dt12", p.dt12}});
    }
    return j;
}

}  // namespace canto

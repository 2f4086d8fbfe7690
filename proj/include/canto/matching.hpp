#pragma once

#include <limits>
#include <optional>

#include "canto/chroma.hpp"

namespace canto {

class EmptyInput : public Error {
public:
    using Error::Error;
};

class QueryTooShort : public Error {
public:
    using Error::Error;
};

struct MatchingCurve {
    std::vector<double> values;
    std::size_t query_length = 0;
};

struct RankedMatch {
    std::string doc_id;
    std::size_t start_frame = 0;
    std::size_t end_frame = 0;
    double cost = 0.0;
    int transposition = 0;
};

struct SkippedDoc {
    std::string doc_id;
    std::string reason;
};

// Cosine cost on unit vectors, clamped so identical frames cost exactly 0.
inline double cosine_cost(const ChromaVector& a, const ChromaVector& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < 12; ++i) dot += a[i] * b[i];
    return dot >= 1.0 ? 0.0 : 1.0 - dot;
}

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Full accumulated-cost table for the subsequence alignment: row 0 lets the
// query start at any document frame, steps are {(1,1),(1,0),(0,1)}.
inline std::vector<double> dtw_table(const Chromagram& query,
                                     const Chromagram& doc) {
    const std::size_t n = query.size();
    const std::size_t m = doc.size();
    std::vector<double> d(n * m);
    for (std::size_t j = 0; j < m; ++j)
        d[j] = cosine_cost(query.frames[0], doc.frames[j]);
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double best = d[(i - 1) * m + j];  // repeat document frame
            if (j > 0) {
                best = std::min(best, d[(i - 1) * m + j - 1]);  // diagonal
                best = std::min(best, d[i * m + j - 1]);        // repeat query frame
            }
            d[i * m + j] = cosine_cost(query.frames[i], doc.frames[j]) + best;
        }
    }
    return d;
}

// Start frame of the best alignment ending at end_frame, recovered by
// walking predecessors (diagonal preferred, then query advance, then
// document advance).
inline std::size_t backtrack_start(const std::vector<double>& d, std::size_t n,
                                   std::size_t m, std::size_t end_frame) {
    std::size_t i = n - 1;
    std::size_t j = end_frame;
    while (i > 0) {
        const double diag = j > 0 ? d[(i - 1) * m + j - 1] : kInf;
        const double up = d[(i - 1) * m + j];
        const double left = j > 0 ? d[i * m + j - 1] : kInf;
        if (diag <= up && diag <= left) {
            --i;
            --j;
        } else if (up <= left) {
            --i;
        } else {
            --j;
        }
    }
    return j;
}

}  // namespace detail

namespace detail {

inline void validate_matching_input(const Chromagram& query,
                                    const Chromagram& doc) {
    if (query.empty() || doc.empty())
        throw EmptyInput("matching needs non-empty chromagrams");
    if (query.size() < 2) throw QueryTooShort("query must have at least 2 frames");
}

inline MatchingCurve curve_from_table(const std::vector<double>& d,
                                      std::size_t n, std::size_t m) {
    MatchingCurve curve;
    curve.query_length = n;
    curve.values.resize(m);
    for (std::size_t j = 0; j < m; ++j)
        curve.values[j] = d[(n - 1) * m + j] / static_cast<double>(n);
    return curve;
}

}  // namespace detail

// The matching function: value at document frame m is the cost of the best
// alignment of the whole query ending at m, normalized by query length.
inline MatchingCurve matching_function(const Chromagram& query,
                                       const Chromagram& doc) {
    detail::validate_matching_input(query, doc);
    return detail::curve_from_table(detail::dtw_table(query, doc), query.size(),
                                    doc.size());
}

// Greedy extraction: repeatedly take the global minimum below the threshold
// and suppress +- exclusion frames around it. The result is sorted by cost
// ascending by construction.
inline std::vector<std::pair<std::size_t, double>> local_minima(
    const MatchingCurve& curve, double threshold = 0.25,
    std::size_t exclusion = 1) {
    if (exclusion < 1) throw Error("exclusion window must be >= 1");
    std::vector<std::pair<std::size_t, double>> out;
    std::vector<bool> suppressed(curve.values.size(), false);
    while (true) {
        std::size_t best = curve.values.size();
        for (std::size_t j = 0; j < curve.values.size(); ++j) {
            if (suppressed[j]) continue;
            if (best == curve.values.size() || curve.values[j] < curve.values[best])
                best = j;
        }
        if (best == curve.values.size() || curve.values[best] >= threshold) break;
        out.emplace_back(best, curve.values[best]);
        const std::size_t lo = best > exclusion ? best - exclusion : 0;
        const std::size_t hi = std::min(curve.values.size() - 1, best + exclusion);
        for (std::size_t j = lo; j <= hi; ++j) suppressed[j] = true;
    }
    return out;
}

// Matches across a corpus, optionally trying all 12 transpositions of the
// query. The reported transposition is the number of semitones the query is
// shifted up relative to the matched document.
inline std::vector<RankedMatch> rank_documents(
    const Chromagram& query,
    const std::vector<std::pair<std::string, Chromagram>>& corpus,
    double threshold = 0.25, std::size_t exclusion = 0,
    bool search_transpositions = false,
    std::vector<SkippedDoc>* skipped = nullptr) {
    if (corpus.empty()) throw EmptyInput("corpus is empty");
    if (query.empty()) throw EmptyInput("query is empty");
    if (query.size() < 2) throw QueryTooShort("query must have at least 2 frames");
    if (exclusion == 0) exclusion = std::max<std::size_t>(query.size() / 2, 1);

    std::vector<RankedMatch> matches;
    for (const auto& [doc_id, doc] : corpus) {
        try {
            const int shifts = search_transpositions ? 12 : 1;
            for (int t = 0; t < shifts; ++t) {
                const auto shifted = t == 0 ? query : cyclic_shift(query, -t);
                detail::validate_matching_input(shifted, doc);
                const auto d = detail::dtw_table(shifted, doc);
                const auto curve =
                    detail::curve_from_table(d, shifted.size(), doc.size());
                for (const auto& [frame, cost] :
                     local_minima(curve, threshold, exclusion)) {
                    RankedMatch match;
                    match.doc_id = doc_id;
                    match.start_frame = detail::backtrack_start(
                        d, shifted.size(), doc.size(), frame);
                    match.end_frame = frame;
                    match.cost = cost;
                    match.transposition = t;
                    matches.push_back(match);
                }
            }
        } catch (const Error& e) {
            if (skipped) skipped->push_back({doc_id, e.what()});
        }
    }

    std::stable_sort(matches.begin(), matches.end(),
                     [](const RankedMatch& a, const RankedMatch& b) {
                         if (a.cost != b.cost) return a.cost < b.cost;
                         if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
                         if (a.end_frame != b.end_frame)
                             return a.end_frame < b.end_frame;
                         return a.transposition < b.transposition;
                     });
    return matches;
}

// CSV rows `rank,doc_id,start_frame,end_frame,cost,transposition`.
inline std::string serialize_ranked_csv(const std::vector<RankedMatch>& matches) {
    std::string out = "rank,doc_id,start_frame,end_frame,cost,transposition\n";
    for (std::size_t i = 0; i < matches.size(); ++i) {
        const auto& m = matches[i];
        out += std::to_string(i + 1) + ',' + m.doc_id + ',' +
               std::to_string(m.start_frame) + ',' + std::to_string(m.end_frame) +
               ',' + detail::format_double(m.cost) + ',' +
               std::to_string(m.transposition) + '\n';
    }
    return out;
}

}  // namespace canto

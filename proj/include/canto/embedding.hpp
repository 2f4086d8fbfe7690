#pragma once

#include <cmath>
#include <map>
#include <utility>

#include <nlohmann/json.hpp>

#include "canto/songgen.hpp"

namespace canto {

class EmptyWindow : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class BatchTooSmall : public Error {
public:
    using Error::Error;
};

class DatasetTooSmall : public Error {
public:
    using Error::Error;
};

class EmptyCorpus : public Error {
public:
    using Error::Error;
};

class EmptyList : public Error {
public:
    using Error::Error;
};

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c)
        : rows(r), cols(c),
          v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

    double& at(int r, int c) {
        return v[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
    }
    double at(int r, int c) const {
        return v[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
    }
    std::size_t size() const { return v.size(); }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Piano-roll proxy for a rendered sheet snippet: rows are pitches, columns
// are quantized score positions.
using SnippetGrid = Matrix;
// Synthetic log-frequency spectrogram of the same window.
using ExcerptGrid = Matrix;

inline constexpr int kSnippetRows = 90;
inline constexpr int kSnippetCols = 100;
inline constexpr int kSnippetBasePitch = 19;  // pitch mapped to row 0
inline constexpr int kExcerptRows = 92;
inline constexpr int kExcerptCols = 42;
inline constexpr int kExcerptBaseBin = 20;    // semitone bin mapped to row 0
inline constexpr int kGridHarmonics = 5;

struct GridPair {
    SnippetGrid snippet;
    ExcerptGrid excerpt;
};

namespace detail {

inline double bilinear(const Matrix& m, double r, double c) {
    const auto cell = [&](int i, int j) {
        return i >= 0 && i < m.rows && j >= 0 && j < m.cols ? m.at(i, j) : 0.0;
    };
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(c));
    const double fr = r - r0;
    const double fc = c - c0;
    return cell(r0, c0) * (1 - fr) * (1 - fc) + cell(r0, c0 + 1) * (1 - fr) * fc +
           cell(r0 + 1, c0) * fr * (1 - fc) + cell(r0 + 1, c0 + 1) * fr * fc;
}

inline Matrix warp_snippet(const Matrix& in, int shift_r, int shift_c, double scale) {
    Matrix out(in.rows, in.cols);
    const double cr = (in.rows - 1) / 2.0;
    const double cc = (in.cols - 1) / 2.0;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c)
            out.at(r, c) = bilinear(in, cr + (r - shift_r - cr) / scale,
                                    cc + (c - shift_c - cc) / scale);
    return out;
}

inline Matrix resample_cols(const Matrix& in, double factor) {
    Matrix out(in.rows, in.cols);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c)
            out.at(r, c) = bilinear(in, r, c / factor);
    return out;
}

}  // namespace detail

// Renders the two views of one score window. The snippet marks note heads on
// a binary grid; the excerpt spreads five harmonics of every sounding note
// over a log-frequency grid, peak-normalized. Augmentation draws are fixed
// by `seed`: snippet row/column shift and scale, excerpt time stretch, then
// one gain per harmonic.
inline GridPair gen_training_pair(const NoteSequence& seq, double start, double end,
                                  bool augment = false, std::uint32_t seed = 0) {
    if (!(end > start)) throw Error("window must have positive length");

    std::vector<NoteEvent> heads;
    std::vector<NoteEvent> sounding;
    for (const NoteEvent& e : seq.events) {
        if (e.onset >= start && e.onset < end) heads.push_back(e);
        if (e.onset < end && e.onset + e.duration > start) sounding.push_back(e);
    }
    if (heads.empty()) throw EmptyWindow("no note onset in window");

    Rng rng(seed);
    int shift_r = 0;
    int shift_c = 0;
    double scale = 1.0;
    double stretch = 1.0;
    double gains[kGridHarmonics] = {1.0, 1.0, 1.0, 1.0, 1.0};
    if (augment) {
        shift_r = rng.uniform_int(-2, 2);
        shift_c = rng.uniform_int(-2, 2);
        scale = rng.uniform(0.9, 1.1);
        stretch = rng.uniform(0.8, 1.25);
        for (double& g : gains) g = rng.uniform(0.8, 1.2);
    }

    GridPair pair;
    pair.snippet = SnippetGrid(kSnippetRows, kSnippetCols);
    const double span = end - start;
    for (const NoteEvent& e : heads) {
        const int row = e.pitch - kSnippetBasePitch;
        if (row < 0 || row >= kSnippetRows) continue;
        const int col = std::min(
            kSnippetCols - 1,
            static_cast<int>(std::floor((e.onset - start) / span * kSnippetCols)));
        pair.snippet.at(row, col) = 1.0;
    }
    if (augment)
        pair.snippet = detail::warp_snippet(pair.snippet, shift_r, shift_c, scale);

    pair.excerpt = ExcerptGrid(kExcerptRows, kExcerptCols);
    const double frame_len = span / kExcerptCols;
    for (const NoteEvent& e : sounding) {
        for (int h = 1; h <= kGridHarmonics; ++h) {
            const int bin = static_cast<int>(std::lround(
                                e.pitch + 12.0 * std::log2(static_cast<double>(h)))) -
                            kExcerptBaseBin;
            if (bin < 0 || bin >= kExcerptRows) continue;
            const double weight = gains[h - 1] / (h * h);
            for (int c = 0; c < kExcerptCols; ++c) {
                const double cell_begin = start + c * frame_len;
                const double cell_end = cell_begin + frame_len;
                const double overlap = std::min(cell_end, e.onset + e.duration) -
                                       std::max(cell_begin, e.onset);
                if (overlap > 0.0)
                    pair.excerpt.at(bin, c) += overlap / frame_len * weight;
            }
        }
    }
    if (augment && stretch != 1.0)
        pair.excerpt = detail::resample_cols(pair.excerpt, stretch);
    double peak = 0.0;
    for (const double x : pair.excerpt.v) peak = std::max(peak, x);
    if (peak > 0.0)
        for (double& x : pair.excerpt.v) x /= peak;
    return pair;
}

// One pathway: input -> tanh hidden -> linear embedding, L2-normalized.
struct Pathway {
    Matrix w1;               // hidden x input
    std::vector<double> b1;  // hidden
    Matrix w2;               // embed x hidden
    std::vector<double> b2;  // embed
};

struct PathwayParams {
    Pathway snippet;
    Pathway excerpt;
};

namespace detail {

struct ForwardCache {
    const std::vector<double>* x = nullptr;
    std::vector<double> z;    // tanh activations
    std::vector<double> e;    // pre-normalization embedding
    double r = 0.0;           // pre-normalization norm
    std::vector<double> out;  // unit (or zero) embedding
};

inline ForwardCache forward_cached(const Pathway& p, const Matrix& grid) {
    if (static_cast<int>(grid.size()) != p.w1.cols)
        throw ShapeMismatch("input length " + std::to_string(grid.size()) +
                            " does not match pathway input " +
                            std::to_string(p.w1.cols));
    ForwardCache cache;
    cache.x = &grid.v;
    const int hidden = p.w1.rows;
    const int embed = p.w2.rows;
    cache.z.resize(static_cast<std::size_t>(hidden));
    for (int i = 0; i < hidden; ++i) {
        double a = p.b1[static_cast<std::size_t>(i)];
        const double* row = &p.w1.v[static_cast<std::size_t>(i) * p.w1.cols];
        for (int j = 0; j < p.w1.cols; ++j) a += row[j] * grid.v[static_cast<std::size_t>(j)];
        cache.z[static_cast<std::size_t>(i)] = std::tanh(a);
    }
    cache.e.resize(static_cast<std::size_t>(embed));
    double norm2 = 0.0;
    for (int o = 0; o < embed; ++o) {
        double a = p.b2[static_cast<std::size_t>(o)];
        const double* row = &p.w2.v[static_cast<std::size_t>(o) * p.w2.cols];
        for (int i = 0; i < hidden; ++i) a += row[i] * cache.z[static_cast<std::size_t>(i)];
        cache.e[static_cast<std::size_t>(o)] = a;
        norm2 += a * a;
    }
    cache.r = std::sqrt(norm2);
    cache.out.assign(static_cast<std::size_t>(embed), 0.0);
    if (cache.r >= 1e-12)
        for (int o = 0; o < embed; ++o)
            cache.out[static_cast<std::size_t>(o)] = cache.e[static_cast<std::size_t>(o)] / cache.r;
    return cache;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Accumulates one sample's gradient given the loss gradient at the unit
// embedding. Normalization backprop: de = (dout - out (dout . out)) / r.
inline void backprop_sample(const Pathway& p, const ForwardCache& cache,
                            const std::vector<double>& dout, Pathway& grad) {
    if (cache.r < 1e-12) return;  // zero-vector branch is flat
    const int hidden = p.w1.rows;
    const int embed = p.w2.rows;
    const double along = dot(dout, cache.out);
    std::vector<double> de(static_cast<std::size_t>(embed));
    for (int o = 0; o < embed; ++o)
        de[static_cast<std::size_t>(o)] =
            (dout[static_cast<std::size_t>(o)] - cache.out[static_cast<std::size_t>(o)] * along) /
            cache.r;

    std::vector<double> dz(static_cast<std::size_t>(hidden), 0.0);
    for (int o = 0; o < embed; ++o) {
        const double g = de[static_cast<std::size_t>(o)];
        double* grow = &grad.w2.v[static_cast<std::size_t>(o) * p.w2.cols];
        const double* wrow = &p.w2.v[static_cast<std::size_t>(o) * p.w2.cols];
        for (int i = 0; i < hidden; ++i) {
            grow[i] += g * cache.z[static_cast<std::size_t>(i)];
            dz[static_cast<std::size_t>(i)] += wrow[i] * g;
        }
        grad.b2[static_cast<std::size_t>(o)] += g;
    }
    for (int i = 0; i < hidden; ++i) {
        const double zi = cache.z[static_cast<std::size_t>(i)];
        const double da = dz[static_cast<std::size_t>(i)] * (1.0 - zi * zi);
        grad.b1[static_cast<std::size_t>(i)] += da;
        double* grow = &grad.w1.v[static_cast<std::size_t>(i) * p.w1.cols];
        const std::vector<double>& x = *cache.x;
        for (int j = 0; j < p.w1.cols; ++j) grow[j] += da * x[static_cast<std::size_t>(j)];
    }
}

inline Pathway zero_like(const Pathway& p) {
    Pathway g;
    g.w1 = Matrix(p.w1.rows, p.w1.cols);
    g.b1.assign(p.b1.size(), 0.0);
    g.w2 = Matrix(p.w2.rows, p.w2.cols);
    g.b2.assign(p.b2.size(), 0.0);
    return g;
}

}  // namespace detail

inline std::vector<double> forward(const Pathway& pathway, const Matrix& grid) {
    return detail::forward_cached(pathway, grid).out;
}

// Eq.-style pairwise ranking loss: for each matching pair i, every other
// excerpt in the batch is a contrasting example. Sum, not mean.
inline double ranking_loss(const std::vector<std::vector<double>>& snippets,
                           const std::vector<std::vector<double>>& excerpts,
                           double gamma) {
    if (snippets.size() != excerpts.size())
        throw ShapeMismatch("batch sizes differ");
    if (snippets.size() < 2)
        throw BatchTooSmall("need at least 2 pairs, got " +
                            std::to_string(snippets.size()));
    double total = 0.0;
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        const double pos = detail::dot(snippets[i], excerpts[i]);
        for (std::size_t l = 0; l < excerpts.size(); ++l) {
            if (l == i) continue;
            const double term = gamma - pos + detail::dot(snippets[i], excerpts[l]);
            if (term > 0.0) total += term;
        }
    }
    return total;
}

struct BatchGradients {
    Pathway snippet;
    Pathway excerpt;
    double loss = 0.0;
};

// Exact gradient of ranking_loss applied to forward embeddings of the raw
// grids; hinge terms exactly at zero contribute the zero subgradient.
inline BatchGradients loss_gradient(const PathwayParams& params,
                                    const std::vector<SnippetGrid>& snippets,
                                    const std::vector<ExcerptGrid>& excerpts,
                                    double gamma) {
    if (snippets.size() != excerpts.size())
        throw ShapeMismatch("batch sizes differ");
    if (snippets.size() < 2)
        throw BatchTooSmall("need at least 2 pairs, got " +
                            std::to_string(snippets.size()));
    const std::size_t n = snippets.size();
    std::vector<detail::ForwardCache> xc(n), yc(n);
    for (std::size_t i = 0; i < n; ++i) {
        xc[i] = detail::forward_cached(params.snippet, snippets[i]);
        yc[i] = detail::forward_cached(params.excerpt, excerpts[i]);
    }

    const std::size_t k = xc[0].out.size();
    std::vector<std::vector<double>> dx(n, std::vector<double>(k, 0.0));
    std::vector<std::vector<double>> dy(n, std::vector<double>(k, 0.0));
    BatchGradients grads;
    grads.snippet = detail::zero_like(params.snippet);
    grads.excerpt = detail::zero_like(params.excerpt);
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = detail::dot(xc[i].out, yc[i].out);
        for (std::size_t l = 0; l < n; ++l) {
            if (l == i) continue;
            const double term = gamma - pos + detail::dot(xc[i].out, yc[l].out);
            if (term <= 0.0) continue;
            grads.loss += term;
            for (std::size_t o = 0; o < k; ++o) {
                dx[i][o] += yc[l].out[o] - yc[i].out[o];
                dy[l][o] += xc[i].out[o];
                dy[i][o] -= xc[i].out[o];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        detail::backprop_sample(params.snippet, xc[i], dx[i], grads.snippet);
        detail::backprop_sample(params.excerpt, yc[i], dy[i], grads.excerpt);
    }
    return grads;
}

struct EmbedConfig {
    double gamma = 0.5;
    int batch_size = 32;
    double learning_rate = 0.01;
    int epochs = 20;
    int hidden = 128;
    int embed = 32;
    std::uint32_t seed = 42;
};

struct TrainResult {
    PathwayParams params;
    std::vector<double> loss_trace;  // mean batch loss per epoch
};

namespace detail {

inline void init_matrix(Matrix& m, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.cols));
    for (double& x : m.v) x = rng.uniform(-bound, bound);
}

inline Pathway make_pathway(int input, int hidden, int embed) {
    Pathway p;
    p.w1 = Matrix(hidden, input);
    p.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    p.w2 = Matrix(embed, hidden);
    p.b2.assign(static_cast<std::size_t>(embed), 0.0);
    return p;
}

inline void sgd_update(Pathway& p, const Pathway& g, double lr) {
    for (std::size_t i = 0; i < p.w1.v.size(); ++i) p.w1.v[i] -= lr * g.w1.v[i];
    for (std::size_t i = 0; i < p.b1.size(); ++i) p.b1[i] -= lr * g.b1[i];
    for (std::size_t i = 0; i < p.w2.v.size(); ++i) p.w2.v[i] -= lr * g.w2.v[i];
    for (std::size_t i = 0; i < p.b2.size(); ++i) p.b2[i] -= lr * g.b2[i];
}

}  // namespace detail

// Weights start uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn in a
// fixed order (snippet w1, w2, then excerpt w1, w2); biases start at zero.
inline PathwayParams init_params(int snippet_input, int excerpt_input,
                                 const EmbedConfig& config) {
    if (snippet_input < 1 || excerpt_input < 1 || config.hidden < 1 || config.embed < 1)
        throw ShapeMismatch("dimensions must be positive");
    Rng rng(config.seed);
    PathwayParams params;
    params.snippet = detail::make_pathway(snippet_input, config.hidden, config.embed);
    params.excerpt = detail::make_pathway(excerpt_input, config.hidden, config.embed);
    detail::init_matrix(params.snippet.w1, rng);
    detail::init_matrix(params.snippet.w2, rng);
    detail::init_matrix(params.excerpt.w1, rng);
    detail::init_matrix(params.excerpt.w2, rng);
    return params;
}

inline TrainResult train(const std::vector<GridPair>& dataset, const EmbedConfig& config) {
    if (config.batch_size < 2) throw BatchTooSmall("batch_size must be >= 2");
    if (!(config.gamma > 0.0)) throw Error("gamma must be positive");
    if (config.epochs < 1) throw Error("epochs must be >= 1");
    if (static_cast<int>(dataset.size()) < config.batch_size)
        throw DatasetTooSmall("dataset of " + std::to_string(dataset.size()) +
                              " pairs is smaller than one batch of " +
                              std::to_string(config.batch_size));
    for (const GridPair& p : dataset)
        if (p.snippet.size() != dataset[0].snippet.size() ||
            p.excerpt.size() != dataset[0].excerpt.size())
            throw ShapeMismatch("dataset grids have mixed shapes");

    TrainResult result;
    result.params = init_params(static_cast<int>(dataset[0].snippet.size()),
                                static_cast<int>(dataset[0].excerpt.size()), config);
    Rng rng(config.seed + 1);  // distinct stream from the init draws

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batches = dataset.size() / static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            std::vector<SnippetGrid> xs;
            std::vector<ExcerptGrid> ys;
            for (int i = 0; i < config.batch_size; ++i) {
                const std::size_t at = order[b * static_cast<std::size_t>(config.batch_size) +
                                             static_cast<std::size_t>(i)];
                xs.push_back(dataset[at].snippet);
                ys.push_back(dataset[at].excerpt);
            }
            const BatchGradients grads =
                loss_gradient(result.params, xs, ys, config.gamma);
            detail::sgd_update(result.params.snippet, grads.snippet, config.learning_rate);
            detail::sgd_update(result.params.excerpt, grads.excerpt, config.learning_rate);
            epoch_loss += grads.loss;
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(batches));
    }
    return result;
}

struct Scored {
    std::string id;
    double score = 0.0;
};

inline std::vector<Scored> retrieve(
    const std::vector<std::pair<std::string, std::vector<double>>>& corpus,
    const std::vector<double>& query, int n) {
    if (corpus.empty()) throw EmptyCorpus("retrieval corpus is empty");
    if (n < 1) throw Error("n must be >= 1");
    std::vector<Scored> scored;
    scored.reserve(corpus.size());
    for (const auto& [id, vec] : corpus) {
        if (vec.size() != query.size()) throw ShapeMismatch("embedding dims differ");
        scored.push_back({id, detail::dot(vec, query)});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (static_cast<int>(scored.size()) > n) scored.resize(static_cast<std::size_t>(n));
    return scored;
}

inline std::string majority_vote(const std::vector<std::string>& votes) {
    if (votes.empty()) throw EmptyList("no votes");
    std::map<std::string, int> counts;
    for (const auto& v : votes) ++counts[v];
    std::string best;
    int most = -1;
    for (const auto& [id, count] : counts)
        if (count > most) {  // map order breaks ties lexicographically
            most = count;
            best = id;
        }
    return best;
}

// Model file: shape header plus a little-endian f64 parameter blob in the
// fixed pathway order.
inline std::vector<std::uint8_t> serialize_model(const PathwayParams& params) {
    ByteWriter w;
    w.raw("CMEM1");
    w.u32(static_cast<std::uint32_t>(params.snippet.w1.cols));
    w.u32(static_cast<std::uint32_t>(params.excerpt.w1.cols));
    w.u32(static_cast<std::uint32_t>(params.snippet.w1.rows));
    w.u32(static_cast<std::uint32_t>(params.snippet.w2.rows));
    const auto blob = [&](const Pathway& p) {
        for (const double x : p.w1.v) w.f64(x);
        for (const double x : p.b1) w.f64(x);
        for (const double x : p.w2.v) w.f64(x);
        for (const double x : p.b2) w.f64(x);
    };
    blob(params.snippet);
    blob(params.excerpt);
    return w.bytes();
}

inline PathwayParams parse_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.raw(5) != "CMEM1") throw Error("not a model file");
    const auto snippet_input = static_cast<int>(r.u32());
    const auto excerpt_input = static_cast<int>(r.u32());
    const auto hidden = static_cast<int>(r.u32());
    const auto embed = static_cast<int>(r.u32());
    if (snippet_input < 1 || excerpt_input < 1 || hidden < 1 || embed < 1)
        throw Error("bad model shape header");
    PathwayParams params;
    params.snippet = detail::make_pathway(snippet_input, hidden, embed);
    params.excerpt = detail::make_pathway(excerpt_input, hidden, embed);
    const auto blob = [&](Pathway& p) {
        for (double& x : p.w1.v) x = r.f64();
        for (double& x : p.b1) x = r.f64();
        for (double& x : p.w2.v) x = r.f64();
        for (double& x : p.b2) x = r.f64();
    };
    blob(params.snippet);
    blob(params.excerpt);
    if (!r.at_end()) throw Error("trailing bytes after model");
    return params;
}

inline void save_model(const std::string& path, const PathwayParams& params) {
    write_binary_file(path, serialize_model(params));
}

inline PathwayParams load_model(const std::string& path) {
    const auto bytes = read_binary_file(path);
    return parse_model(bytes);
}

struct PairMeta {
    std::string piece_id;
    double window_start = 0.0;
    double window_end = 0.0;
};

struct PairDataset {
    std::vector<GridPair> pairs;
    std::vector<PairMeta> meta;
};

// Binary container of grid pairs; ids and windows ride in a JSON sidecar
// (same path plus ".json").
inline std::vector<std::uint8_t> serialize_dataset(const PairDataset& ds) {
    ByteWriter w;
    w.raw("CMDS1");
    w.u32(static_cast<std::uint32_t>(ds.pairs.size()));
    const int sr = ds.pairs.empty() ? kSnippetRows : ds.pairs[0].snippet.rows;
    const int sc = ds.pairs.empty() ? kSnippetCols : ds.pairs[0].snippet.cols;
    const int er = ds.pairs.empty() ? kExcerptRows : ds.pairs[0].excerpt.rows;
    const int ec = ds.pairs.empty() ? kExcerptCols : ds.pairs[0].excerpt.cols;
    w.u32(static_cast<std::uint32_t>(sr));
    w.u32(static_cast<std::uint32_t>(sc));
    w.u32(static_cast<std::uint32_t>(er));
    w.u32(static_cast<std::uint32_t>(ec));
    for (const GridPair& p : ds.pairs) {
        if (p.snippet.rows != sr || p.snippet.cols != sc || p.excerpt.rows != er ||
            p.excerpt.cols != ec)
            throw ShapeMismatch("dataset grids have mixed shapes");
        for (const double x : p.snippet.v) w.f64(x);
        for (const double x : p.excerpt.v) w.f64(x);
    }
    return w.bytes();
}

inline PairDataset parse_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (r.raw(5) != "CMDS1") throw Error("not a dataset file");
    const std::uint32_t count = r.u32();
    const auto sr = static_cast<int>(r.u32());
    const auto sc = static_cast<int>(r.u32());
    const auto er = static_cast<int>(r.u32());
    const auto ec = static_cast<int>(r.u32());
    if (sr < 1 || sc < 1 || er < 1 || ec < 1) throw Error("bad dataset shape header");
    PairDataset ds;
    for (std::uint32_t i = 0; i < count; ++i) {
        GridPair p;
        p.snippet = SnippetGrid(sr, sc);
        p.excerpt = ExcerptGrid(er, ec);
        for (double& x : p.snippet.v) x = r.f64();
        for (double& x : p.excerpt.v) x = r.f64();
        ds.pairs.push_back(std::move(p));
    }
    if (!r.at_end()) throw Error("trailing bytes after dataset");
    return ds;
}

inline nlohmann::json dataset_sidecar(const PairDataset& ds) {
    nlohmann::json j;
    j["format"] = "CMDS1";
    auto& pairs = j["pairs"] = nlohmann::json::array();
    for (const PairMeta& m : ds.meta)
        pairs.push_back({{"piece_id", m.piece_id},
                         {"window", {m.window_start, m.window_end}}});
    return j;
}

inline void save_dataset(const std::string& path, const PairDataset& ds) {
    write_binary_file(path, serialize_dataset(ds));
    write_text_file(path + ".json", dataset_sidecar(ds).dump(2) + "\n");
}

inline PairDataset load_dataset(const std::string& path) {
    auto ds = parse_dataset(read_binary_file(path));
    const auto j = nlohmann::json::parse(read_text_file(path + ".json"));
    for (const auto& m : j.at("pairs")) {
        PairMeta meta;
        meta.piece_id = m.at("piece_id").get<std::string>();
        meta.window_start = m.at("window").at(0).get<double>();
        meta.window_end = m.at("window").at(1).get<double>();
        ds.meta.push_back(std::move(meta));
    }
    if (ds.meta.size() != ds.pairs.size())
        throw Error("dataset sidecar does not match pair count");
    return ds;
}

inline std::string serialize_loss_csv(const std::vector<double>& trace) {
    std::string out = "epoch,mean_loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        out += detail::format_double(trace[i]);
        out += '\n';
    }
    return out;
}

// Draws `pairs_per_piece` random windows from each piece and renders both
// views. Windows that contain no onset are redrawn.
inline PairDataset make_pairs(Rng& rng, const std::vector<NoteSequence>& pieces,
                              int pairs_per_piece, double window = 2.0,
                              bool augment = false) {
    if (pairs_per_piece < 1) throw Error("pairs_per_piece must be >= 1");
    if (!(window > 0.0)) throw Error("window must be positive");
    PairDataset ds;
    for (const NoteSequence& piece : pieces) {
        const double span = std::max(0.0, piece.end_time() - window);
        for (int i = 0; i < pairs_per_piece; ++i) {
            for (int attempt = 0;; ++attempt) {
                const double start = rng.uniform(0.0, span);
                const auto seed =
                    static_cast<std::uint32_t>(rng.uniform_int(0, 2147483647));
                try {
                    ds.pairs.push_back(
                        gen_training_pair(piece, start, start + window, augment, seed));
                } catch (const EmptyWindow&) {
                    if (attempt >= 100)
                        throw Error("piece " + piece.id + " has no usable window");
                    continue;
                }
                ds.meta.push_back({piece.id, start, start + window});
                break;
            }
        }
    }
    return ds;
}

}  // namespace canto

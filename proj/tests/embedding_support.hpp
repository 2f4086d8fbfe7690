#ifndef CANTO_TESTS_EMBEDDING_SUPPORT_HPP
#define CANTO_TESTS_EMBEDDING_SUPPORT_HPP

#include <vector>

#include "canto/embedding.hpp"

// Parameter views in the update order used by train(): snippet pathway first,
// each as w1, b1, w2, b2.
inline std::vector<double*> parameter_slots(canto::PathwayParams& params) {
    std::vector<double*> slots;
    const auto add = [&](canto::Pathway& p) {
        for (double& x : p.w1.v) slots.push_back(&x);
        for (double& x : p.b1) slots.push_back(&x);
        for (double& x : p.w2.v) slots.push_back(&x);
        for (double& x : p.b2) slots.push_back(&x);
    };
    add(params.snippet);
    add(params.excerpt);
    return slots;
}

inline std::vector<double> flatten_gradients(const canto::BatchGradients& grads) {
    std::vector<double> flat;
    const auto add = [&](const canto::Pathway& p) {
        flat.insert(flat.end(), p.w1.v.begin(), p.w1.v.end());
        flat.insert(flat.end(), p.b1.begin(), p.b1.end());
        flat.insert(flat.end(), p.w2.v.begin(), p.w2.v.end());
        flat.insert(flat.end(), p.b2.begin(), p.b2.end());
    };
    add(grads.snippet);
    add(grads.excerpt);
    return flat;
}

inline double batch_loss(const canto::PathwayParams& params,
                         const std::vector<canto::SnippetGrid>& xs,
                         const std::vector<canto::ExcerptGrid>& ys, double gamma) {
    std::vector<std::vector<double>> xe, ye;
    for (const auto& g : xs) xe.push_back(canto::forward(params.snippet, g));
    for (const auto& g : ys) ye.push_back(canto::forward(params.excerpt, g));
    return canto::ranking_loss(xe, ye, gamma);
}

inline canto::Matrix random_grid(canto::Rng& rng, int rows, int cols) {
    canto::Matrix m(rows, cols);
    for (double& x : m.v) x = rng.uniform();
    return m;
}

#endif

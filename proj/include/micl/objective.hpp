#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "micl/autodiff.hpp"
#include "micl/matrix.hpp"

namespace micl {

constexpr double kProbEps = 1e-7;

struct LossBreakdown {
    double l_ce = 0.0;
    double l_cl = 0.0;
    double l_total = 0.0;
    double lambda = 1.0;
};

inline LossBreakdown total_loss(double l_ce, double l_cl, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
    return LossBreakdown{l_ce, l_cl, l_ce + lambda * l_cl, lambda};
}

// -(y log p + (1-y) log(1-p)) with p clamped to [eps, 1-eps].
inline double cross_entropy(int y, double p) {
    p = std::min(1.0 - kProbEps, std::max(kProbEps, p));
    return y == 1 ? -std::log(p) : -std::log(1.0 - p);
}

inline Var cross_entropy_var(Tape& t, Var prob, int label) {
    Var p = t.clamp(prob, kProbEps, 1.0 - kProbEps);
    if (label == 1) return t.scale(t.log_(p), -1.0);
    Var one_minus = t.add_const(t.scale(p, -1.0), 1.0);
    return t.scale(t.log_(one_minus), -1.0);
}

// ---------------------------------------------------------------------------
// Bidirectional supervised contrastive loss over summary embeddings.
// Positives are the batch members sharing the anchor's label (the anchor's
// own pair included); the denominator runs over the whole batch.

enum class ContrastiveDirection { t_to_v, v_to_t };

struct BatchEmbeddings {
    Matrix e_t;               // B x d
    Matrix e_v;               // B x d
    std::vector<int> labels;  // B entries in {0, 1}
};

namespace detail {
inline double cosine(const Matrix& A, std::size_t i, const Matrix& B, std::size_t j) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < A.cols(); ++k) {
        dot += A(i, k) * B(j, k);
        na += A(i, k) * A(i, k);
        nb += B(j, k) * B(j, k);
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}
}  // namespace detail

// Single-anchor, single-direction term, in the definitional form.
inline double contrastive_direction(std::size_t k, const BatchEmbeddings& batch,
                                    ContrastiveDirection dir, double tau) {
    const std::size_t B = batch.labels.size();
    if (tau <= 0.0) throw std::invalid_argument("contrastive_direction: tau must be positive");
    if (B < 2) throw std::invalid_argument("contrastive_direction: batch too small");
    const Matrix& anchors = dir == ContrastiveDirection::t_to_v ? batch.e_t : batch.e_v;
    const Matrix& others = dir == ContrastiveDirection::t_to_v ? batch.e_v : batch.e_t;

    std::vector<double> sims(B);
    double max_sim = -1e300;
    for (std::size_t j = 0; j < B; ++j) {
        sims[j] = detail::cosine(anchors, k, others, j) / tau;
        max_sim = std::max(max_sim, sims[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < B; ++j) denom += std::exp(sims[j] - max_sim);

    double term = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < B; ++i) {
        if (batch.labels[i] != batch.labels[k]) continue;
        ++positives;
        term += -(sims[i] - max_sim - std::log(denom));
    }
    if (positives == 0) return 0.0;  // cannot occur when the anchor counts itself
    return term / static_cast<double>(positives);
}

// Batch-mean of 1/2 (t->v) + 1/2 (v->t), on the tape. Embeddings are cosine
// normalized, so the loss is invariant under positive row rescaling.
inline Var contrastive_loss_var(Tape& t, Var e_t, Var e_v, const std::vector<int>& labels,
                                double tau) {
    const std::size_t B = labels.size();
    if (tau <= 0.0) throw std::invalid_argument("contrastive_loss: tau must be positive");
    if (B < 2) throw std::invalid_argument("contrastive_loss: batch too small");
    if (t.value(e_t).rows() != B || t.value(e_v).rows() != B)
        throw std::invalid_argument("contrastive_loss: embedding row count mismatch");

    auto normalize = [&t](Var e) {
        Var norms = t.sqrt_(t.add_const(t.row_sums(t.square(e)), 1e-30));
        return t.div_rowscale(e, norms);
    };
    Var nt = normalize(e_t);
    Var nv = normalize(e_v);
    Var z = t.scale(t.matmul_(nt, t.transpose(nv)), 1.0 / tau);  // z(k,i) = cos(t_k, v_i)/tau

    // weight(k,i) = -1 / (B |S_P(k)|) for positives; same matrix serves both
    // directions since label agreement is symmetric.
    Matrix w(B, B);
    for (std::size_t k = 0; k < B; ++k) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < B; ++i) pos += labels[i] == labels[k] ? 1 : 0;
        for (std::size_t i = 0; i < B; ++i)
            if (labels[i] == labels[k])
                w(k, i) = -1.0 / (static_cast<double>(B) * static_cast<double>(pos));
    }
    Var wv = t.leaf(w);
    Var l_tv = t.sum_all(t.mul(wv, t.log_(t.softmax_rows(z))));
    Var l_vt = t.sum_all(t.mul(wv, t.log_(t.softmax_rows(t.transpose(z)))));
    return t.add(t.scale(l_tv, 0.5), t.scale(l_vt, 0.5));
}

}  // namespace micl

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "micl/attention.hpp"
#include "micl/autodiff.hpp"
#include "micl/params.hpp"
#include "micl/text.hpp"

namespace micl {

enum class Modality { text, visual };

// Undirected self-looped graph over tokens or patches.
struct SemanticGraph {
    Matrix node_features;                     // N x d
    std::vector<std::vector<bool>> adjacency; // N x N, symmetric, full diagonal
    Modality modality = Modality::text;

    std::size_t node_count() const { return node_features.rows(); }
};

// Plug-in contract: given token count and ids, return undirected edges as
// index pairs (self-loops and symmetrization are applied by the builder).
using EdgeProvider =
    std::function<std::vector<std::pair<std::size_t, std::size_t>>(std::size_t,
                                                                   const std::vector<TokenId>&)>;

// Default provider: dependency-like locality, linking tokens within a window.
inline EdgeProvider sliding_window_edges(std::size_t width = 2) {
    return [width](std::size_t n, const std::vector<TokenId>&) {
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t w = 1; w <= width && i + w < n; ++w) edges.emplace_back(i, i + w);
        return edges;
    };
}

inline SemanticGraph build_text_graph(const Matrix& token_states,
                                      const std::vector<TokenId>& token_ids,
                                      const EdgeProvider& provider) {
    const std::size_t n = token_states.rows();
    if (n < 1) throw std::invalid_argument("build_text_graph: need at least one node");
    SemanticGraph g;
    g.node_features = token_states;
    g.modality = Modality::text;
    g.adjacency.assign(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) g.adjacency[i][i] = true;
    for (auto [a, b] : provider(n, token_ids)) {
        if (a >= n || b >= n) throw std::out_of_range("build_text_graph: edge index out of range");
        g.adjacency[a][b] = true;
        g.adjacency[b][a] = true;
    }
    return g;
}

// Edge (i, j), i != j, iff cos(feat_i, feat_j) > threshold. A zero-norm node
// keeps only its self-loop.
inline SemanticGraph build_visual_graph(const Matrix& patch_states, double threshold) {
    const std::size_t n = patch_states.rows();
    if (n < 1) throw std::invalid_argument("build_visual_graph: need at least one node");
    if (threshold <= -1.0 || threshold >= 1.0)
        throw std::invalid_argument("build_visual_graph: threshold must be in (-1, 1)");
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < patch_states.cols(); ++k)
            s += patch_states(i, k) * patch_states(i, k);
        norms[i] = std::sqrt(s);
    }
    SemanticGraph g;
    g.node_features = patch_states;
    g.modality = Modality::visual;
    g.adjacency.assign(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) g.adjacency[i][i] = true;
    for (std::size_t i = 0; i < n; ++i) {
        if (norms[i] == 0.0) continue;  // degenerate feature
        for (std::size_t j = i + 1; j < n; ++j) {
            if (norms[j] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t k = 0; k < patch_states.cols(); ++k)
                dot += patch_states(i, k) * patch_states(j, k);
            if (dot / (norms[i] * norms[j]) > threshold) {
                g.adjacency[i][j] = true;
                g.adjacency[j][i] = true;
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Graph attention layer. Scores use the leaky-rectified additive form over
// the self-looped neighborhood; the update is the attention-weighted sum of
// transformed neighbors.

constexpr double kGatLeakySlope = 0.2;

struct GatLayerVars {
    Var W;        // d x d
    Var u_left;   // d x 1, first half of the attention vector
    Var u_right;  // d x 1, second half

    static void register_params(ParamStore& ps, const std::string& prefix, std::size_t d) {
        ps.add(prefix + ".W", d, d);
        ps.add(prefix + ".u_left", d, 1);
        ps.add(prefix + ".u_right", d, 1);
    }
    static GatLayerVars bind(const TapeParams& tp, const std::string& prefix) {
        return GatLayerVars{tp(prefix + ".W"), tp(prefix + ".u_left"), tp(prefix + ".u_right")};
    }
};

struct GatOut {
    Var nodes;    // N x d
    Var weights;  // N x N, row i supported on N(i) U {i} and summing to 1
};

inline GatOut gat_layer(Tape& t, Var nodes, const std::vector<std::vector<bool>>& adjacency,
                        const GatLayerVars& p, double slope = kGatLeakySlope) {
    const std::size_t n = t.value(nodes).rows();
    if (adjacency.size() != n) throw std::invalid_argument("gat_layer: adjacency size mismatch");
    Var transformed = t.matmul_(nodes, p.W);                       // rows are W g_i
    Var a = t.matmul_(transformed, p.u_left);                      // N x 1
    Var b = t.transpose(t.matmul_(transformed, p.u_right));        // 1 x N
    Var scores = t.leaky_relu(t.bcast_sum(a, b), slope);
    Var alpha = t.masked_softmax_rows(scores, adjacency);
    return GatOut{t.matmul_(alpha, transformed), alpha};
}

// ---------------------------------------------------------------------------
// View features. Every view lands in dimension d.

struct TokenPatchVars {
    AttnVars attn;  // shared across the three attention calls
    Var proj_W;     // 3d x d
    Var proj_b;     // 1 x d

    static void register_params(ParamStore& ps, std::size_t d) {
        AttnVars::register_params(ps, "view_w.attn", d);
        ps.add("view_w.proj_W", 3 * d, d);
        ps.add("view_w.proj_b", 1, d, InitKind::zero);
    }
    static TokenPatchVars bind(const TapeParams& tp) {
        return TokenPatchVars{AttnVars::bind(tp, "view_w.attn"), tp("view_w.proj_W"),
                              tp("view_w.proj_b")};
    }
};

// Hybrid token-patch interaction: joint self-configuration over the row
// concatenation, plus each modality querying the other. Summary rows are
// concatenated (3d) and projected to d.
inline Var token_patch_view(Tape& t, Var H_t, Var H_v, const TokenPatchVars& p) {
    if (t.value(H_t).cols() != t.value(H_v).cols())
        throw std::invalid_argument("token_patch_view: dimension mismatch");
    Var H_tv = t.concat_rows({H_t, H_v});
    Var F_tv = self_attention(t, H_tv, p.attn).out;
    Var F_t = cross_attention(t, H_t, H_v, H_v, p.attn).out;
    Var F_v = cross_attention(t, H_v, H_t, H_t, p.attn).out;
    Var f = t.concat_cols({t.slice_rows(F_tv, 0, 1), t.slice_rows(F_t, 0, 1),
                           t.slice_rows(F_v, 0, 1)});
    return t.add_rowvec(t.matmul_(f, p.proj_W), p.proj_b);
}

struct EntityObjectVars {
    std::vector<GatLayerVars> text_layers;
    std::vector<GatLayerVars> visual_layers;
    Var gate_W;  // d x 1
    Var gate_b;  // 1 x 1

    static void register_params(ParamStore& ps, std::size_t d, std::size_t gat_depth) {
        for (std::size_t l = 0; l < gat_depth; ++l) {
            GatLayerVars::register_params(ps, "gat_t.layer" + std::to_string(l), d);
            GatLayerVars::register_params(ps, "gat_v.layer" + std::to_string(l), d);
        }
        ps.add("view_e.gate_W", d, 1);
        ps.add("view_e.gate_b", 1, 1, InitKind::zero);
    }
    static EntityObjectVars bind(const TapeParams& tp, std::size_t gat_depth) {
        EntityObjectVars v;
        for (std::size_t l = 0; l < gat_depth; ++l) {
            v.text_layers.push_back(GatLayerVars::bind(tp, "gat_t.layer" + std::to_string(l)));
            v.visual_layers.push_back(GatLayerVars::bind(tp, "gat_v.layer" + std::to_string(l)));
        }
        v.gate_W = tp("view_e.gate_W");
        v.gate_b = tp("view_e.gate_b");
        return v;
    }
};

// GAT stacks per modality, node sets concatenated, then a scalar gate per
// node normalized across nodes: f_e = (1/N) sum_i softmax(z)_i g_i.
inline Var entity_object_view(Tape& t, Var text_nodes,
                              const std::vector<std::vector<bool>>& text_adj, Var visual_nodes,
                              const std::vector<std::vector<bool>>& visual_adj,
                              const EntityObjectVars& p) {
    Var gt = text_nodes;
    for (const auto& layer : p.text_layers) gt = gat_layer(t, gt, text_adj, layer).nodes;
    Var gv = visual_nodes;
    for (const auto& layer : p.visual_layers) gv = gat_layer(t, gv, visual_adj, layer).nodes;
    Var g = t.concat_rows({gt, gv});
    const std::size_t n = t.value(g).rows();
    Var logits = t.add_rowvec(t.matmul_(g, p.gate_W), p.gate_b);  // N x 1
    Var gates = t.softmax_rows(t.transpose(logits));              // 1 x N over nodes
    return t.scale(t.matmul_(gates, g), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Sentiment view.

// Fixed-size polarity statistics of a token sequence.
struct SentimentSummary {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double hit_fraction = 0.0;
};

inline SentimentSummary sentiment_polarity(const std::vector<std::string>& words,
                                           const Lexicon& lx) {
    SentimentSummary s;
    if (words.empty()) return s;
    double sum = 0.0, mn = 0.0, mx = 0.0;
    std::size_t hits = 0;
    bool first = true;
    for (const auto& w : words) {
        double p = 0.0;
        if (auto pol = lx.polarity_of(w)) {
            p = *pol;
            ++hits;
        }
        sum += p;
        if (first) {
            mn = mx = p;
            first = false;
        } else {
            mn = std::min(mn, p);
            mx = std::max(mx, p);
        }
    }
    s.mean = sum / static_cast<double>(words.size());
    s.min = mn;
    s.max = mx;
    s.hit_fraction = static_cast<double>(hits) / static_cast<double>(words.size());
    return s;
}

struct SentimentVars {
    Var W1;  // (d + 8) x d
    Var b1;  // 1 x d
    Var W2;  // d x d
    Var b2;  // 1 x d

    static void register_params(ParamStore& ps, std::size_t d) {
        ps.add("view_s.W1", d + 8, d);
        ps.add("view_s.b1", 1, d, InitKind::zero);
        ps.add("view_s.W2", d, d);
        ps.add("view_s.b2", 1, d, InitKind::zero);
    }
    static SentimentVars bind(const TapeParams& tp) {
        return SentimentVars{tp("view_s.W1"), tp("view_s.b1"), tp("view_s.W2"), tp("view_s.b2")};
    }
};

inline Matrix summary_stats_row(const SentimentSummary& a, const SentimentSummary& b) {
    Matrix m(1, 8);
    m(0, 0) = a.mean;
    m(0, 1) = a.min;
    m(0, 2) = a.max;
    m(0, 3) = a.hit_fraction;
    m(0, 4) = b.mean;
    m(0, 5) = b.min;
    m(0, 6) = b.max;
    m(0, 7) = b.hit_fraction;
    return m;
}

// Caption and OCR polarity statistics concatenated with the mean-pooled
// token states, through a two-layer perceptron. Without OCR the view is the
// exact zero vector.
inline Var sentiment_view(Tape& t, const SentimentSummary& s_t,
                          const std::optional<SentimentSummary>& s_o, Var H_t,
                          std::size_t token_count, const SentimentVars& p) {
    const std::size_t d = t.value(H_t).cols();
    if (!s_o) return t.leaf(Matrix(1, d));
    Var pooled = t.mean_rows(t.slice_rows(H_t, 1, token_count));
    Var stats = t.leaf(summary_stats_row(s_t, *s_o));
    Var x = t.concat_cols({stats, pooled});
    Var h = t.tanh_(t.add_rowvec(t.matmul_(x, p.W1), p.b1));
    return t.add_rowvec(t.matmul_(h, p.W2), p.b2);
}

}  // namespace micl

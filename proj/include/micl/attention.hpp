#pragma once

#include <cmath>
#include <string>

#include "micl/autodiff.hpp"
#include "micl/params.hpp"

namespace micl {

// Single-head scaled dot-product attention with residual connection on the
// query side. No positional term lives inside the layer.
struct AttnVars {
    Var Wq, Wk, Wv, Wo;  // d x d
    Var bq, bk, bv, bo;  // 1 x d

    static void register_params(ParamStore& ps, const std::string& prefix, std::size_t d) {
        for (const char* w : {"Wq", "Wk", "Wv", "Wo"}) ps.add(prefix + "." + w, d, d);
        for (const char* b : {"bq", "bk", "bv", "bo"})
            ps.add(prefix + "." + b, 1, d, InitKind::zero);
    }

    static AttnVars bind(const TapeParams& tp, const std::string& prefix) {
        return AttnVars{tp(prefix + ".Wq"), tp(prefix + ".Wk"), tp(prefix + ".Wv"),
                        tp(prefix + ".Wo"), tp(prefix + ".bq"), tp(prefix + ".bk"),
                        tp(prefix + ".bv"), tp(prefix + ".bo")};
    }
};

struct AttnOut {
    Var out;      // Lq x d
    Var weights;  // Lq x Lk, rows sum to 1
};

inline AttnOut cross_attention(Tape& t, Var Q, Var K, Var V, const AttnVars& p) {
    const std::size_t d = t.value(Q).cols();
    if (t.value(K).cols() != d || t.value(V).cols() != d)
        throw std::invalid_argument("cross_attention: dimension mismatch");
    if (t.value(K).rows() != t.value(V).rows())
        throw std::invalid_argument("cross_attention: K/V length mismatch");
    Var Qp = t.add_rowvec(t.matmul_(Q, p.Wq), p.bq);
    Var Kp = t.add_rowvec(t.matmul_(K, p.Wk), p.bk);
    Var Vp = t.add_rowvec(t.matmul_(V, p.Wv), p.bv);
    Var scores = t.scale(t.matmul_(Qp, t.transpose(Kp)), 1.0 / std::sqrt(static_cast<double>(d)));
    Var weights = t.softmax_rows(scores);
    Var ctx = t.add_rowvec(t.matmul_(t.matmul_(weights, Vp), p.Wo), p.bo);
    return AttnOut{t.add(Q, ctx), weights};
}

inline AttnOut self_attention(Tape& t, Var X, const AttnVars& p) {
    return cross_attention(t, X, X, X, p);
}

}  // namespace micl

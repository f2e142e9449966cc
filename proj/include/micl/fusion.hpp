#pragma once

#include <stdexcept>
#include <string>

#include "micl/attention.hpp"
#include "micl/autodiff.hpp"
#include "micl/params.hpp"

namespace micl {

// Non-negative two-class evidence from one view's classifier head.
struct Evidence {
    double e0 = 0.0;
    double e1 = 0.0;
};

// Subjective-logic quantities for binary classification (K = 2):
// S = (e0+1) + (e1+1), b_k = e_k / S, u = 2 / S, c = 1 - u.
struct Credibility {
    double c = 0.0;
    double u = 1.0;
    double b0 = 0.0;
    double b1 = 0.0;
};

inline Credibility credibility(const Evidence& e) {
    if (e.e0 < 0.0 || e.e1 < 0.0) throw std::invalid_argument("credibility: negative evidence");
    const double S = (e.e0 + 1.0) + (e.e1 + 1.0);
    Credibility c;
    c.b0 = e.e0 / S;
    c.b1 = e.e1 / S;
    c.u = 2.0 / S;
    c.c = (e.e0 + e.e1) / S;
    return c;
}

// ---------------------------------------------------------------------------
// Tape-side heads and fusion.

struct EvidenceHeadVars {
    Var W;  // d x 2
    Var b;  // 1 x 2

    static void register_params(ParamStore& ps, const std::string& prefix, std::size_t d) {
        ps.add(prefix + ".W", d, 2);
        ps.add(prefix + ".b", 1, 2, InitKind::zero);
    }
    static EvidenceHeadVars bind(const TapeParams& tp, const std::string& prefix) {
        return EvidenceHeadVars{tp(prefix + ".W"), tp(prefix + ".b")};
    }
};

// Linear head to 2 logits, then softplus; both components non-negative.
inline Var view_evidence(Tape& t, Var f, const EvidenceHeadVars& p) {
    return t.softplus(t.add_rowvec(t.matmul_(f, p.W), p.b));
}

// c = (e0 + e1) / (e0 + e1 + 2), as a 1x1 node.
inline Var credibility_var(Tape& t, Var evidence) {
    Var total = t.sum_all(evidence);
    return t.div(total, t.add_const(total, 2.0));
}

// Views stacked as rows, each scaled by its credibility, one self-attention
// layer over the 3 rows, mean-pooled to a single vector.
inline Var fuse(Tape& t, Var f_w, Var f_e, Var f_s, Var c_w, Var c_e, Var c_s,
                const AttnVars& p) {
    Var stacked = t.concat_rows({t.mul_scalar(f_w, c_w), t.mul_scalar(f_e, c_e),
                                 t.mul_scalar(f_s, c_s)});
    Var att = self_attention(t, stacked, p).out;
    return t.mean_rows(att);
}

struct ClassifierVars {
    Var W;  // d x 1
    Var b;  // 1 x 1

    static void register_params(ParamStore& ps, std::size_t d) {
        ps.add("clf.W", d, 1);
        ps.add("clf.b", 1, 1, InitKind::zero);
    }
    static ClassifierVars bind(const TapeParams& tp) {
        return ClassifierVars{tp("clf.W"), tp("clf.b")};
    }
};

struct Prediction {
    Var logit;  // 1 x 1
    Var prob;   // 1 x 1, logistic(logit)
};

inline Prediction predict(Tape& t, Var x, const ClassifierVars& p) {
    Var logit = t.add(t.matmul_(x, p.W), p.b);
    return Prediction{logit, t.sigmoid(logit)};
}

}  // namespace micl

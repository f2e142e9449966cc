#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace micl {

// Binary classification metrics. Positive class = sarcastic (label 1).
// Undefined 0/0 ratios resolve to 0 and set the degenerate flag.
struct Metrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    double precision = 0.0;  // positive class
    double recall = 0.0;
    double f1 = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    bool degenerate = false;  // some ratio was 0/0
};

namespace detail {
inline double safe_ratio(double num, double den, bool& flag) {
    if (den == 0.0) {
        flag = true;
        return 0.0;
    }
    return num / den;
}
inline double f1_of(double p, double r, bool& flag) {
    return safe_ratio(2.0 * p * r, p + r, flag);
}
}  // namespace detail

inline Metrics compute_metrics(const std::vector<int>& labels, const std::vector<int>& preds) {
    if (labels.empty() || labels.size() != preds.size())
        throw std::invalid_argument("compute_metrics: bad input sizes");
    Metrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1)
            preds[i] == 1 ? ++m.tp : ++m.fn;
        else
            preds[i] == 1 ? ++m.fp : ++m.tn;
    }
    const double n = static_cast<double>(labels.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.precision = detail::safe_ratio(m.tp, m.tp + m.fp, m.degenerate);
    m.recall = detail::safe_ratio(m.tp, m.tp + m.fn, m.degenerate);
    m.f1 = detail::f1_of(m.precision, m.recall, m.degenerate);
    const double p0 = detail::safe_ratio(m.tn, m.tn + m.fn, m.degenerate);
    const double r0 = detail::safe_ratio(m.tn, m.tn + m.fp, m.degenerate);
    const double f0 = detail::f1_of(p0, r0, m.degenerate);
    m.macro_precision = 0.5 * (m.precision + p0);
    m.macro_recall = 0.5 * (m.recall + r0);
    m.macro_f1 = 0.5 * (m.f1 + f0);
    return m;
}

}  // namespace micl

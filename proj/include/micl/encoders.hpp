#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "micl/attention.hpp"
#include "micl/autodiff.hpp"
#include "micl/params.hpp"
#include "micl/text.hpp"

namespace micl {

// Toy trainable stand-ins for the pretrained backbones. Output contract:
// (L+1) x d with row 0 the summary ([CLS]) state.

struct EncoderConfig {
    std::size_t d = 32;
    std::size_t depth = 2;  // self-attention layers, including the final one
    std::size_t vocab_size = 1024;
    std::size_t patch_dim = 8;
    std::size_t max_len = 64;
};

inline void register_text_encoder(ParamStore& ps, const EncoderConfig& cfg) {
    ps.add("text.tok_embed", cfg.vocab_size, cfg.d);
    ps.add("text.cls", 1, cfg.d);
    ps.add("text.pos", cfg.max_len, cfg.d);
    for (std::size_t l = 0; l < cfg.depth; ++l)
        AttnVars::register_params(ps, "text.layer" + std::to_string(l), cfg.d);
}

inline void register_image_encoder(ParamStore& ps, const EncoderConfig& cfg) {
    ps.add("img.patch_proj", cfg.patch_dim, cfg.d);
    ps.add("img.patch_bias", 1, cfg.d, InitKind::zero);
    ps.add("img.cls", 1, cfg.d);
    ps.add("img.pos", cfg.max_len, cfg.d);
    for (std::size_t l = 0; l < cfg.depth; ++l)
        AttnVars::register_params(ps, "img.layer" + std::to_string(l), cfg.d);
}

// embed(concat(text, ocr)) with a leading [CLS] row, positions, then the
// attention stack. Returns (|text| + |ocr| + 1) x d.
inline Var encode_text(Tape& t, const TapeParams& tp, const EncoderConfig& cfg,
                       const std::vector<TokenId>& text_tokens,
                       const std::vector<TokenId>& ocr_tokens) {
    if (text_tokens.empty()) throw std::invalid_argument("encode_text: empty text");
    std::vector<std::size_t> ids;
    ids.reserve(text_tokens.size() + ocr_tokens.size());
    for (TokenId id : text_tokens) ids.push_back(id);
    for (TokenId id : ocr_tokens) ids.push_back(id);
    for (std::size_t id : ids)
        if (id >= cfg.vocab_size) throw std::out_of_range("encode_text: token id outside vocabulary");
    if (ids.size() + 1 > cfg.max_len)
        throw std::invalid_argument("encode_text: sequence longer than max_len");

    Var emb = t.gather_rows(tp("text.tok_embed"), ids);
    Var seq = t.concat_rows({tp("text.cls"), emb});
    seq = t.add(seq, t.slice_rows(tp("text.pos"), 0, ids.size() + 1));
    for (std::size_t l = 0; l < cfg.depth; ++l)
        seq = self_attention(t, seq, AttnVars::bind(tp, "text.layer" + std::to_string(l))).out;
    return seq;
}

// Linear patch projection with [CLS] and positions, then the attention
// stack. Returns (n_V + 1) x d.
inline Var encode_image(Tape& t, const TapeParams& tp, const EncoderConfig& cfg,
                        const Matrix& patches) {
    if (patches.rows() < 1) throw std::invalid_argument("encode_image: need at least one patch");
    if (patches.cols() != cfg.patch_dim)
        throw std::invalid_argument("encode_image: patch dimension mismatch");
    if (patches.rows() + 1 > cfg.max_len)
        throw std::invalid_argument("encode_image: too many patches for max_len");

    Var raw = t.leaf(patches);
    Var proj = t.add_rowvec(t.matmul_(raw, tp("img.patch_proj")), tp("img.patch_bias"));
    Var seq = t.concat_rows({tp("img.cls"), proj});
    seq = t.add(seq, t.slice_rows(tp("img.pos"), 0, patches.rows() + 1));
    for (std::size_t l = 0; l < cfg.depth; ++l)
        seq = self_attention(t, seq, AttnVars::bind(tp, "img.layer" + std::to_string(l))).out;
    return seq;
}

}  // namespace micl

#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "micl/attention.hpp"
#include "micl/autodiff.hpp"
#include "micl/data.hpp"
#include "micl/encoders.hpp"
#include "micl/fusion.hpp"
#include "micl/objective.hpp"
#include "micl/params.hpp"
#include "micl/text.hpp"
#include "micl/views.hpp"

namespace micl {

struct ModelConfig {
    std::size_t d = 32;
    std::size_t encoder_depth = 2;
    std::size_t gat_depth = 2;
    std::size_t vocab_size = 1024;
    std::size_t patch_dim = 8;
    std::size_t max_len = 64;
    std::size_t edge_window = 2;
    double edge_threshold = 0.6;
    double tau = 0.07;
    double lambda = 1.0;
    bool use_credibility = true;

    EncoderConfig encoder() const {
        return EncoderConfig{d, encoder_depth, vocab_size, patch_dim, max_len};
    }
};

inline void to_json(nlohmann::ordered_json& j, const ModelConfig& c) {
    j = nlohmann::ordered_json{{"d", c.d},
                               {"encoder_depth", c.encoder_depth},
                               {"gat_depth", c.gat_depth},
                               {"vocab_size", c.vocab_size},
                               {"patch_dim", c.patch_dim},
                               {"max_len", c.max_len},
                               {"edge_window", c.edge_window},
                               {"edge_threshold", c.edge_threshold},
                               {"tau", c.tau},
                               {"lambda", c.lambda},
                               {"use_credibility", c.use_credibility}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d = j.at("d").get<std::size_t>();
    c.encoder_depth = j.at("encoder_depth").get<std::size_t>();
    c.gat_depth = j.at("gat_depth").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.patch_dim = j.at("patch_dim").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.edge_window = j.at("edge_window").get<std::size_t>();
    c.edge_threshold = j.at("edge_threshold").get<double>();
    c.tau = j.at("tau").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.use_credibility = j.at("use_credibility").get<bool>();
    return c;
}

struct SampleOutput {
    Var prob;       // 1 x 1
    Var ce;         // 1 x 1
    double c_w = 0.0, c_e = 0.0, c_s = 0.0;
};

struct BatchOutput {
    Var loss;  // 1 x 1, l_ce + lambda * l_cl
    Var l_ce;
    Var l_cl;
    std::vector<SampleOutput> per_sample;
};

// The full three-view model. Owns the parameter store; forward passes build
// nodes on a caller-provided tape.
class Model {
public:
    explicit Model(const ModelConfig& cfg, const Lexicon& lexicon = Lexicon::builtin())
        : cfg_(cfg), tokenizer_(cfg.vocab_size), lexicon_(lexicon),
          edge_provider_(sliding_window_edges(cfg.edge_window)) {
        register_text_encoder(store_, cfg.encoder());
        register_image_encoder(store_, cfg.encoder());
        TokenPatchVars::register_params(store_, cfg.d);
        EntityObjectVars::register_params(store_, cfg.d, cfg.gat_depth);
        SentimentVars::register_params(store_, cfg.d);
        EvidenceHeadVars::register_params(store_, "head_w", cfg.d);
        EvidenceHeadVars::register_params(store_, "head_e", cfg.d);
        EvidenceHeadVars::register_params(store_, "head_s", cfg.d);
        AttnVars::register_params(store_, "fusion.attn", cfg.d);
        ClassifierVars::register_params(store_, cfg.d);
    }

    void init(std::uint64_t seed) { store_.init(seed, cfg_.d); }

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }
    const Lexicon& lexicon() const { return lexicon_; }
    void set_edge_provider(EdgeProvider p) { edge_provider_ = std::move(p); }

    SampleOutput forward_sample(Tape& t, const TapeParams& tp, const Sample& s) const {
        const auto enc = cfg_.encoder();
        const auto text_ids = tokenizer_.encode(s.words);
        const std::vector<TokenId> ocr_ids =
            s.ocr_words ? tokenizer_.encode(*s.ocr_words) : std::vector<TokenId>{};

        Var H_t = encode_text(t, tp, enc, text_ids, ocr_ids);
        Var H_v = encode_image(t, tp, enc, s.image.patches);

        // token-patch view
        Var f_w = token_patch_view(t, H_t, H_v, TokenPatchVars::bind(tp));

        // entity-object view; graph structure is built from current values
        // and treated as fixed during the pass
        const std::size_t n_tok = text_ids.size() + ocr_ids.size();
        std::vector<TokenId> all_ids = text_ids;
        all_ids.insert(all_ids.end(), ocr_ids.begin(), ocr_ids.end());
        Var text_nodes = t.slice_rows(H_t, 1, n_tok);
        Var vis_nodes = t.slice_rows(H_v, 1, s.image.patch_count());
        auto text_graph = build_text_graph(t.value(text_nodes), all_ids, edge_provider_);
        auto vis_graph = build_visual_graph(t.value(vis_nodes), cfg_.edge_threshold);
        Var f_e = entity_object_view(t, text_nodes, text_graph.adjacency, vis_nodes,
                                     vis_graph.adjacency,
                                     EntityObjectVars::bind(tp, cfg_.gat_depth));

        // sentiment view
        const auto s_t = sentiment_polarity(s.words, lexicon_);
        std::optional<SentimentSummary> s_o;
        if (s.ocr_words) s_o = sentiment_polarity(*s.ocr_words, lexicon_);
        Var f_s = sentiment_view(t, s_t, s_o, H_t, n_tok, SentimentVars::bind(tp));

        // evidence and credibility per view
        Var ev_w = view_evidence(t, f_w, EvidenceHeadVars::bind(tp, "head_w"));
        Var ev_e = view_evidence(t, f_e, EvidenceHeadVars::bind(tp, "head_e"));
        Var ev_s = view_evidence(t, f_s, EvidenceHeadVars::bind(tp, "head_s"));
        Var c_w = credibility_var(t, ev_w);
        Var c_e = credibility_var(t, ev_e);
        Var c_s = credibility_var(t, ev_s);

        Var w_w = c_w, w_e = c_e, w_s = c_s;
        if (!cfg_.use_credibility) {
            w_w = t.scalar(1.0);
            w_e = t.scalar(1.0);
            w_s = t.scalar(1.0);
        }
        Var x = fuse(t, f_w, f_e, f_s, w_w, w_e, w_s, AttnVars::bind(tp, "fusion.attn"));
        Prediction pred = predict(t, x, ClassifierVars::bind(tp));

        SampleOutput out;
        out.prob = pred.prob;
        out.ce = cross_entropy_var(t, pred.prob, s.label);
        out.c_w = t.value(c_w)(0, 0);
        out.c_e = t.value(c_e)(0, 0);
        out.c_s = t.value(c_s)(0, 0);
        e_t_last_ = t.slice_rows(H_t, 0, 1);
        e_v_last_ = t.slice_rows(H_v, 0, 1);
        return out;
    }

    BatchOutput forward_batch(Tape& t, const TapeParams& tp,
                              const std::vector<const Sample*>& batch,
                              bool with_contrastive = true) const {
        if (batch.empty()) throw std::invalid_argument("forward_batch: empty batch");
        BatchOutput out;
        std::vector<Var> ces, e_ts, e_vs;
        std::vector<int> labels;
        for (const Sample* s : batch) {
            out.per_sample.push_back(forward_sample(t, tp, *s));
            ces.push_back(out.per_sample.back().ce);
            e_ts.push_back(e_t_last_);
            e_vs.push_back(e_v_last_);
            labels.push_back(s->label);
        }
        out.l_ce = t.mean_rows(t.concat_rows(ces));
        if (with_contrastive && cfg_.lambda > 0.0 && batch.size() >= 2) {
            Var E_t = t.concat_rows(e_ts);
            Var E_v = t.concat_rows(e_vs);
            out.l_cl = contrastive_loss_var(t, E_t, E_v, labels, cfg_.tau);
        } else {
            out.l_cl = t.scalar(0.0);
        }
        out.loss = t.add(out.l_ce, t.scale(out.l_cl, cfg_.lambda));
        return out;
    }

    // ---- checkpointing ----

    void save(const std::string& path) const {
        nlohmann::ordered_json j;
        j["format"] = "micl-checkpoint";
        j["version"] = 1;
        nlohmann::ordered_json cj;
        to_json(cj, cfg_);
        j["config"] = cj;
        nlohmann::ordered_json pj;
        for (const auto& it : store_.items()) {
            nlohmann::ordered_json tj;
            tj["rows"] = it.value.rows();
            tj["cols"] = it.value.cols();
            tj["data"] = it.value.data();
            pj[it.name] = std::move(tj);
        }
        j["params"] = std::move(pj);
        std::ofstream out(path);
        if (!out) throw std::runtime_error("Model::save: cannot open " + path);
        out << j.dump() << '\n';
    }

    static Model load(const std::string& path, const Lexicon& lexicon = Lexicon::builtin()) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("Model::load: cannot open " + path);
        nlohmann::json j;
        in >> j;
        if (j.value("format", "") != "micl-checkpoint")
            throw std::runtime_error("Model::load: not a checkpoint file");
        if (j.value("version", 0) != 1)
            throw std::runtime_error("Model::load: unsupported checkpoint version");
        Model m(model_config_from_json(j.at("config")), lexicon);
        for (auto& it : m.store_.items()) {
            const auto& tj = j.at("params").at(it.name);
            if (tj.at("rows").get<std::size_t>() != it.value.rows() ||
                tj.at("cols").get<std::size_t>() != it.value.cols())
                throw std::runtime_error("Model::load: shape mismatch for " + it.name);
            it.value.data() = tj.at("data").get<std::vector<double>>();
        }
        return m;
    }

private:
    ModelConfig cfg_;
    ParamStore store_;
    Tokenizer tokenizer_;
    Lexicon lexicon_;
    EdgeProvider edge_provider_;

    // summary rows of the most recent forward_sample, consumed by forward_batch
    mutable Var e_t_last_{};
    mutable Var e_v_last_{};
};

}  // namespace micl

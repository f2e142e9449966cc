#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "micl/matrix.hpp"
#include "micl/rng.hpp"
#include "micl/text.hpp"

namespace micl {

enum class Origin {
    original,
    aug_text_flip,
    aug_text_para,
    aug_img_crop,
    aug_img_swap,
    aug_img_style,
    aug_img_regen,
};

inline const char* origin_name(Origin o) {
    switch (o) {
        case Origin::original: return "original";
        case Origin::aug_text_flip: return "aug_text_flip";
        case Origin::aug_text_para: return "aug_text_para";
        case Origin::aug_img_crop: return "aug_img_crop";
        case Origin::aug_img_swap: return "aug_img_swap";
        case Origin::aug_img_style: return "aug_img_style";
        case Origin::aug_img_regen: return "aug_img_regen";
    }
    return "?";
}

inline std::optional<Origin> origin_from_name(const std::string& s) {
    for (Origin o : {Origin::original, Origin::aug_text_flip, Origin::aug_text_para,
                     Origin::aug_img_crop, Origin::aug_img_swap, Origin::aug_img_style,
                     Origin::aug_img_regen})
        if (s == origin_name(o)) return o;
    return std::nullopt;
}

struct PatchGrid {
    Matrix patches;  // n_V x p, raw patch features

    std::size_t patch_count() const { return patches.rows(); }
    std::size_t patch_dim() const { return patches.cols(); }
};

struct Sample {
    std::string id;
    std::vector<std::string> words;                      // caption tokens
    std::optional<std::vector<std::string>> ocr_words;   // absent when no OCR text
    PatchGrid image;
    int label = 0;  // 0 = non-sarcastic, 1 = sarcastic
    Origin origin = Origin::original;
    std::string source_id;  // empty for originals

    bool has_ocr() const { return ocr_words.has_value(); }
};

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

struct Dataset {
    std::vector<Sample> samples;
    Split split = Split::train;

    std::array<std::size_t, 2> label_counts() const {
        std::array<std::size_t, 2> c{0, 0};
        for (const auto& s : samples) c[static_cast<std::size_t>(s.label)]++;
        return c;
    }
};

// ---------------------------------------------------------------------------
// File format: one JSON object per line with fields
//   id, text, ocr (optional), label, patches (n_V x p), origin, source_id.

struct LoadIssue {
    std::string record_id;  // "?" when the record has no readable id
    std::string message;
};

struct LoadReport {
    Dataset dataset;
    std::vector<LoadIssue> issues;
};

inline LoadReport load_dataset(const std::string& path, Split split) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    LoadReport rep;
    rep.dataset.split = split;
    std::unordered_map<std::string, bool> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::string id = "?";
        try {
            auto j = nlohmann::json::parse(line);
            if (j.contains("id")) id = j.at("id").get<std::string>();
            if (!j.contains("label")) throw std::runtime_error("missing label");
            if (!j.at("label").is_number_integer()) throw std::runtime_error("label is not an integer");
            const int label = j.at("label").get<int>();
            if (label != 0 && label != 1) throw std::runtime_error("label not in {0,1}");
            if (!j.contains("text")) throw std::runtime_error("missing text");
            auto words = Tokenizer::split(j.at("text").get<std::string>());
            if (words.empty()) throw std::runtime_error("empty text");
            if (!j.contains("patches")) throw std::runtime_error("missing patches");
            const auto& jp = j.at("patches");
            if (!jp.is_array() || jp.empty()) throw std::runtime_error("patches must be a non-empty array");
            const std::size_t p = jp.at(0).size();
            if (p == 0) throw std::runtime_error("empty patch row");
            Matrix patches(jp.size(), p);
            for (std::size_t i = 0; i < jp.size(); ++i) {
                if (jp.at(i).size() != p) throw std::runtime_error("ragged patch rows");
                for (std::size_t k = 0; k < p; ++k) {
                    const double v = jp.at(i).at(k).get<double>();
                    if (!std::isfinite(v)) throw std::runtime_error("non-finite patch value");
                    patches(i, k) = v;
                }
            }
            if (seen.count(id)) throw std::runtime_error("duplicate id");
            Sample s;
            s.id = id;
            s.words = std::move(words);
            if (j.contains("ocr") && !j.at("ocr").is_null())
                s.ocr_words = Tokenizer::split(j.at("ocr").get<std::string>());
            s.image.patches = std::move(patches);
            s.label = label;
            if (j.contains("origin")) {
                auto o = origin_from_name(j.at("origin").get<std::string>());
                if (!o) throw std::runtime_error("unknown origin");
                s.origin = *o;
            }
            if (j.contains("source_id") && !j.at("source_id").is_null())
                s.source_id = j.at("source_id").get<std::string>();
            seen[id] = true;
            rep.dataset.samples.push_back(std::move(s));
        } catch (const std::exception& e) {
            rep.issues.push_back({id == "?" ? "line " + std::to_string(lineno) : id, e.what()});
        }
    }
    return rep;
}

inline std::string join_words(const std::vector<std::string>& ws) {
    std::string out;
    for (std::size_t i = 0; i < ws.size(); ++i) {
        if (i) out += ' ';
        out += ws[i];
    }
    return out;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    for (const auto& s : ds.samples) {
        nlohmann::ordered_json j;
        j["id"] = s.id;
        j["text"] = join_words(s.words);
        if (s.ocr_words) j["ocr"] = join_words(*s.ocr_words);
        j["label"] = s.label;
        auto rows = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < s.image.patches.rows(); ++i) {
            auto row = nlohmann::ordered_json::array();
            for (std::size_t k = 0; k < s.image.patches.cols(); ++k) row.push_back(s.image.patches(i, k));
            rows.push_back(std::move(row));
        }
        j["patches"] = std::move(rows);
        j["origin"] = origin_name(s.origin);
        if (!s.source_id.empty()) j["source_id"] = s.source_id;
        out << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic corpus. Each sample plants a text polarity sign and an image
// polarity sign; label = 1 iff the signs differ.

struct SynthConfig {
    std::size_t size = 1000;
    std::size_t vocab_size = 1024;
    std::size_t n_patches = 16;
    std::size_t patch_dim = 8;
    double ocr_probability = 1.0;  // fraction of samples that carry OCR text
    double image_signal = 0.5;     // patch mean shift carrying the image polarity
};

namespace detail {
inline const std::vector<std::string>& neutral_words() {
    static const std::vector<std::string> w = {
        "the", "a",      "this",   "that",  "day",    "weather", "photo", "picture",
        "traffic", "monday", "coffee", "meeting", "morning", "city",  "town",  "train",
    };
    return w;
}
inline std::vector<std::string> words_with_sign(const Lexicon& lx, int sign) {
    std::vector<std::string> out;
    for (const auto& [w, p] : lx.polarity)
        if ((sign > 0) == (p > 0)) out.push_back(w);
    std::sort(out.begin(), out.end());
    return out;
}
}  // namespace detail

inline Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed,
                                  const Lexicon& lx = Lexicon::builtin()) {
    if (cfg.size < 2) throw std::invalid_argument("generate_synthetic: size must be >= 2");
    if (cfg.vocab_size < 4) throw std::invalid_argument("generate_synthetic: vocab size must be >= 4");
    Rng rng(seed);
    const auto& neutral = detail::neutral_words();
    const auto pos_words = detail::words_with_sign(lx, +1);
    const auto neg_words = detail::words_with_sign(lx, -1);
    Dataset ds;
    ds.split = Split::train;
    for (std::size_t k = 0; k < cfg.size; ++k) {
        const int text_sign = rng.uniform() < 0.5 ? +1 : -1;
        const int img_sign = rng.uniform() < 0.5 ? +1 : -1;
        Sample s;
        {
            std::ostringstream oss;
            oss << "s" << std::setw(5) << std::setfill('0') << k;
            s.id = oss.str();
        }
        const std::size_t n_neutral = 2 + rng.uniform_index(3);
        for (std::size_t i = 0; i < n_neutral; ++i)
            s.words.push_back(neutral[rng.uniform_index(neutral.size())]);
        const auto& senti = text_sign > 0 ? pos_words : neg_words;
        const std::size_t n_senti = 1 + rng.uniform_index(2);
        for (std::size_t i = 0; i < n_senti; ++i)
            s.words.push_back(senti[rng.uniform_index(senti.size())]);
        rng.shuffle(s.words);
        if (rng.uniform() < cfg.ocr_probability) {
            const auto& osenti = img_sign > 0 ? pos_words : neg_words;
            std::vector<std::string> ocr;
            ocr.push_back(neutral[rng.uniform_index(neutral.size())]);
            ocr.push_back(osenti[rng.uniform_index(osenti.size())]);
            s.ocr_words = std::move(ocr);
        }
        s.image.patches = Matrix(cfg.n_patches, cfg.patch_dim);
        for (std::size_t i = 0; i < cfg.n_patches; ++i)
            for (std::size_t j = 0; j < cfg.patch_dim; ++j)
                s.image.patches(i, j) = img_sign * cfg.image_signal + rng.uniform(-0.3, 0.3);
        s.label = (text_sign != img_sign) ? 1 : 0;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Augmentation. Deterministic surrogates for the generative augmenters,
// behind per-strategy functions; every operation is a pure function of
// (sample, rng state).

enum class TextStrategy { flip, paraphrase };
enum class ImageStrategy { crop, swap, style, regen };

// flip: replace sentiment-bearing words by antonyms and invert the label.
// paraphrase: synonym substitution, label preserved.
// Returns nullopt when the sample is not augmentable under the strategy.
inline std::optional<Sample> augment_text(const Sample& sample, TextStrategy strategy, Rng& rng,
                                          const Lexicon& lx = Lexicon::builtin()) {
    if (sample.origin != Origin::original)
        throw std::invalid_argument("augment_text: sample is not an original");
    Sample out = sample;
    out.source_id = sample.id;
    if (strategy == TextStrategy::flip) {
        bool flipped = false;
        for (auto& w : out.words) {
            auto it = lx.antonym.find(w);
            if (it != lx.antonym.end() && lx.polarity.count(w)) {
                w = it->second;
                flipped = true;
            }
        }
        if (!flipped) return std::nullopt;
        out.label = 1 - sample.label;
        out.origin = Origin::aug_text_flip;
        out.id = sample.id + "#tf";
    } else {
        for (auto& w : out.words) {
            auto it = lx.synonym.find(w);
            if (it != lx.synonym.end() && rng.uniform() < 0.5) w = it->second;
        }
        out.origin = Origin::aug_text_para;
        out.id = sample.id + "#tp";
    }
    return out;
}

inline std::optional<Sample> augment_image(const Sample& sample, ImageStrategy strategy,
                                           const std::vector<const Sample*>& same_label_pool,
                                           Rng& rng) {
    Sample out = sample;
    out.source_id = sample.id;
    const Matrix& src = sample.image.patches;
    const std::size_t n = src.rows();
    switch (strategy) {
        case ImageStrategy::crop: {
            // contiguous sub-range re-tiled cyclically back to n patches
            const std::size_t keep = std::max<std::size_t>(1, (3 * n) / 4);
            const std::size_t start = rng.uniform_index(n - keep + 1);
            Matrix cropped(n, src.cols());
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < src.cols(); ++j)
                    cropped(i, j) = src(start + (i % keep), j);
            out.image.patches = std::move(cropped);
            out.origin = Origin::aug_img_crop;
            out.id = sample.id + "#ic";
            break;
        }
        case ImageStrategy::swap: {
            if (same_label_pool.empty()) return std::nullopt;
            const Sample* donor = same_label_pool[rng.uniform_index(same_label_pool.size())];
            out.image = donor->image;
            out.origin = Origin::aug_img_swap;
            out.id = sample.id + "#is";
            break;
        }
        case ImageStrategy::style: {
            // per-channel affine perturbation, surrogate for style transfer
            Matrix styled = src;
            for (std::size_t j = 0; j < src.cols(); ++j) {
                const double a = rng.uniform(0.8, 1.2);
                const double b = rng.uniform(-0.1, 0.1);
                for (std::size_t i = 0; i < n; ++i) styled(i, j) = a * src(i, j) + b;
            }
            out.image.patches = std::move(styled);
            out.origin = Origin::aug_img_style;
            out.id = sample.id + "#iy";
            break;
        }
        case ImageStrategy::regen: {
            // resample conditioned on the planted image polarity (sign of the
            // patch mean), surrogate for caption-conditioned generation
            double mean = 0.0;
            for (double v : src.data()) mean += v;
            mean /= static_cast<double>(src.size());
            const double pol = mean >= 0.0 ? 0.5 : -0.5;
            Matrix fresh(n, src.cols());
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < src.cols(); ++j) fresh(i, j) = pol + rng.uniform(-0.3, 0.3);
            out.image.patches = std::move(fresh);
            out.origin = Origin::aug_img_regen;
            out.id = sample.id + "#ig";
            break;
        }
    }
    return out;
}

struct AugmentationPlan {
    bool text_enabled = true;
    bool image_enabled = true;
    // text flip : paraphrase = 1 : 1; image crop : swap : style : regen = 3 : 3 : 2 : 2
    std::array<std::size_t, 2> text_weights{1, 1};
    std::array<std::size_t, 4> image_weights{3, 3, 2, 2};
};

struct AugmentationSummary {
    std::map<std::string, std::size_t> strategy_counts;
    std::vector<std::string> fallbacks;  // "id: flip -> paraphrase" style notes
};

namespace detail {
// Exact partition of n into weighted buckets: bucket i covers
// [floor(cum_{i-1} n / W), floor(cum_i n / W)). Deterministic, ratio-exact
// whenever W divides n.
template <std::size_t K>
inline std::array<std::size_t, K> partition_counts(std::size_t n, const std::array<std::size_t, K>& w) {
    std::size_t total = 0;
    for (auto x : w) total += x;
    std::array<std::size_t, K> counts{};
    std::size_t cum = 0, prev = 0;
    for (std::size_t i = 0; i < K; ++i) {
        cum += w[i];
        const std::size_t upto = cum * n / total;
        counts[i] = upto - prev;
        prev = upto;
    }
    return counts;
}
}  // namespace detail

// Gives every original exactly one text and one image augmentation, with the
// strategy mix realized exactly over the pass. Strategy assignment follows
// ascending sample-id order.
inline Dataset plan_augmentation(const Dataset& dataset, const AugmentationPlan& plan,
                                 std::uint64_t seed, AugmentationSummary* summary = nullptr,
                                 const Lexicon& lx = Lexicon::builtin()) {
    std::vector<const Sample*> originals;
    for (const auto& s : dataset.samples)
        if (s.origin == Origin::original) originals.push_back(&s);
    std::sort(originals.begin(), originals.end(),
              [](const Sample* a, const Sample* b) { return a->id < b->id; });

    std::array<std::vector<const Sample*>, 2> pools;  // same-label originals per label
    for (const Sample* s : originals) pools[static_cast<std::size_t>(s->label)].push_back(s);

    AugmentationSummary local;
    AugmentationSummary& sum = summary ? *summary : local;
    for (const char* k : {"flip", "paraphrase", "crop", "swap", "style", "regen"})
        sum.strategy_counts[k] = 0;

    Dataset out;
    out.split = dataset.split;
    out.samples = dataset.samples;

    const std::size_t n = originals.size();
    const auto text_counts = detail::partition_counts(n, plan.text_weights);
    const auto image_counts = detail::partition_counts(n, plan.image_weights);

    for (std::size_t i = 0; i < n; ++i) {
        const Sample& src = *originals[i];
        Rng rng(seed ^ fnv1a64(src.id));
        if (plan.text_enabled) {
            TextStrategy ts = i < text_counts[0] ? TextStrategy::flip : TextStrategy::paraphrase;
            auto aug = augment_text(src, ts, rng, lx);
            if (!aug && ts == TextStrategy::flip) {
                sum.fallbacks.push_back(src.id + ": flip -> paraphrase");
                ts = TextStrategy::paraphrase;
                aug = augment_text(src, ts, rng, lx);
            }
            if (aug) {
                sum.strategy_counts[ts == TextStrategy::flip ? "flip" : "paraphrase"]++;
                out.samples.push_back(std::move(*aug));
            }
        }
        if (plan.image_enabled) {
            ImageStrategy is;
            if (i < image_counts[0]) is = ImageStrategy::crop;
            else if (i < image_counts[0] + image_counts[1]) is = ImageStrategy::swap;
            else if (i < image_counts[0] + image_counts[1] + image_counts[2]) is = ImageStrategy::style;
            else is = ImageStrategy::regen;

            std::vector<const Sample*> pool;
            for (const Sample* p : pools[static_cast<std::size_t>(src.label)])
                if (p != &src) pool.push_back(p);
            auto aug = augment_image(src, is, pool, rng);
            if (!aug && is == ImageStrategy::swap) {
                sum.fallbacks.push_back(src.id + ": swap -> crop");
                is = ImageStrategy::crop;
                aug = augment_image(src, is, pool, rng);
            }
            if (aug) {
                const char* key = is == ImageStrategy::crop    ? "crop"
                                  : is == ImageStrategy::swap  ? "swap"
                                  : is == ImageStrategy::style ? "style"
                                                               : "regen";
                sum.strategy_counts[key]++;
                out.samples.push_back(std::move(*aug));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch construction. Originals stay in the same batch as their
// augmentations; groups are shuffled deterministically and packed.

struct Batch {
    std::vector<std::size_t> indices;  // into Dataset::samples
};

inline std::vector<Batch> build_batches(const Dataset& dataset, std::size_t batch_size,
                                        std::uint64_t seed) {
    if (batch_size < 2) throw std::invalid_argument("build_batches: batch_size must be >= 2");
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) by_id[dataset.samples[i].id] = i;

    // group key = the original's id (augmented samples join their source)
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const Sample& s = dataset.samples[i];
        const std::string& key = s.source_id.empty() ? s.id : s.source_id;
        if (!s.source_id.empty() && !by_id.count(s.source_id))
            throw std::runtime_error("build_batches: dangling source_id " + s.source_id);
        groups[key].push_back(i);
    }
    std::vector<std::vector<std::size_t>> group_list;
    std::size_t max_group = 0;
    for (auto& [key, idxs] : groups) {
        max_group = std::max(max_group, idxs.size());
        group_list.push_back(idxs);
    }
    if (max_group > batch_size)
        throw std::invalid_argument("build_batches: batch_size smaller than a sample group");
    Rng rng(seed);
    rng.shuffle(group_list);

    std::vector<Batch> batches;
    Batch cur;
    for (auto& g : group_list) {
        if (cur.indices.size() + g.size() > batch_size && !cur.indices.empty()) {
            batches.push_back(std::move(cur));
            cur = Batch{};
        }
        for (auto i : g) cur.indices.push_back(i);
    }
    if (!cur.indices.empty()) batches.push_back(std::move(cur));
    return batches;
}

}  // namespace micl

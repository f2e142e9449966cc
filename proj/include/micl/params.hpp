#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "micl/autodiff.hpp"
#include "micl/matrix.hpp"
#include "micl/rng.hpp"
#include "micl/text.hpp"

namespace micl {

enum class InitKind { uniform, zero };

// Named parameter tensors. Registration order is fixed by the model
// definition, so checkpoints and optimizer state line up by name.
class ParamStore {
public:
    Matrix& add(const std::string& name, std::size_t rows, std::size_t cols,
                InitKind init = InitKind::uniform) {
        if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate " + name);
        index_[name] = items_.size();
        items_.push_back(Item{name, Matrix(rows, cols), init});
        return items_.back().value;
    }

    Matrix& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("ParamStore: unknown " + name);
        return items_[it->second].value;
    }
    const Matrix& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("ParamStore: unknown " + name);
        return items_[it->second].value;
    }

    struct Item {
        std::string name;
        Matrix value;
        InitKind init;
    };

    std::vector<Item>& items() { return items_; }
    const std::vector<Item>& items() const { return items_; }

    // Uniform in (-s, s) with s = 1/sqrt(d_model); biases and other
    // zero-init tensors stay zero. Per-tensor streams keyed by name, so the
    // result does not depend on registration order.
    void init(std::uint64_t seed, std::size_t d_model) {
        const double s = 1.0 / std::sqrt(static_cast<double>(d_model));
        for (auto& it : items_) {
            if (it.init == InitKind::zero) {
                for (auto& v : it.value.data()) v = 0.0;
                continue;
            }
            Rng rng(seed ^ fnv1a64(it.name));
            for (auto& v : it.value.data()) v = rng.uniform(-s, s);
        }
    }

private:
    std::vector<Item> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// One tape leaf per parameter, created at the start of a forward pass.
class TapeParams {
public:
    TapeParams(Tape& tape, const ParamStore& store) : tape_(&tape) {
        for (const auto& it : store.items()) vars_[it.name] = tape.leaf(it.value);
    }

    Var operator()(const std::string& name) const {
        auto it = vars_.find(name);
        if (it == vars_.end()) throw std::out_of_range("TapeParams: unknown " + name);
        return it->second;
    }

    const std::unordered_map<std::string, Var>& all() const { return vars_; }

private:
    Tape* tape_;
    std::unordered_map<std::string, Var> vars_;
};

}  // namespace micl

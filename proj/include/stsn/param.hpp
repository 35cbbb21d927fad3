#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stsn/errors.hpp"
#include "stsn/rng.hpp"
#include "stsn/tape.hpp"
#include "stsn/tensor.hpp"

namespace stsn {

namespace detail {

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) initializer shared by all modules.
template <typename Scalar>
Tensor<Scalar> uniform_fan_in(Shape shape, int64_t fan_in, Rng& rng) {
  Scalar bound = Scalar(1) / Scalar(std::sqrt(double(fan_in)));
  return Tensor<Scalar>::uniform(std::move(shape), rng, -bound, bound);
}

}  // namespace detail

/**
 * Named, ordered collection of master parameter tensors. Registration order
 * is the canonical order everywhere: tape binding, optimizer state, and
 * checkpoint layout all follow it, which keeps runs bit-reproducible.
 */
template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
  };

  void add(const std::string& name, Tensor<Scalar> init) {
    if (index_.count(name)) throw contract_error("duplicate parameter: " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{name, std::move(init)});
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<Scalar>& value(const std::string& name) { return entries_[find(name)].value; }
  const Tensor<Scalar>& value(const std::string& name) const {
    return entries_[find(name)].value;
  }

  size_t size() const { return entries_.size(); }
  Entry& entry(size_t i) { return entries_[i]; }
  const Entry& entry(size_t i) const { return entries_[i]; }
  size_t index_of(const std::string& name) const { return find(name); }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

 private:
  size_t find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw contract_error("unknown parameter: " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

/**
 * Per-tape snapshot of a ParamStore: every parameter becomes a leaf (deep
 * copy) on the tape, in registration order. After backward, gradients are
 * read back through the same handles.
 */
template <typename Scalar>
class BoundParams {
 public:
  BoundParams(const ParamStore<Scalar>& store, Tape<Scalar>& tape, bool trainable)
      : store_(&store) {
    vars_.reserve(store.size());
    for (size_t i = 0; i < store.size(); ++i)
      vars_.push_back(tape.leaf(store.entry(i).value, trainable));
  }

  Var<Scalar> operator[](const std::string& name) const {
    return vars_[store_->index_of(name)];
  }

  Var<Scalar> at(size_t i) const { return vars_[i]; }
  size_t size() const { return vars_.size(); }

 private:
  const ParamStore<Scalar>* store_;
  std::vector<Var<Scalar>> vars_;
};

}  // namespace stsn

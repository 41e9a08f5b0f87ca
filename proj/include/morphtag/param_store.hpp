#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "morphtag/rng.hpp"
#include "morphtag/tensor.hpp"

namespace morphtag {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> rms_acc;
  bool trainable = true;
};

// Named parameters in insertion order. Entries are heap-allocated so layer
// pointers stay valid while the store grows or is moved.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Param<T>& add(const std::string& name, Shape shape, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(shape);
    p->rms_acc = Tensor<T>(std::move(shape));
    p->trainable = trainable;
    index_.emplace(name, entries_.size());
    entries_.push_back(std::move(p));
    return *entries_.back();
  }

  Param<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : entries_[it->second].get();
  }
  const Param<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : entries_[it->second].get();
  }

  Param<T>& get(const std::string& name) {
    Param<T>* p = find(name);
    if (!p) throw IndexError("no parameter named '" + name + "'");
    return *p;
  }
  const Param<T>& get(const std::string& name) const {
    const Param<T>* p = find(name);
    if (!p) throw IndexError("no parameter named '" + name + "'");
    return *p;
  }

  std::size_t size() const { return entries_.size(); }
  Param<T>& operator[](std::size_t i) { return *entries_[i]; }
  const Param<T>& operator[](std::size_t i) const { return *entries_[i]; }

  template <typename F>
  void for_each(F&& f) {
    for (auto& p : entries_) f(*p);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& p : entries_) f(static_cast<const Param<T>&>(*p));
  }

  void zero_grad() {
    for (auto& p : entries_) p->grad.zero();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : entries_) n += p->value.size();
    return n;
  }

  // Global L2 norm over trainable gradients, accumulated in entry order.
  double grad_norm() const {
    double sq = 0.0;
    for (const auto& p : entries_) {
      if (!p->trainable) continue;
      for (const T g : p->grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(sq);
  }

  void scale_grads(T factor) {
    for (auto& p : entries_) {
      if (!p->trainable) continue;
      for (T& g : p->grad.values()) g *= factor;
    }
  }

  bool grads_finite() const {
    for (const auto& p : entries_) {
      if (p->trainable && !p->grad.all_finite()) return false;
    }
    return true;
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace morphtag

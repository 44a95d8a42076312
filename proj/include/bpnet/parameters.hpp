#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "bpnet/autograd.hpp"
#include "bpnet/error.hpp"

namespace bpnet {

/// Ordered collection of named trainable leaves. Insertion order is the
/// checkpoint order.
class ParameterSet {
 public:
  ad::Var add(const std::string& name, Matrix value) {
    require(index_.count(name) == 0, ErrorCode::kArgument, "duplicate parameter: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, ad::parameter(std::move(value))});
    return entries_.back().var;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const ad::Var& get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorCode::kArgument, "unknown parameter: " + name);
    return entries_[it->second].var;
  }

  struct Entry {
    std::string name;
    ad::Var var;
  };

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.var.value().size());
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  std::vector<Matrix> snapshot() const {
    std::vector<Matrix> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.var.value());
    return out;
  }

  void restore(const std::vector<Matrix>& values) {
    require(values.size() == entries_.size(), ErrorCode::kArgument, "restore: size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto& v = entries_[i].var.mutable_value();
      require(v.rows() == values[i].rows() && v.cols() == values[i].cols(), ErrorCode::kShape,
              "restore: shape mismatch for " + entries_[i].name);
      v = values[i];
    }
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Glorot-uniform initialisation for a fan_in x fan_out weight.
inline Matrix glorot(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 0.0;  // 0 disables clipping
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamOptions options) : options_(options) {
    for (const auto& e : params.entries()) {
      m_.push_back(Matrix::Zero(e.var.rows(), e.var.cols()));
      v_.push_back(Matrix::Zero(e.var.rows(), e.var.cols()));
    }
  }

  /// Applies one update using the accumulated gradients multiplied by
  /// grad_scale (e.g. 1/batch for a batch mean). Returns the pre-clip norm.
  double step(ParameterSet& params, double grad_scale = 1.0) {
    require(params.size() == m_.size(), ErrorCode::kArgument, "Adam: parameter set changed");
    std::vector<Matrix> grads;
    grads.reserve(params.size());
    double sq = 0.0;
    for (const auto& e : params.entries()) {
      grads.push_back(e.var.grad() * grad_scale);
      sq += grads.back().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (options_.max_grad_norm > 0.0 && norm > options_.max_grad_norm) {
      for (auto& g : grads) g *= options_.max_grad_norm / norm;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * grads[i];
      v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * grads[i].cwiseAbs2();
      params.entries()[i].var.mutable_value().array() -=
          options_.learning_rate * (m_[i].array() / c1) /
          ((v_[i].array() / c2).sqrt() + options_.epsilon);
    }
    return norm;
  }

  long steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

}  // namespace bpnet

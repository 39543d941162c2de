#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "morphkit/tensor.h"

namespace morphkit {

struct Parameter {
  std::string name;
  Tensor value;
};

// Ordered collection of named trainable tensors. Slot indices are stable.
class ParamSet {
 public:
  size_t add(std::string name, Tensor value);

  Parameter& operator[](size_t slot) { return params_.at(slot); }
  const Parameter& operator[](size_t slot) const { return params_.at(slot); }
  size_t size() const { return params_.size(); }
  size_t total_size() const;
  // Returns size() when absent.
  size_t find(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

// Gradient accumulators mirroring a ParamSet.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParamSet& params);

  std::vector<double>& operator[](size_t slot) { return grads_.at(slot); }
  const std::vector<double>& operator[](size_t slot) const { return grads_.at(slot); }
  size_t size() const { return grads_.size(); }

  void zero();
  void add(const GradBuffer& other);
  void scale(double s);
  double norm() const;

  // Set by Tape::backward, cleared by zero().
  bool populated() const { return populated_; }
  void mark_populated() { populated_ = true; }

 private:
  std::vector<std::vector<double>> grads_;
  bool populated_ = false;
};

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  size_t size() const;
  std::span<const double> value() const;
  double item() const;
  Tensor tensor() const;
  // Gradient after Tape::backward; zeros when unreached.
  std::vector<double> grad() const;

 private:
  Tape* tape_ = nullptr;
  uint32_t id_ = 0;
};

// Dynamic reverse-mode tape. Every op appends a node; backward() replays the
// nodes in reverse order. Parameter gradients are accumulated directly into the
// GradBuffer passed at construction (none when it is null).
class Tape {
 public:
  explicit Tape(GradBuffer* sink = nullptr) : sink_(sink) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // A leaf whose gradient is kept on the tape (see Var::grad).
  Var variable(Tensor value);
  // Leaf bound to params[slot]; memoized so each parameter appears once.
  Var param(const ParamSet& params, size_t slot);

  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  friend struct TapeAccess;

  struct Node {
    Shape shape;
    std::vector<double> value;
    const double* ext_value = nullptr;
    std::vector<double> grad;
    double* ext_grad = nullptr;
    bool needs_grad = false;
    std::function<void()> back;

    const double* val() const { return ext_value ? ext_value : value.data(); }
    size_t size() const { return ext_value ? shape_size(shape) : value.size(); }
  };

  double* grad_of(uint32_t id);
  bool has_grad(uint32_t id) const;

  GradBuffer* sink_;
  std::vector<Node> nodes_;
  std::unordered_map<const void*, uint32_t> param_nodes_;
};

namespace ad {

// Matrix product: [m,k]x[k,n] -> [m,n] or [m,k]x[k] -> [m].
Var matmul(Var a, Var b);
// a * b^T: [m,k]x[n,k] -> [m,n].
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// 1-D concatenation.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice(Var a, size_t offset, size_t length);
std::vector<Var> split(Var a, std::span<const size_t> sizes);
Var tanh(Var a);
Var sigmoid(Var a);
// 1-D softmax and numerically stable log-softmax.
Var softmax(Var a);
Var log_softmax(Var a);
// Natural log with inputs floored at kLogFloor.
Var log(Var a);
inline constexpr double kLogFloor = 1e-8;
// Row `id` of a [V,d] table -> [d].
Var gather(Var table, uint32_t id);
// Rows of a [V,d] table -> [n,d].
Var gather_rows(Var table, std::span<const uint32_t> ids);
// Stacks n equal-length vectors into [n,d].
Var stack(std::span<const Var> rows);
// sum_k w[k] * rows[k,:] for w [t] and rows [t,d] -> [d].
Var weighted_sum(Var weights, Var rows);
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
// a[i] as a scalar.
Var pick(Var a, size_t i);
// Additive attention scores v . tanh(keys[k,:] + query) -> [t].
Var additive_scores(Var keys, Var query, Var v);
// (1 - gate) * prev + gate * cand, elementwise.
Var gru_blend(Var gate, Var prev, Var cand);
// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, std::mt19937_64& rng);

}  // namespace ad

}  // namespace morphkit

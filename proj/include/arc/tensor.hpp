#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "arc/error.hpp"
#include "arc/rng.hpp"

namespace arc {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Tape;

// Storage behind a Tensor handle. grad stays empty until backward touches it.
struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  // Registration on the recording tape; serial tells stale slots apart.
  std::uint64_t tape_serial = 0;
  int tape_slot = -1;
};

// Value-semantic handle to shared storage. Copying a Tensor aliases it.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return d_->value.size(); }
  bool is_scalar() const { return numel() == 1; }

  const std::vector<double>& values() const { return d_->value; }
  std::vector<double>& values_mut() { return d_->value; }
  double value() const;  // scalar only
  double at(int i) const { return d_->value[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const;

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    d_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return !d_->grad.empty(); }
  const std::vector<double>& grad() const { return d_->grad; }
  void zero_grad() { d_->grad.assign(d_->value.size(), 0.0); }
  void clear_grad() { d_->grad.clear(); }

  const std::shared_ptr<TensorData>& store() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
  friend Tensor wrap_storage(std::shared_ptr<TensorData>);
};

Tensor wrap_storage(std::shared_ptr<TensorData> d);

// Reverse-mode tape. Constructing a Tape makes it the active recorder for the
// current thread (tapes nest); ops executed while it is active append nodes.
// backward() replays the record in reverse, which is a valid topological
// order because nodes are appended in execution order.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers storage on this tape and returns its adjoint slot.
  int ensure_slot(const std::shared_ptr<TensorData>& td);

  // Adjoint buffer for a slot, zero-filled to n on first touch per backward.
  std::vector<double>& adjoint(int slot, std::size_t n);

  using BackFn = std::function<void(Tape&, const std::vector<double>&)>;
  void record(const std::shared_ptr<TensorData>& out, BackFn back);

  // Accumulates d(root)/d(tensor) into .grad of every reachable
  // requires_grad tensor. Repeated calls accumulate additively.
  void backward(const Tensor& root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    int out_slot;
    BackFn back;
  };
  std::uint64_t serial_;
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<TensorData>> slot_storage_;
  std::vector<std::vector<double>> adj_;
  Tape* prev_;
};

// Active tape of the current thread, or nullptr outside any Tape's lifetime.
Tape* active_tape();

// backward() via the active tape; the usual entry point in training loops.
void backward(const Tensor& root);

}  // namespace arc

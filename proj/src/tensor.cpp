#include "arc/tensor.hpp"

#include <atomic>
#include <sstream>

namespace arc {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw dim_error("non-positive dimension in shape " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor wrap_storage(std::shared_ptr<TensorData> d) { return Tensor(std::move(d)); }

static Tensor make_tensor(Shape shape, std::vector<double> data) {
  auto td = std::make_shared<TensorData>();
  td->shape = std::move(shape);
  td->value = std::move(data);
  return wrap_storage(std::move(td));
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double v) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw dim_error("data length " + std::to_string(data.size()) +
                    " does not match shape " + shape_str(shape));
  }
  return make_tensor(std::move(shape), std::move(data));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = rng.normal(0.0, stddev);
  return make_tensor(std::move(shape), std::move(data));
}

double Tensor::value() const {
  if (numel() != 1) throw dim_error("value() on non-scalar tensor " + shape_str(shape()));
  return d_->value[0];
}

double Tensor::at(int r, int c) const {
  if (rank() != 2) throw dim_error("at(r,c) on tensor of shape " + shape_str(shape()));
  return d_->value[static_cast<std::size_t>(r) * static_cast<std::size_t>(dim(1)) +
                   static_cast<std::size_t>(c)];
}

namespace {
thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_tape_serial{1};
}  // namespace

Tape* active_tape() { return g_active_tape; }

Tape::Tape() : serial_(g_tape_serial.fetch_add(1)), prev_(g_active_tape) {
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

int Tape::ensure_slot(const std::shared_ptr<TensorData>& td) {
  if (td->tape_serial == serial_) return td->tape_slot;
  td->tape_serial = serial_;
  td->tape_slot = static_cast<int>(slot_storage_.size());
  slot_storage_.push_back(td);
  adj_.emplace_back();
  return td->tape_slot;
}

std::vector<double>& Tape::adjoint(int slot, std::size_t n) {
  auto& buf = adj_[static_cast<std::size_t>(slot)];
  if (buf.empty()) buf.assign(n, 0.0);
  return buf;
}

void Tape::record(const std::shared_ptr<TensorData>& out, BackFn back) {
  nodes_.push_back(Node{ensure_slot(out), std::move(back)});
}

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw dim_error("backward expects a scalar, got " + shape_str(root.shape()));
  }
  for (auto& buf : adj_) buf.clear();
  const int root_slot = ensure_slot(root.store());
  if (adj_.size() < slot_storage_.size()) adj_.resize(slot_storage_.size());
  adjoint(root_slot, 1)[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const auto& out_adj = adj_[static_cast<std::size_t>(it->out_slot)];
    if (out_adj.empty()) continue;
    it->back(*this, out_adj);
  }
  for (std::size_t i = 0; i < slot_storage_.size(); ++i) {
    TensorData& td = *slot_storage_[i];
    if (!td.requires_grad || adj_[i].empty()) continue;
    if (td.grad.empty()) td.grad.assign(td.value.size(), 0.0);
    for (std::size_t j = 0; j < adj_[i].size(); ++j) td.grad[j] += adj_[i][j];
  }
}

void backward(const Tensor& root) {
  Tape* t = active_tape();
  if (!t) throw config_error("backward called with no active tape");
  t->backward(root);
}

}  // namespace arc

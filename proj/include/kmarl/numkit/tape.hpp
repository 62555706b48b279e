#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <deque>

#include "kmarl/numkit/matrix.hpp"

namespace kmarl::num {

/// A trainable tensor: value, accumulated gradient and RMSProp accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix rms_state;

  Param() = default;
  Param(std::string n, Matrix v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.rows(), value.cols()),
        rms_state(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }
  bool needs_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Operations append nodes in evaluation order; backward
/// walks them in exact reverse order. A tape is not thread-safe and should
/// stay on the thread that created it.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Param* param = nullptr;
    bool needs_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// With grad disabled, parameters enter as constants and no backward
  /// closures are stored. Used for target-network evaluation.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return Var(this, nodes_.size() - 1);
  }

  Var param(Param& p) {
    nodes_.push_back(Node{p.value, {}, {}, grad_enabled_ ? &p : nullptr, grad_enabled_});
    return Var(this, nodes_.size() - 1);
  }

  /// Appends a derived value. `backward` is kept only when some input needs a
  /// gradient; it reads grad(self) and accumulates into its inputs.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) needs = needs || nodes_[in.id()].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{},
                          nullptr, needs});
    return Var(this, nodes_.size() - 1);
  }

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Gradient buffer of a node; allocated on first touch during backward.
  Matrix& grad(Var v) {
    Node& n = nodes_[v.id()];
    if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  void clear() { nodes_.clear(); }

  /// Propagates d(loss)/d(node) back to every parameter leaf and accumulates
  /// into Param::grad.
  void backward(Var loss) {
    if (nodes_.empty()) throw std::logic_error("backward: tape is empty");
    if (loss.tape() != this) throw std::logic_error("backward: loss belongs to another tape");
    const Matrix& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ShapeError("backward: loss must be 1x1, got " + lv.shape());
    }
    for (Node& n : nodes_) n.grad = Matrix();
    grad(loss)[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, Var(this, i));
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

 private:
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }
inline bool Var::needs_grad() const { return tape_->needs_grad(*this); }

}  // namespace kmarl::num

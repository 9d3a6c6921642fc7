#pragma once

// Dense tensors and a tape-based reverse-mode differentiation graph.
//
// Every tensor is a row-major matrix; vectors are 1 x n rows. A Graph records
// one forward pass; calling backward() on a scalar node walks the tape in
// reverse creation order and accumulates gradients into the Parameters that
// were read. Graphs are single-use and single-threaded.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rct/errors.hpp"

namespace rct {

template <typename T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

inline std::string shape_string(Index rows, Index cols) {
  return "[" + std::to_string(rows) + " x " + std::to_string(cols) + "]";
}

template <typename T>
std::string shape_string(const Tensor<T>& t) {
  return shape_string(t.rows(), t.cols());
}

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor<T>::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
};

// Owns parameters behind stable addresses so that model components can keep
// raw pointers across moves of the owning model.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value) {
    params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(value)));
    return *params_.back();
  }
  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }
  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor<T>& value() const { return graph_->value(id_); }
  const Tensor<T>& grad() const { return graph_->grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Graph {
 public:
  // Invoked during backward with the graph and the id of the node being
  // differentiated; implementations read grad(self) and call accumulate().
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, {}, nullptr, false});
    return Var<T>(this, nodes_.size() - 1);
  }

  // One node per parameter per graph; repeated uses share it.
  Var<T> parameter(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<T>(this, it->second);
    nodes_.push_back(Node{{}, {}, &p.value, {}, &p, grad_enabled_});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var<T>(this, nodes_.size() - 1);
  }

  // Records the result of an op. The backward function is kept only when
  // some input requires a gradient.
  template <typename Inputs>
  Var<T> record(Tensor<T> value, const Inputs& inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (const Var<T>& in : inputs) needs = needs || nodes_[in.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, nullptr, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
    return Var<T>(this, nodes_.size() - 1);
  }
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref != nullptr ? *n.ref : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient of a node; zero-sized until something has been accumulated.
  const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }

  template <typename Expr>
  void accumulate(std::size_t id, const Expr& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  // Mutable gradient buffer (zero-initialised on first access) for ops that
  // scatter into rows.
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      const Tensor<T>& v = value(id);
      n.grad = Tensor<T>::Zero(v.rows(), v.cols());
    }
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw ShapeError("backward requires a scalar loss, got " + shape_string(loss.value()));
    }
    if (!requires_grad(loss.id())) return;
    nodes_[loss.id()].grad = Tensor<T>::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    const Tensor<T>* ref;
    BackwardFn backward;
    Parameter<T>* param;
    bool requires_grad;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

}  // namespace rct

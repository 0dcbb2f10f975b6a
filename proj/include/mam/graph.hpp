#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "mam/tensor.hpp"

namespace mam {

// Reverse-mode autodiff tape over Tensors. Ops evaluate eagerly and cache
// their forward value in the node; backward() walks the tape once in reverse
// creation order (creation order is topological by construction).
//
// Single-writer: a Graph is built and differentiated by one thread.
class Graph {
 public:
  using NodeId = std::uint32_t;

  enum class Op : std::uint8_t {
    kConstant,
    kParam,
    kMatMul,
    kAdd,
    kMul,
    kRelu,
    kLogSoftmaxGroups,
    kLogSumExp,
    kGatherGroups,
    kSumAll,
    kMeanAll,
    kSumAxis,
    kScale,
    kAddScalar,
    kReshape,
  };

  NodeId constant(Tensor v);
  // Registers an external parameter tensor (snapshotting its current value).
  // Re-registering the same tensor returns the same node, so gradients from
  // several uses accumulate into one slot. The tensor must stay alive and
  // unmodified for the lifetime of the graph.
  NodeId param(const Tensor& t);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }

  // [m,k] x [k,n] -> [m,n]
  NodeId matmul(NodeId a, NodeId b);
  // Same shape, [r,c] + [c] row broadcast, or x + scalar-tensor.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0)); }
  // Same shape, or x * scalar-tensor.
  NodeId mul(NodeId a, NodeId b);
  NodeId square(NodeId a) { return mul(a, a); }
  NodeId relu(NodeId a);
  // Log-softmax within each contiguous group of k entries along the last axis.
  NodeId log_softmax_groups(NodeId a, std::size_t k);
  // Overflow-safe log-sum-exp along `axis` (rank-1: axis 0 -> scalar;
  // rank-2: axis 1 -> [rows], axis 0 -> [cols]).
  NodeId logsumexp(NodeId a, int axis);
  // out[r,g] = in[r, g*k + idx[r,g]]; idx is row-major, one entry per group.
  NodeId gather_groups(NodeId a, std::size_t k, std::vector<std::int32_t> idx);
  NodeId sum_all(NodeId a);
  NodeId mean_all(NodeId a);
  NodeId sum_axis(NodeId a, int axis);
  NodeId scale(NodeId a, double c);
  NodeId add_scalar(NodeId a, double c);
  // Same data, new shape (element count must match).
  NodeId reshape(NodeId a, std::vector<std::size_t> shape);

  // Root must be scalar-valued. May be called once per graph.
  void backward(NodeId root);

  // Gradient of the backward root w.r.t. node `id`; zeros for nodes the root
  // does not reach.
  const Tensor& grad(NodeId id);

  bool has_param(const Tensor* t) const { return param_ids_.count(t) != 0; }
  NodeId param_node(const Tensor* t) const;
  const Tensor& grad_for(const Tensor* t);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    NodeId in0 = 0;
    NodeId in1 = 0;
    bool has_in0 = false;
    bool has_in1 = false;
    Tensor value;
    double carg = 0.0;
    std::size_t iarg = 0;  // group size or axis
    std::vector<std::int32_t> idx;
  };

  NodeId push(Node n, const char* opname);
  void accumulate(NodeId id, const Tensor& g);
  Tensor& grad_slot(NodeId id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;  // parallel to nodes_; empty tensor = untouched
  std::unordered_map<const Tensor*, NodeId> param_ids_;
  bool backward_done_ = false;
};

}  // namespace mam

#include "mam/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace mam {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

bool is_scalar_like(const Tensor& t) { return t.numel() == 1 && t.rank() <= 1; }

}  // namespace

Graph::NodeId Graph::push(Node n, const char* opname) {
  if (!n.value.all_finite()) {
    throw NumericError(std::string(opname) + ": non-finite value in output of shape " +
                       shape_str(n.value));
  }
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::constant(Tensor v) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(v);
  return push(std::move(n), "constant");
}

Graph::NodeId Graph::param(const Tensor& t) {
  auto it = param_ids_.find(&t);
  if (it != param_ids_.end()) return it->second;
  Node n;
  n.op = Op::kParam;
  n.value = t;  // snapshot
  const NodeId id = push(std::move(n), "param");
  param_ids_.emplace(&t, id);
  return id;
}

Graph::NodeId Graph::param_node(const Tensor* t) const {
  auto it = param_ids_.find(t);
  if (it == param_ids_.end()) throw DomainError("param_node: tensor not registered in graph");
  return it->second;
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& va = nodes_[a].value;
  const Tensor& vb = nodes_[b].value;
  if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(va) + " vs " + shape_str(vb));
  }
  Node n;
  n.op = Op::kMatMul;
  n.in0 = a;
  n.in1 = b;
  n.has_in0 = n.has_in1 = true;
  n.value = Tensor::zeros({va.rows(), vb.cols()});
  MapM(n.value.data.data(), static_cast<Eigen::Index>(va.rows()),
       static_cast<Eigen::Index>(vb.cols())) =
      MapCM(va.data.data(), static_cast<Eigen::Index>(va.rows()),
            static_cast<Eigen::Index>(va.cols())) *
      MapCM(vb.data.data(), static_cast<Eigen::Index>(vb.rows()),
            static_cast<Eigen::Index>(vb.cols()));
  return push(std::move(n), "matmul");
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& va = nodes_[a].value;
  const Tensor& vb = nodes_[b].value;
  Node n;
  n.op = Op::kAdd;
  n.in0 = a;
  n.in1 = b;
  n.has_in0 = n.has_in1 = true;
  if (va.same_shape(vb)) {
    n.value = va;
    for (std::size_t i = 0; i < vb.numel(); ++i) n.value.data[i] += vb.data[i];
  } else if (is_scalar_like(vb)) {
    n.value = va;
    const double c = vb.data[0];
    for (double& x : n.value.data) x += c;
  } else if (va.rank() == 2 && vb.rank() == 1 && vb.shape[0] == va.cols()) {
    n.value = va;
    const std::size_t r = va.rows(), c = va.cols();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) n.value.data[i * c + j] += vb.data[j];
    }
  } else {
    throw ShapeError("add: shape mismatch " + shape_str(va) + " vs " + shape_str(vb));
  }
  return push(std::move(n), "add");
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& va = nodes_[a].value;
  const Tensor& vb = nodes_[b].value;
  Node n;
  n.op = Op::kMul;
  n.in0 = a;
  n.in1 = b;
  n.has_in0 = n.has_in1 = true;
  if (va.same_shape(vb)) {
    n.value = va;
    for (std::size_t i = 0; i < vb.numel(); ++i) n.value.data[i] *= vb.data[i];
  } else if (is_scalar_like(vb)) {
    n.value = va;
    const double c = vb.data[0];
    for (double& x : n.value.data) x *= c;
  } else {
    throw ShapeError("mul: shape mismatch " + shape_str(va) + " vs " + shape_str(vb));
  }
  return push(std::move(n), "mul");
}

Graph::NodeId Graph::relu(NodeId a) {
  Node n;
  n.op = Op::kRelu;
  n.in0 = a;
  n.has_in0 = true;
  n.value = nodes_[a].value;
  for (double& x : n.value.data) x = x > 0.0 ? x : 0.0;
  return push(std::move(n), "relu");
}

Graph::NodeId Graph::log_softmax_groups(NodeId a, std::size_t k) {
  const Tensor& va = nodes_[a].value;
  const std::size_t width = va.rank() == 2 ? va.cols() : va.numel();
  if (k == 0 || width % k != 0) {
    throw ShapeError("log_softmax_groups: width " + std::to_string(width) +
                     " not divisible by group size " + std::to_string(k));
  }
  Node n;
  n.op = Op::kLogSoftmaxGroups;
  n.in0 = a;
  n.has_in0 = true;
  n.iarg = k;
  n.value = va;
  log_softmax_groups_inplace(n.value, k);
  return push(std::move(n), "log_softmax_groups");
}

Graph::NodeId Graph::logsumexp(NodeId a, int axis) {
  const Tensor& va = nodes_[a].value;
  Node n;
  n.op = Op::kLogSumExp;
  n.in0 = a;
  n.has_in0 = true;
  n.iarg = static_cast<std::size_t>(axis);
  if (va.rank() == 1 && axis == 0) {
    if (va.numel() == 0) throw ShapeError("logsumexp: empty input");
    n.value = Tensor::scalar(logsumexp_span(va.data.data(), va.numel(), 1));
  } else if (va.rank() == 2 && axis == 1) {
    n.value = Tensor::zeros({va.rows()});
    for (std::size_t i = 0; i < va.rows(); ++i) {
      n.value.data[i] = logsumexp_span(va.data.data() + i * va.cols(), va.cols(), 1);
    }
  } else if (va.rank() == 2 && axis == 0) {
    n.value = Tensor::zeros({va.cols()});
    for (std::size_t j = 0; j < va.cols(); ++j) {
      n.value.data[j] = logsumexp_span(va.data.data() + j, va.rows(), va.cols());
    }
  } else {
    throw ShapeError("logsumexp: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(va));
  }
  return push(std::move(n), "logsumexp");
}

Graph::NodeId Graph::gather_groups(NodeId a, std::size_t k, std::vector<std::int32_t> idx) {
  const Tensor& va = nodes_[a].value;
  const std::size_t width = va.rank() == 2 ? va.cols() : va.numel();
  if (k == 0 || width % k != 0) {
    throw ShapeError("gather_groups: width " + std::to_string(width) +
                     " not divisible by group size " + std::to_string(k));
  }
  const std::size_t groups_per_row = width / k;
  const std::size_t rows = va.rank() == 2 ? va.rows() : 1;
  if (idx.size() != rows * groups_per_row) {
    throw ShapeError("gather_groups: " + std::to_string(idx.size()) + " indices for " +
                     std::to_string(rows * groups_per_row) + " groups");
  }
  for (const std::int32_t v : idx) {
    if (v < 0 || static_cast<std::size_t>(v) >= k) {
      throw DomainError("gather_groups: index " + std::to_string(v) + " out of range [0, " +
                        std::to_string(k) + ")");
    }
  }
  Node n;
  n.op = Op::kGatherGroups;
  n.in0 = a;
  n.has_in0 = true;
  n.iarg = k;
  n.idx = std::move(idx);
  n.value = va.rank() == 2 ? Tensor::zeros({rows, groups_per_row})
                           : Tensor::zeros({groups_per_row});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < groups_per_row; ++g) {
      const std::size_t flat = r * groups_per_row + g;
      n.value.data[flat] =
          va.data[r * width + g * k + static_cast<std::size_t>(n.idx[flat])];
    }
  }
  return push(std::move(n), "gather_groups");
}

Graph::NodeId Graph::sum_all(NodeId a) {
  Node n;
  n.op = Op::kSumAll;
  n.in0 = a;
  n.has_in0 = true;
  double s = 0.0;
  for (const double x : nodes_[a].value.data) s += x;
  n.value = Tensor::scalar(s);
  return push(std::move(n), "sum_all");
}

Graph::NodeId Graph::mean_all(NodeId a) {
  const std::size_t count = nodes_[a].value.numel();
  if (count == 0) throw ShapeError("mean_all: empty input");
  Node n;
  n.op = Op::kMeanAll;
  n.in0 = a;
  n.has_in0 = true;
  double s = 0.0;
  for (const double x : nodes_[a].value.data) s += x;
  n.value = Tensor::scalar(s / static_cast<double>(count));
  return push(std::move(n), "mean_all");
}

Graph::NodeId Graph::sum_axis(NodeId a, int axis) {
  const Tensor& va = nodes_[a].value;
  if (va.rank() != 2 || (axis != 0 && axis != 1)) {
    throw ShapeError("sum_axis: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(va));
  }
  Node n;
  n.op = Op::kSumAxis;
  n.in0 = a;
  n.has_in0 = true;
  n.iarg = static_cast<std::size_t>(axis);
  const std::size_t r = va.rows(), c = va.cols();
  if (axis == 1) {
    n.value = Tensor::zeros({r});
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += va.data[i * c + j];
      n.value.data[i] = s;
    }
  } else {
    n.value = Tensor::zeros({c});
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) n.value.data[j] += va.data[i * c + j];
    }
  }
  return push(std::move(n), "sum_axis");
}

Graph::NodeId Graph::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.in0 = a;
  n.has_in0 = true;
  n.carg = c;
  n.value = nodes_[a].value;
  for (double& x : n.value.data) x *= c;
  return push(std::move(n), "scale");
}

Graph::NodeId Graph::add_scalar(NodeId a, double c) {
  Node n;
  n.op = Op::kAddScalar;
  n.in0 = a;
  n.has_in0 = true;
  n.carg = c;
  n.value = nodes_[a].value;
  for (double& x : n.value.data) x += c;
  return push(std::move(n), "add_scalar");
}

Graph::NodeId Graph::reshape(NodeId a, std::vector<std::size_t> shape) {
  const Tensor& va = nodes_[a].value;
  std::size_t count = 1;
  for (const std::size_t s : shape) count *= s;
  if (count != va.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(va) + " as " + shape_str(shape));
  }
  Node n;
  n.op = Op::kReshape;
  n.in0 = a;
  n.has_in0 = true;
  n.value = va;
  n.value.shape = std::move(shape);
  return push(std::move(n), "reshape");
}

Tensor& Graph::grad_slot(NodeId id) {
  Tensor& g = grads_[id];
  if (g.data.empty() && nodes_[id].value.numel() > 0) {
    g = Tensor::zeros(nodes_[id].value.shape);
  }
  return g;
}

void Graph::accumulate(NodeId id, const Tensor& g) {
  Tensor& slot = grad_slot(id);
  for (std::size_t i = 0; i < g.numel(); ++i) slot.data[i] += g.data[i];
}

void Graph::backward(NodeId root) {
  if (backward_done_) throw DomainError("backward: graph already differentiated");
  backward_done_ = true;
  const Tensor& rv = nodes_[root].value;
  if (rv.numel() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + shape_str(rv));
  }
  grad_slot(root).data[0] = 1.0;

  for (NodeId id = root + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    const Tensor& gout = grads_[id];
    if (gout.data.empty()) continue;  // not reached from root
    switch (n.op) {
      case Op::kConstant:
      case Op::kParam:
        break;
      case Op::kMatMul: {
        const Tensor& va = nodes_[n.in0].value;
        const Tensor& vb = nodes_[n.in1].value;
        const auto m = static_cast<Eigen::Index>(va.rows());
        const auto k = static_cast<Eigen::Index>(va.cols());
        const auto c = static_cast<Eigen::Index>(vb.cols());
        MapCM G(gout.data.data(), m, c);
        MapCM A(va.data.data(), m, k);
        MapCM B(vb.data.data(), k, c);
        MapM(grad_slot(n.in0).data.data(), m, k).noalias() += G * B.transpose();
        MapM(grad_slot(n.in1).data.data(), k, c).noalias() += A.transpose() * G;
        break;
      }
      case Op::kAdd: {
        accumulate(n.in0, gout);
        const Tensor& va = nodes_[n.in0].value;
        const Tensor& vb = nodes_[n.in1].value;
        if (va.same_shape(vb)) {
          accumulate(n.in1, gout);
        } else if (is_scalar_like(vb)) {
          double s = 0.0;
          for (const double x : gout.data) s += x;
          grad_slot(n.in1).data[0] += s;
        } else {  // row broadcast
          Tensor& gb = grad_slot(n.in1);
          const std::size_t r = va.rows(), cc = va.cols();
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < cc; ++j) gb.data[j] += gout.data[i * cc + j];
          }
        }
        break;
      }
      case Op::kMul: {
        const Tensor& va = nodes_[n.in0].value;
        const Tensor& vb = nodes_[n.in1].value;
        if (va.same_shape(vb)) {
          Tensor& ga = grad_slot(n.in0);
          Tensor& gb = grad_slot(n.in1);
          for (std::size_t i = 0; i < gout.numel(); ++i) {
            ga.data[i] += gout.data[i] * vb.data[i];
            gb.data[i] += gout.data[i] * va.data[i];
          }
        } else {  // scalar rhs
          Tensor& ga = grad_slot(n.in0);
          const double c = vb.data[0];
          double s = 0.0;
          for (std::size_t i = 0; i < gout.numel(); ++i) {
            ga.data[i] += gout.data[i] * c;
            s += gout.data[i] * va.data[i];
          }
          grad_slot(n.in1).data[0] += s;
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& va = nodes_[n.in0].value;
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < gout.numel(); ++i) {
          if (va.data[i] > 0.0) ga.data[i] += gout.data[i];
        }
        break;
      }
      case Op::kLogSoftmaxGroups: {
        const std::size_t k = n.iarg;
        const std::size_t groups = n.value.numel() / k;
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t g = 0; g < groups; ++g) {
          const double* y = n.value.data.data() + g * k;
          const double* dy = gout.data.data() + g * k;
          double s = 0.0;
          for (std::size_t j = 0; j < k; ++j) s += dy[j];
          double* dx = ga.data.data() + g * k;
          for (std::size_t j = 0; j < k; ++j) dx[j] += dy[j] - std::exp(y[j]) * s;
        }
        break;
      }
      case Op::kLogSumExp: {
        const Tensor& va = nodes_[n.in0].value;
        Tensor& ga = grad_slot(n.in0);
        const int axis = static_cast<int>(n.iarg);
        if (va.rank() == 1) {
          for (std::size_t j = 0; j < va.numel(); ++j) {
            ga.data[j] += std::exp(va.data[j] - n.value.data[0]) * gout.data[0];
          }
        } else if (axis == 1) {
          const std::size_t r = va.rows(), c = va.cols();
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              ga.data[i * c + j] +=
                  std::exp(va.data[i * c + j] - n.value.data[i]) * gout.data[i];
            }
          }
        } else {
          const std::size_t r = va.rows(), c = va.cols();
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              ga.data[i * c + j] +=
                  std::exp(va.data[i * c + j] - n.value.data[j]) * gout.data[j];
            }
          }
        }
        break;
      }
      case Op::kGatherGroups: {
        const Tensor& va = nodes_[n.in0].value;
        const std::size_t width = va.rank() == 2 ? va.cols() : va.numel();
        const std::size_t groups_per_row = width / n.iarg;
        const std::size_t rows = va.rank() == 2 ? va.rows() : 1;
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t g = 0; g < groups_per_row; ++g) {
            const std::size_t flat = r * groups_per_row + g;
            ga.data[r * width + g * n.iarg + static_cast<std::size_t>(n.idx[flat])] +=
                gout.data[flat];
          }
        }
        break;
      }
      case Op::kSumAll: {
        Tensor& ga = grad_slot(n.in0);
        const double g0 = gout.data[0];
        for (double& x : ga.data) x += g0;
        break;
      }
      case Op::kMeanAll: {
        Tensor& ga = grad_slot(n.in0);
        const double g0 = gout.data[0] / static_cast<double>(ga.numel());
        for (double& x : ga.data) x += g0;
        break;
      }
      case Op::kSumAxis: {
        const Tensor& va = nodes_[n.in0].value;
        Tensor& ga = grad_slot(n.in0);
        const std::size_t r = va.rows(), c = va.cols();
        if (n.iarg == 1) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ga.data[i * c + j] += gout.data[i];
          }
        } else {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ga.data[i * c + j] += gout.data[j];
          }
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < gout.numel(); ++i) ga.data[i] += n.carg * gout.data[i];
        break;
      }
      case Op::kAddScalar:
        accumulate(n.in0, gout);
        break;
      case Op::kReshape: {
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < gout.numel(); ++i) ga.data[i] += gout.data[i];
        break;
      }
    }
  }
}

const Tensor& Graph::grad(NodeId id) { return grad_slot(id); }

const Tensor& Graph::grad_for(const Tensor* t) { return grad_slot(param_node(t)); }

}  // namespace mam

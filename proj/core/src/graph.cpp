#include "twostage/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace twostage {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kMatMul: return "matmul";
    case Op::kMatMulNT: return "matmul_nt";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kBiasAdd: return "bias_add";
    case Op::kClamp: return "clamp";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(Op op, const std::string& detail) {
  throw std::invalid_argument(std::string("graph: ") + op_name(op) + ": " +
                              detail);
}

// Equal shapes, or exactly one side a scalar.
void check_elementwise(Op op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b) || a.is_scalar() || b.is_scalar()) return;
  shape_error(op, "shape mismatch and neither operand is a scalar");
}

Tensor elementwise(Op op, const Tensor& a, const Tensor& b) {
  const Tensor& big = a.is_scalar() && !b.is_scalar() ? b : a;
  Tensor out = Tensor::zeros(big.shape);
  const std::size_t n = out.numel();
  auto ai = [&](std::size_t i) { return a.is_scalar() ? a.data[0] : a.data[i]; };
  auto bi = [&](std::size_t i) { return b.is_scalar() ? b.data[0] : b.data[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    switch (op) {
      case Op::kAdd: out.data[i] = ai(i) + bi(i); break;
      case Op::kSub: out.data[i] = ai(i) - bi(i); break;
      case Op::kMul: out.data[i] = ai(i) * bi(i); break;
      default: shape_error(op, "not elementwise");
    }
  }
  return out;
}

// Accumulate grad into dst, reducing to a scalar if the operand was one.
void accumulate(Tensor& dst, const Tensor& grad) {
  if (dst.numel() == grad.numel()) {
    for (std::size_t i = 0; i < grad.numel(); ++i) dst.data[i] += grad.data[i];
  } else if (dst.is_scalar()) {
    double acc = 0.0;
    for (double v : grad.data) acc += v;
    dst.data[0] += acc;
  } else {
    throw std::logic_error("graph: gradient shape mismatch in accumulate");
  }
}

}  // namespace

int Graph::push(Node n) {
  if (!n.value.all_finite())
    throw std::domain_error(std::string("graph: ") + op_name(n.op) +
                            " produced non-finite values");
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_id(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::out_of_range("graph: bad node id " + std::to_string(id));
}

int Graph::input(Tensor value) {
  return push({Op::kInput, {-1, -1}, std::move(value)});
}

int Graph::param(Tensor value) {
  int id = push({Op::kParam, {-1, -1}, std::move(value)});
  params_.push_back(id);
  return id;
}

int Graph::matmul(int a, int b) {
  check_id(a);
  check_id(b);
  return push({Op::kMatMul, {a, b}, twostage::matmul(val(a), val(b))});
}

int Graph::matmul_nt(int a, int b) {
  check_id(a);
  check_id(b);
  return push({Op::kMatMulNT, {a, b}, twostage::matmul_nt(val(a), val(b))});
}

int Graph::add(int a, int b) {
  check_id(a);
  check_id(b);
  check_elementwise(Op::kAdd, val(a), val(b));
  return push({Op::kAdd, {a, b}, elementwise(Op::kAdd, val(a), val(b))});
}

int Graph::sub(int a, int b) {
  check_id(a);
  check_id(b);
  check_elementwise(Op::kSub, val(a), val(b));
  return push({Op::kSub, {a, b}, elementwise(Op::kSub, val(a), val(b))});
}

int Graph::mul(int a, int b) {
  check_id(a);
  check_id(b);
  check_elementwise(Op::kMul, val(a), val(b));
  return push({Op::kMul, {a, b}, elementwise(Op::kMul, val(a), val(b))});
}

int Graph::scalar_mul(int a, double factor) {
  check_id(a);
  Tensor out = val(a);
  for (double& v : out.data) v *= factor;
  Node n{Op::kScalarMul, {a, -1}, std::move(out)};
  n.a = factor;
  return push(std::move(n));
}

int Graph::tanh(int a) {
  check_id(a);
  Tensor out = val(a);
  for (double& v : out.data) v = std::tanh(v);
  return push({Op::kTanh, {a, -1}, std::move(out)});
}

int Graph::exp(int a) {
  check_id(a);
  Tensor out = val(a);
  for (double& v : out.data) v = std::exp(v);
  return push({Op::kExp, {a, -1}, std::move(out)});
}

int Graph::log(int a) {
  check_id(a);
  Tensor out = val(a);
  for (double& v : out.data) {
    if (v <= 0.0)
      throw std::domain_error("graph: log of non-positive value " +
                              std::to_string(v));
    v = std::log(v);
  }
  return push({Op::kLog, {a, -1}, std::move(out)});
}

int Graph::square(int a) {
  check_id(a);
  Tensor out = val(a);
  for (double& v : out.data) v *= v;
  return push({Op::kSquare, {a, -1}, std::move(out)});
}

int Graph::sum(int a) {
  check_id(a);
  double acc = 0.0;
  for (double v : val(a).data) acc += v;
  return push({Op::kSum, {a, -1}, Tensor::scalar(acc)});
}

int Graph::mean(int a) {
  check_id(a);
  double acc = 0.0;
  for (double v : val(a).data) acc += v;
  return push({Op::kMean, {a, -1},
               Tensor::scalar(acc / static_cast<double>(val(a).numel()))});
}

int Graph::bias_add(int mat, int row) {
  check_id(mat);
  check_id(row);
  const Tensor& m = val(mat);
  const Tensor& r = val(row);
  if (m.shape.size() != 2)
    shape_error(Op::kBiasAdd, "left operand must be a matrix");
  const std::size_t nc = m.shape[1];
  if (r.numel() != nc)
    shape_error(Op::kBiasAdd, "bias length " + std::to_string(r.numel()) +
                                  " vs matrix width " + std::to_string(nc));
  Tensor out = m;
  for (std::size_t i = 0; i < m.shape[0]; ++i)
    for (std::size_t j = 0; j < nc; ++j) out.data[i * nc + j] += r.data[j];
  return push({Op::kBiasAdd, {mat, row}, std::move(out)});
}

int Graph::clamp(int a, double lo, double hi) {
  check_id(a);
  if (!(lo < hi)) shape_error(Op::kClamp, "lo must be < hi");
  Tensor out = val(a);
  for (double& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
  Node n{Op::kClamp, {a, -1}, std::move(out)};
  n.a = lo;
  n.b = hi;
  return push(std::move(n));
}

GradientMap Graph::backward(int root) const {
  check_id(root);
  if (!val(root).is_scalar())
    throw std::invalid_argument("graph: backward root must be scalar");

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  auto touch = [&](int id) {
    if (!live[id]) {
      grads[id] = Tensor::zeros(nodes_[id].value.shape);
      live[id] = true;
    }
  };
  touch(root);
  grads[root].data[0] = 1.0;

  for (int id = root; id >= 0; --id) {
    if (!live[id]) continue;
    const Node& n = nodes_[id];
    const Tensor& g = grads[id];
    const int pa = n.parents[0], pb = n.parents[1];
    switch (n.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kMatMul: {
        touch(pa);
        touch(pb);
        accumulate(grads[pa], twostage::matmul_nt(g, val(pb)));
        accumulate(grads[pb], twostage::matmul_tn(val(pa), g));
        break;
      }
      case Op::kMatMulNT: {
        touch(pa);
        touch(pb);
        accumulate(grads[pa], twostage::matmul(g, val(pb)));
        accumulate(grads[pb], twostage::matmul_tn(g, val(pa)));
        break;
      }
      case Op::kAdd: {
        touch(pa);
        touch(pb);
        accumulate(grads[pa], g);
        accumulate(grads[pb], g);
        break;
      }
      case Op::kSub: {
        touch(pa);
        touch(pb);
        accumulate(grads[pa], g);
        Tensor neg = g;
        for (double& v : neg.data) v = -v;
        accumulate(grads[pb], neg);
        break;
      }
      case Op::kMul: {
        touch(pa);
        touch(pb);
        const Tensor& av = val(pa);
        const Tensor& bv = val(pb);
        Tensor ga = Tensor::zeros(g.shape);
        Tensor gb = Tensor::zeros(g.shape);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double aval = av.is_scalar() ? av.data[0] : av.data[i];
          const double bval = bv.is_scalar() ? bv.data[0] : bv.data[i];
          ga.data[i] = g.data[i] * bval;
          gb.data[i] = g.data[i] * aval;
        }
        accumulate(grads[pa], ga);
        accumulate(grads[pb], gb);
        break;
      }
      case Op::kScalarMul: {
        touch(pa);
        Tensor ga = g;
        for (double& v : ga.data) v *= n.a;
        accumulate(grads[pa], ga);
        break;
      }
      case Op::kTanh: {
        touch(pa);
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.numel(); ++i)
          ga.data[i] *= 1.0 - n.value.data[i] * n.value.data[i];
        accumulate(grads[pa], ga);
        break;
      }
      case Op::kExp: {
        touch(pa);
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.numel(); ++i)
          ga.data[i] *= n.value.data[i];
        accumulate(grads[pa], ga);
        break;
      }
      case Op::kLog: {
        touch(pa);
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.numel(); ++i)
          ga.data[i] /= val(pa).data[i];
        accumulate(grads[pa], ga);
        break;
      }
      case Op::kSquare: {
        touch(pa);
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.numel(); ++i)
          ga.data[i] *= 2.0 * val(pa).data[i];
        accumulate(grads[pa], ga);
        break;
      }
      case Op::kSum: {
        touch(pa);
        Tensor ga = Tensor::full(val(pa).shape, g.data[0]);
        accumulate(grads[pa], ga);
        break;
      }
      case Op::kMean: {
        touch(pa);
        const double s = g.data[0] / static_cast<double>(val(pa).numel());
        Tensor ga = Tensor::full(val(pa).shape, s);
        accumulate(grads[pa], ga);
        break;
      }
      case Op::kBiasAdd: {
        touch(pa);
        touch(pb);
        accumulate(grads[pa], g);
        const std::size_t nr = g.shape[0], nc = g.shape[1];
        Tensor gb = Tensor::zeros(val(pb).shape);
        for (std::size_t i = 0; i < nr; ++i)
          for (std::size_t j = 0; j < nc; ++j)
            gb.data[j] += g.data[i * nc + j];
        accumulate(grads[pb], gb);
        break;
      }
      case Op::kClamp: {
        touch(pa);
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.numel(); ++i) {
          const double x = val(pa).data[i];
          if (x <= n.a || x >= n.b) ga.data[i] = 0.0;
        }
        accumulate(grads[pa], ga);
        break;
      }
    }
  }

  GradientMap out;
  for (int p : params_) {
    if (p > root) continue;
    if (!live[p]) {
      out.emplace(p, Tensor::zeros(nodes_[p].value.shape));
    } else {
      out.emplace(p, std::move(grads[p]));
    }
  }
  return out;
}

std::vector<Tensor> finite_difference_grad(
    const std::function<double(const std::vector<Tensor>&)>& loss,
    std::vector<Tensor> params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_grad: h <= 0");
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor g = Tensor::zeros(params[p].shape);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double orig = params[p].data[i];
      params[p].data[i] = orig + h;
      const double up = loss(params);
      params[p].data[i] = orig - h;
      const double down = loss(params);
      params[p].data[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw std::domain_error(
            "finite_difference_grad: non-finite loss at probe point");
      g.data[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace twostage

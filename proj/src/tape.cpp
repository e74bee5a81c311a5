#include "pno/tape.hpp"

#include <cmath>

#include "pno/activations.hpp"
#include "pno/fft.hpp"

namespace pno {

namespace {

using detail::gelu_grad;
using detail::sigmoid;

double gelu_fn(double x) { return detail::gelu(x); }
double softplus_fn(double x) { return detail::softplus(x); }
double sigmoid_fn(double x) { return sigmoid(x); }

}  // namespace

const Tape::Node& Tape::node(Id id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw config_error("tape id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

Tape::Node& Tape::node(Id id) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(id));
}

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::ensure_adj(Node& n) {
  if (n.adj.re.size() == 0) n.adj = Value::zeros_like(n.val);
}

Tape::Id Tape::leaf(Value v) {
  Node n;
  n.op = Primitive::leaf;
  n.val = std::move(v);
  n.needs_grad = true;
  return push(std::move(n));
}

Tape::Id Tape::constant(Value v) {
  Node n;
  n.op = Primitive::constant;
  n.val = std::move(v);
  n.needs_grad = false;
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  const Value& va = node(a).val;
  const Value& vb = node(b).val;
  if (!va.same_shape(vb)) throw config_error("add: shape mismatch");
  Node n;
  n.op = Primitive::add;
  n.in[0] = a;
  n.in[1] = b;
  n.val.re = va.re + vb.re;
  if (va.is_complex()) n.val.im = va.im + vb.im;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::subtract(Id a, Id b) {
  const Value& va = node(a).val;
  const Value& vb = node(b).val;
  if (!va.same_shape(vb)) throw config_error("subtract: shape mismatch");
  Node n;
  n.op = Primitive::subtract;
  n.in[0] = a;
  n.in[1] = b;
  n.val.re = va.re - vb.re;
  if (va.is_complex()) n.val.im = va.im - vb.im;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::multiply(Id a, Id b) {
  const Value& va = node(a).val;
  const Value& vb = node(b).val;
  Node n;
  n.op = Primitive::multiply;
  n.in[0] = a;
  n.in[1] = b;
  if (va.is_real_scalar() && !vb.is_real_scalar()) {
    const double s = va.re(0, 0);
    n.val.re = s * vb.re;
    if (vb.is_complex()) n.val.im = s * vb.im;
  } else if (vb.is_real_scalar()) {
    const double s = vb.re(0, 0);
    n.val.re = s * va.re;
    if (va.is_complex()) n.val.im = s * va.im;
  } else if (va.same_shape(vb)) {
    if (va.is_complex()) {
      n.val.re = va.re.cwiseProduct(vb.re) - va.im.cwiseProduct(vb.im);
      n.val.im = va.re.cwiseProduct(vb.im) + va.im.cwiseProduct(vb.re);
    } else {
      n.val.re = va.re.cwiseProduct(vb.re);
    }
  } else {
    throw config_error("multiply: operands need equal shapes or a scalar");
  }
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::channel_linear(Id w, Id bias, Id x) {
  const Value& vw = node(w).val;
  const Value& vb = node(bias).val;
  const Value& vx = node(x).val;
  if (vw.is_complex() || vb.is_complex() || vx.is_complex())
    throw config_error("channel_linear: real operands required");
  if (vw.cols() != vx.rows() || vb.rows() != vw.rows() || vb.cols() != 1)
    throw config_error("channel_linear: shape mismatch");
  Node n;
  n.op = Primitive::channel_linear;
  n.in[0] = w;
  n.in[1] = bias;
  n.in[2] = x;
  n.val.re.noalias() = vw.re * vx.re;
  n.val.re.colwise() += vb.re.col(0);
  n.needs_grad =
      node(w).needs_grad || node(bias).needs_grad || node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::mode_multiply(Id w, Id x) {
  const Value& vw = node(w).val;
  const Value& vx = node(x).val;
  if (!vw.is_complex() || !vx.is_complex())
    throw config_error("mode_multiply: complex operands required");
  const Eigen::Index c_in = vx.rows();
  const Eigen::Index k = vx.cols();
  if (c_in == 0 || vw.rows() != k * c_in)
    throw config_error("mode_multiply: weight rows must be modes*c_in");
  const Eigen::Index c_out = vw.cols();
  Node n;
  n.op = Primitive::mode_multiply;
  n.in[0] = w;
  n.in[1] = x;
  n.val.re.resize(c_out, k);
  n.val.im.resize(c_out, k);
  for (Eigen::Index m = 0; m < k; ++m) {
    const auto wre = vw.re.block(m * c_in, 0, c_in, c_out);
    const auto wim = vw.im.block(m * c_in, 0, c_in, c_out);
    n.val.re.col(m).noalias() = wre.transpose() * vx.re.col(m);
    n.val.re.col(m).noalias() -= wim.transpose() * vx.im.col(m);
    n.val.im.col(m).noalias() = wre.transpose() * vx.im.col(m);
    n.val.im.col(m).noalias() += wim.transpose() * vx.re.col(m);
  }
  n.needs_grad = node(w).needs_grad || node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::fft_real(Id x) {
  const Value& vx = node(x).val;
  if (vx.is_complex()) throw config_error("fft_real: real input required");
  Node n;
  n.op = Primitive::fft_real;
  n.in[0] = x;
  Eigen::MatrixXcd s = fft_real_rows(vx.re);
  n.val.re = s.real();
  n.val.im = s.imag();
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::ifft_real(Id x, int n_out) {
  const Value& vx = node(x).val;
  if (!vx.is_complex()) throw config_error("ifft_real: complex input required");
  if (vx.cols() != n_out / 2 + 1)
    throw config_error("ifft_real: spectrum length does not match n");
  Node n;
  n.op = Primitive::ifft_real;
  n.in[0] = x;
  n.i0 = n_out;
  Eigen::MatrixXcd s(vx.rows(), vx.cols());
  s.real() = vx.re;
  s.imag() = vx.im;
  n.val.re = ifft_real_rows(s, n_out);
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::truncate_modes(Id x, int k) {
  const Value& vx = node(x).val;
  if (!vx.is_complex())
    throw config_error("truncate_modes: complex input required");
  if (k < 1 || k > vx.cols())
    throw config_error("truncate_modes: k outside [1, cols]");
  Node n;
  n.op = Primitive::truncate_modes;
  n.in[0] = x;
  n.i0 = k;
  n.val.re = vx.re.leftCols(k);
  n.val.im = vx.im.leftCols(k);
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::pad_modes(Id x, int k_full) {
  const Value& vx = node(x).val;
  if (!vx.is_complex()) throw config_error("pad_modes: complex input required");
  if (k_full < vx.cols())
    throw config_error("pad_modes: k_full smaller than input");
  Node n;
  n.op = Primitive::pad_modes;
  n.in[0] = x;
  n.i0 = k_full;
  n.val.re = Eigen::MatrixXd::Zero(vx.rows(), k_full);
  n.val.im = Eigen::MatrixXd::Zero(vx.rows(), k_full);
  n.val.re.leftCols(vx.cols()) = vx.re;
  n.val.im.leftCols(vx.cols()) = vx.im;
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::gelu(Id x) {
  const Value& vx = node(x).val;
  if (vx.is_complex()) throw config_error("gelu: real input required");
  Node n;
  n.op = Primitive::gelu;
  n.in[0] = x;
  n.val.re = vx.re.unaryExpr([](double v) { return gelu_fn(v); });
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::softplus(Id x) {
  const Value& vx = node(x).val;
  if (vx.is_complex()) throw config_error("softplus: real input required");
  Node n;
  n.op = Primitive::softplus;
  n.in[0] = x;
  n.val.re = vx.re.unaryExpr([](double v) { return softplus_fn(v); });
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sqrt_elem(Id x) {
  const Value& vx = node(x).val;
  if (vx.is_complex()) throw config_error("sqrt: real input required");
  if ((vx.re.array() < 0.0).any())
    throw config_error("sqrt: negative input");
  Node n;
  n.op = Primitive::sqrt_elem;
  n.in[0] = x;
  n.val.re = vx.re.cwiseSqrt();
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::reduce_sum(Id x) {
  const Value& vx = node(x).val;
  Node n;
  n.op = Primitive::reduce_sum;
  n.in[0] = x;
  double s = vx.re.sum();
  if (vx.is_complex()) s += vx.im.sum();
  n.val = Value::scalar(s);
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::grid_norm(Id x, double weight) {
  const Value& vx = node(x).val;
  if (vx.is_complex()) throw config_error("grid_norm: real input required");
  if (weight <= 0.0) throw config_error("grid_norm: weight must be positive");
  Node n;
  n.op = Primitive::grid_norm;
  n.in[0] = x;
  n.d0 = weight;
  n.val = Value::scalar(std::sqrt(weight * vx.re.squaredNorm()));
  n.needs_grad = node(x).needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::record(const std::string& op, const std::vector<Id>& inputs,
                      int i0, double d0) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n)
      throw config_error("record: " + op + " expects " + std::to_string(n) +
                         " inputs");
  };
  if (op == "add") { arity(2); return add(inputs[0], inputs[1]); }
  if (op == "subtract") { arity(2); return subtract(inputs[0], inputs[1]); }
  if (op == "multiply") { arity(2); return multiply(inputs[0], inputs[1]); }
  if (op == "channel_linear") {
    arity(3);
    return channel_linear(inputs[0], inputs[1], inputs[2]);
  }
  if (op == "mode_multiply") { arity(2); return mode_multiply(inputs[0], inputs[1]); }
  if (op == "fft_real") { arity(1); return fft_real(inputs[0]); }
  if (op == "ifft_real") {
    arity(1);
    return ifft_real(inputs[0],
                     static_cast<int>(2 * (node(inputs[0]).val.cols() - 1)));
  }
  if (op == "gelu") { arity(1); return gelu(inputs[0]); }
  if (op == "truncate_modes") { arity(1); return truncate_modes(inputs[0], i0); }
  if (op == "pad_modes") { arity(1); return pad_modes(inputs[0], i0); }
  if (op == "reduce_sum") { arity(1); return reduce_sum(inputs[0]); }
  if (op == "sqrt") { arity(1); return sqrt_elem(inputs[0]); }
  if (op == "grid_norm") { arity(1); return grid_norm(inputs[0], d0); }
  if (op == "softplus") { arity(1); return softplus(inputs[0]); }
  throw config_error("record: unknown primitive '" + op + "'");
}

Value Tape::grad_of(Id id) const {
  const Node& n = node(id);
  if (n.adj.re.size() == 0) return Value::zeros_like(n.val);
  return n.adj;
}

void Tape::backward(Id root) {
  Node& r = node(root);
  if (r.val.is_complex() || r.val.re.size() != 1)
    throw config_error("backward: root must be a real scalar");
  ensure_adj(r);
  r.adj.re(0, 0) += 1.0;

  auto wants = [&](Id p) { return nodes_[static_cast<std::size_t>(p)].needs_grad; };
  auto padj = [&](Id p) -> Value& {
    Node& pn = nodes_[static_cast<std::size_t>(p)];
    ensure_adj(pn);
    return pn.adj;
  };

  for (Id i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.adj.re.size() == 0) continue;
    const Value& g = n.adj;
    switch (n.op) {
      case Primitive::constant:
      case Primitive::leaf:
        break;
      case Primitive::add: {
        for (int s = 0; s < 2; ++s) {
          if (!wants(n.in[s])) continue;
          Value& pa = padj(n.in[s]);
          pa.re += g.re;
          if (pa.is_complex()) pa.im += g.im;
        }
        break;
      }
      case Primitive::subtract: {
        if (wants(n.in[0])) {
          Value& pa = padj(n.in[0]);
          pa.re += g.re;
          if (pa.is_complex()) pa.im += g.im;
        }
        if (wants(n.in[1])) {
          Value& pa = padj(n.in[1]);
          pa.re -= g.re;
          if (pa.is_complex()) pa.im -= g.im;
        }
        break;
      }
      case Primitive::multiply: {
        const Value& va = nodes_[static_cast<std::size_t>(n.in[0])].val;
        const Value& vb = nodes_[static_cast<std::size_t>(n.in[1])].val;
        const bool scalar_a = va.is_real_scalar() && !vb.is_real_scalar();
        const bool scalar_b = vb.is_real_scalar() && !scalar_a;
        if (scalar_a || scalar_b) {
          const Value& vs = scalar_a ? va : vb;
          const Value& vm = scalar_a ? vb : va;
          const Id ids = scalar_a ? n.in[0] : n.in[1];
          const Id idm = scalar_a ? n.in[1] : n.in[0];
          if (wants(ids)) {
            double acc = (g.re.cwiseProduct(vm.re)).sum();
            if (vm.is_complex()) acc += (g.im.cwiseProduct(vm.im)).sum();
            padj(ids).re(0, 0) += acc;
          }
          if (wants(idm)) {
            Value& pa = padj(idm);
            const double s = vs.re(0, 0);
            pa.re += s * g.re;
            if (pa.is_complex()) pa.im += s * g.im;
          }
        } else if (va.is_complex()) {
          // c = a*b (complex): a_bar = conj(b)*g, b_bar = conj(a)*g.
          if (wants(n.in[0])) {
            Value& pa = padj(n.in[0]);
            pa.re += vb.re.cwiseProduct(g.re) + vb.im.cwiseProduct(g.im);
            pa.im += vb.re.cwiseProduct(g.im) - vb.im.cwiseProduct(g.re);
          }
          if (wants(n.in[1])) {
            Value& pb = padj(n.in[1]);
            pb.re += va.re.cwiseProduct(g.re) + va.im.cwiseProduct(g.im);
            pb.im += va.re.cwiseProduct(g.im) - va.im.cwiseProduct(g.re);
          }
        } else {
          if (wants(n.in[0])) padj(n.in[0]).re += g.re.cwiseProduct(vb.re);
          if (wants(n.in[1])) padj(n.in[1]).re += g.re.cwiseProduct(va.re);
        }
        break;
      }
      case Primitive::channel_linear: {
        const Value& vw = nodes_[static_cast<std::size_t>(n.in[0])].val;
        const Value& vx = nodes_[static_cast<std::size_t>(n.in[2])].val;
        if (wants(n.in[0]))
          padj(n.in[0]).re.noalias() += g.re * vx.re.transpose();
        if (wants(n.in[1])) padj(n.in[1]).re += g.re.rowwise().sum();
        if (wants(n.in[2]))
          padj(n.in[2]).re.noalias() += vw.re.transpose() * g.re;
        break;
      }
      case Primitive::mode_multiply: {
        const Value& vw = nodes_[static_cast<std::size_t>(n.in[0])].val;
        const Value& vx = nodes_[static_cast<std::size_t>(n.in[1])].val;
        const Eigen::Index c_in = vx.rows();
        const Eigen::Index k = vx.cols();
        const Eigen::Index c_out = vw.cols();
        for (Eigen::Index m = 0; m < k; ++m) {
          const auto wre = vw.re.block(m * c_in, 0, c_in, c_out);
          const auto wim = vw.im.block(m * c_in, 0, c_in, c_out);
          if (wants(n.in[1])) {
            Value& px = padj(n.in[1]);
            px.re.col(m).noalias() += wre * g.re.col(m);
            px.re.col(m).noalias() += wim * g.im.col(m);
            px.im.col(m).noalias() += wre * g.im.col(m);
            px.im.col(m).noalias() -= wim * g.re.col(m);
          }
          if (wants(n.in[0])) {
            Value& pw = padj(n.in[0]);
            auto pre = pw.re.block(m * c_in, 0, c_in, c_out);
            auto pim = pw.im.block(m * c_in, 0, c_in, c_out);
            pre.noalias() += vx.re.col(m) * g.re.col(m).transpose();
            pre.noalias() += vx.im.col(m) * g.im.col(m).transpose();
            pim.noalias() += vx.re.col(m) * g.im.col(m).transpose();
            pim.noalias() -= vx.im.col(m) * g.re.col(m).transpose();
          }
        }
        break;
      }
      case Primitive::fft_real: {
        if (!wants(n.in[0])) break;
        Value& pa = padj(n.in[0]);
        const Eigen::Index nn = pa.re.cols();
        Eigen::VectorXcd grow(g.re.cols());
        for (Eigen::Index r = 0; r < g.re.rows(); ++r) {
          grow.real() = g.re.row(r);
          grow.imag() = g.im.row(r);
          pa.re.row(r) += fft_real_adjoint(grow, nn).transpose();
        }
        break;
      }
      case Primitive::ifft_real: {
        if (!wants(n.in[0])) break;
        Value& pa = padj(n.in[0]);
        Eigen::VectorXd grow(g.re.cols());
        for (Eigen::Index r = 0; r < g.re.rows(); ++r) {
          grow = g.re.row(r);
          const Eigen::VectorXcd xb = ifft_real_adjoint(grow, n.i0);
          pa.re.row(r) += xb.real().transpose();
          pa.im.row(r) += xb.imag().transpose();
        }
        break;
      }
      case Primitive::gelu: {
        if (!wants(n.in[0])) break;
        const Value& vx = nodes_[static_cast<std::size_t>(n.in[0])].val;
        padj(n.in[0]).re +=
            g.re.cwiseProduct(vx.re.unaryExpr([](double v) { return gelu_grad(v); }));
        break;
      }
      case Primitive::softplus: {
        if (!wants(n.in[0])) break;
        const Value& vx = nodes_[static_cast<std::size_t>(n.in[0])].val;
        padj(n.in[0]).re +=
            g.re.cwiseProduct(vx.re.unaryExpr([](double v) { return sigmoid_fn(v); }));
        break;
      }
      case Primitive::sqrt_elem: {
        if (!wants(n.in[0])) break;
        // d sqrt(x) = 1/(2 sqrt(x)); zero subgradient at x = 0.
        padj(n.in[0]).re += g.re.cwiseProduct(n.val.re.unaryExpr(
            [](double s) { return s > 0.0 ? 0.5 / s : 0.0; }));
        break;
      }
      case Primitive::reduce_sum: {
        if (!wants(n.in[0])) break;
        Value& pa = padj(n.in[0]);
        const double gs = g.re(0, 0);
        pa.re.array() += gs;
        if (pa.is_complex()) pa.im.array() += gs;
        break;
      }
      case Primitive::grid_norm: {
        if (!wants(n.in[0])) break;
        const Value& vx = nodes_[static_cast<std::size_t>(n.in[0])].val;
        const double out = n.val.re(0, 0);
        if (out > 0.0)
          padj(n.in[0]).re += (g.re(0, 0) * n.d0 / out) * vx.re;
        break;
      }
      case Primitive::truncate_modes: {
        if (!wants(n.in[0])) break;
        Value& pa = padj(n.in[0]);
        pa.re.leftCols(n.i0) += g.re;
        pa.im.leftCols(n.i0) += g.im;
        break;
      }
      case Primitive::pad_modes: {
        if (!wants(n.in[0])) break;
        Value& pa = padj(n.in[0]);
        pa.re += g.re.leftCols(pa.re.cols());
        pa.im += g.im.leftCols(pa.im.cols());
        break;
      }
    }
  }
}

}  // namespace pno

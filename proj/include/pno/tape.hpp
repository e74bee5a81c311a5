#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "pno/errors.hpp"

namespace pno {

// Dense value flowing through the tape: a real matrix, or a complex matrix
// held as separate real/imaginary parts. Gradients of complex values follow
// the pair-of-real-partials convention: grad.re = dL/d(Re z), grad.im =
// dL/d(Im z).
struct Value {
  Eigen::MatrixXd re;
  Eigen::MatrixXd im;  // empty for real values

  bool is_complex() const { return im.size() != 0; }
  Eigen::Index rows() const { return re.rows(); }
  Eigen::Index cols() const { return re.cols(); }
  bool same_shape(const Value& o) const {
    return rows() == o.rows() && cols() == o.cols() &&
           is_complex() == o.is_complex();
  }
  bool is_real_scalar() const { return !is_complex() && re.size() == 1; }

  static Value real(Eigen::MatrixXd m) { return Value{std::move(m), {}}; }
  static Value complex(Eigen::MatrixXd re_part, Eigen::MatrixXd im_part) {
    if (re_part.rows() != im_part.rows() || re_part.cols() != im_part.cols())
      throw config_error("complex value needs matching re/im shapes");
    return Value{std::move(re_part), std::move(im_part)};
  }
  static Value scalar(double x) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = x;
    return Value{std::move(m), {}};
  }
  static Value zeros_like(const Value& v) {
    Value z;
    z.re = Eigen::MatrixXd::Zero(v.rows(), v.cols());
    if (v.is_complex()) z.im = Eigen::MatrixXd::Zero(v.rows(), v.cols());
    return z;
  }
};

enum class Primitive {
  constant,
  leaf,
  add,
  subtract,
  multiply,
  channel_linear,
  mode_multiply,
  fft_real,
  ifft_real,
  gelu,
  truncate_modes,
  pad_modes,
  reduce_sum,
  sqrt_elem,
  grid_norm,
  softplus,
};

// Reverse-mode tape over a fixed primitive vocabulary. Values are recorded
// eagerly on the forward pass; backward() walks the tape once, accumulating
// adjoints for every node that (transitively) depends on a leaf.
class Tape {
 public:
  using Id = int;

  struct Node {
    Primitive op;
    Id in[3] = {-1, -1, -1};
    Value val;
    Value adj;  // allocated lazily during backward
    bool needs_grad = false;
    int i0 = 0;     // retained-mode count (truncate/pad)
    double d0 = 0;  // quadrature weight (grid_norm)
  };

  // Entry points for data. Leaves receive gradients; constants (observations,
  // dropout masks, noise draws) do not.
  Id leaf(Value v);
  Id constant(Value v);
  Id scalar_constant(double x) { return constant(Value::scalar(x)); }

  // a + b, a - b: same shape and kind.
  Id add(Id a, Id b);
  Id subtract(Id a, Id b);
  // Elementwise product. Same shape and kind (real*real or complex*complex),
  // or one operand a real 1x1 scalar that scales the other.
  Id multiply(Id a, Id b);
  // w*x + bias with w real (c_out, c_in), bias real (c_out, 1) broadcast over
  // columns, x real (c_in, n).
  Id channel_linear(Id w, Id bias, Id x);
  // Per-mode channel contraction: x complex (c_in, k), w complex (k*c_in,
  // c_out) holding one (c_in, c_out) block per mode; output (c_out, k).
  Id mode_multiply(Id w, Id x);
  // Row-wise transforms between real (c, n) and complex half spectra
  // (c, n/2+1). The inverse reads only the real parts of the DC and Nyquist
  // bins, so their imaginary adjoints are zero.
  Id fft_real(Id x);
  Id ifft_real(Id x, int n);
  // Keep the first k columns of a half spectrum / zero-pad back to k_full.
  Id truncate_modes(Id x, int k);
  Id pad_modes(Id x, int k_full);
  Id gelu(Id x);
  Id softplus(Id x);
  Id sqrt_elem(Id x);
  // Sum of all entries -> real 1x1. For complex input the real and imaginary
  // parts are summed together (used to collapse spectra in gradient checks).
  Id reduce_sum(Id x);
  // sqrt(weight * sum x^2) -> real 1x1; the discretized L2 norm when weight
  // is the quadrature weight of the grid.
  Id grid_norm(Id x, double weight);

  // String-keyed dispatcher; unknown names are a configuration error.
  // i0 carries the mode count for truncate_modes/pad_modes, d0 the weight for
  // grid_norm; both are ignored elsewhere.
  Id record(const std::string& op, const std::vector<Id>& inputs, int i0 = 0,
            double d0 = 0.0);

  // Reverse sweep from a real scalar root.
  void backward(Id root);

  const Value& value(Id id) const { return node(id).val; }
  // Gradient accumulated at id; zeros if backward never reached it.
  Value grad_of(Id id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  const Node& node(Id id) const;
  Node& node(Id id);
  Id push(Node n);
  void ensure_adj(Node& n);
  // Adds g into the adjoint of input slot `slot` of node `id` if that input
  // wants gradients.
  std::vector<Node> nodes_;
};

}  // namespace pno

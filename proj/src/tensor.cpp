#include "egograph/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace egograph {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

void round_storage(std::vector<double>& v, Precision prec) {
  if (prec == Precision::f32) {
    for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
  }
}

void check_matrix(const Tensor& t, const char* op, const char* arg) {
  if (!t.defined())
    throw ShapeError(std::string(op) + ": " + arg + " is undefined");
  if (t.shape().size() != 2)
    throw ShapeError(std::string(op) + ": " + arg + " must be 2-d, got " +
                     shape_str(t.shape()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch (" +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()) + ")");
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad, Precision prec) {
  return from_data(shape, std::vector<double>(shape_numel(shape), 0.0),
                   requires_grad, prec);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad,
                    Precision prec) {
  return from_data(shape, std::vector<double>(shape_numel(shape), value),
                   requires_grad, prec);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad, Precision prec) {
  if (data.size() != shape_numel(shape))
    throw ShapeError("from_data: " + std::to_string(data.size()) +
                     " values do not fill shape " + shape_str(shape));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->precision = prec;
  round_storage(impl->data, prec);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, Precision prec) {
  return from_data({1}, {value}, false, prec);
}

std::size_t Tensor::rows() const {
  if (impl_->shape.size() != 2)
    throw ShapeError("rows: tensor is not 2-d, shape " + shape_str(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (impl_->shape.size() != 2)
    throw ShapeError("cols: tensor is not 2-d, shape " + shape_str(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
  return impl_->data[0];
}

Tensor Tensor::clone() const {
  if (!defined()) return Tensor{};
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  impl->precision = impl_->precision;
  return Tensor(std::move(impl));
}

void Tensor::set(std::size_t i, double v) {
  if (impl_->precision == Precision::f32)
    v = static_cast<double>(static_cast<float>(v));
  impl_->data[i] = v;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty())
    throw NumericError("grad: gradient was never populated");
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tape::make_output(Shape shape, std::vector<double> data,
                         const std::vector<Tensor>& inputs) {
  bool rg = false;
  for (const auto& t : inputs) rg = rg || t.requires_grad();
  return Tensor::from_data(std::move(shape), std::move(data), rg, precision_);
}

Tape::Entry& Tape::push(Op op, std::vector<Tensor> inputs, Tensor output) {
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), 0, 0, 0.0, {}});
  return entries_.back();
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul", "lhs");
  check_matrix(b, "matmul", "rhs");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions mismatch (" +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()) + ")");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  Tensor o = make_output({m, n}, std::move(out), {a, b});
  push(Op::MatMul, {a, b}, o);
  return o;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tensor o = make_output(a.shape(), std::move(out), {a, b});
  push(Op::Add, {a, b}, o);
  return o;
}

Tensor Tape::elementwise_mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "elementwise_mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tensor o = make_output(a.shape(), std::move(out), {a, b});
  push(Op::Mul, {a, b}, o);
  return o;
}

Tensor Tape::scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  Tensor o = make_output(a.shape(), std::move(out), {a});
  push(Op::Scale, {a}, o).alpha = factor;
  return o;
}

Tensor Tape::relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.at(i));
  Tensor o = make_output(x.shape(), std::move(out), {x});
  push(Op::Relu, {x}, o);
  return o;
}

Tensor Tape::softmax_row(const Tensor& x, const Tensor& mask) {
  check_matrix(x, "softmax_row", "x");
  check_same_shape(x, mask, "softmax_row");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double rowmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const double m = mask.at(i, j);
      if (m != 0.0 && m != 1.0)
        throw NumericError("softmax_row: mask entries must be 0 or 1");
      if (m == 1.0) rowmax = std::max(rowmax, x.at(i, j));
    }
    if (rowmax == -std::numeric_limits<double>::infinity())
      throw NumericError("softmax_row: row " + std::to_string(i) +
                         " of the mask has no nonzero entry");
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (mask.at(i, j) == 1.0) {
        const double e = std::exp(x.at(i, j) - rowmax);
        out[i * c + j] = e;
        denom += e;
      }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= denom;
  }
  Tensor o = make_output({r, c}, std::move(out), {x});
  push(Op::SoftmaxRow, {x, mask}, o);
  return o;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double eps) {
  check_matrix(x, "layer_norm", "x");
  const std::size_t n = x.rows(), d = x.cols();
  if (d < 2)
    throw ShapeError("layer_norm: needs at least 2 features, got " +
                     shape_str(x.shape()));
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " do not match row width " +
                     std::to_string(d));
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = (x.at(i, j) - mean) * inv * gain.at(j) + bias.at(j);
  }
  Tensor o = make_output({n, d}, std::move(out), {x, gain, bias});
  push(Op::LayerNorm, {x, gain, bias}, o).alpha = eps;
  return o;
}

Tensor Tape::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_matrix(x, "linear", "x");
  check_matrix(w, "linear", "w");
  if (x.cols() != w.rows())
    throw ShapeError("linear: x " + shape_str(x.shape()) + " does not match w " +
                     shape_str(w.shape()));
  const std::size_t n = x.rows(), d = x.cols(), m = w.cols();
  if (b.numel() != m)
    throw ShapeError("linear: bias " + shape_str(b.shape()) +
                     " does not match output width " + std::to_string(m));
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = b.at(j);
    for (std::size_t p = 0; p < d; ++p) {
      const double xip = x.at(i, p);
      for (std::size_t j = 0; j < m; ++j)
        out[i * m + j] += xip * w.at(p, j);
    }
  }
  Tensor o = make_output({n, m}, std::move(out), {x, w, b});
  push(Op::Linear, {x, w, b}, o);
  return o;
}

Tensor Tape::concat_lastdim(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_lastdim: no inputs");
  const std::size_t r = xs[0].rows();
  std::size_t total = 0;
  for (const auto& t : xs) {
    check_matrix(t, "concat_lastdim", "input");
    if (t.rows() != r)
      throw ShapeError("concat_lastdim: row mismatch (" +
                       shape_str(xs[0].shape()) + " vs " + shape_str(t.shape()) +
                       ")");
    total += t.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const auto& t : xs) {
    const std::size_t c = t.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out[i * total + off + j] = t.at(i, j);
    off += c;
  }
  Tensor o = make_output({r, total}, std::move(out), xs);
  push(Op::ConcatLastDim, xs, o);
  return o;
}

Tensor Tape::concat_lastdim(const Tensor& a, const Tensor& b) {
  return concat_lastdim(std::vector<Tensor>{a, b});
}

Tensor Tape::concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = xs[0].cols();
  std::size_t total = 0;
  for (const auto& t : xs) {
    check_matrix(t, "concat_rows", "input");
    if (t.cols() != c)
      throw ShapeError("concat_rows: column mismatch (" +
                       shape_str(xs[0].shape()) + " vs " + shape_str(t.shape()) +
                       ")");
    total += t.rows();
  }
  std::vector<double> out(total * c);
  std::size_t off = 0;
  for (const auto& t : xs) {
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < c; ++j) out[(off + i) * c + j] = t.at(i, j);
    off += t.rows();
  }
  Tensor o = make_output({total, c}, std::move(out), xs);
  push(Op::ConcatRows, xs, o);
  return o;
}

Tensor Tape::reduce_max_over_axis(const Tensor& x, int axis) {
  check_matrix(x, "reduce_max_over_axis", "x");
  if (axis != 0 && axis != 1)
    throw ShapeError("reduce_max_over_axis: axis must be 0 or 1");
  const std::size_t r = x.rows(), c = x.cols();
  Shape oshape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  std::vector<double> out(shape_numel(oshape));
  std::vector<std::size_t> arg(out.size());
  if (axis == 0) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < r; ++i)
        if (x.at(i, j) > x.at(best, j)) best = i;
      out[j] = x.at(best, j);
      arg[j] = best;
    }
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (x.at(i, j) > x.at(i, best)) best = j;
      out[i] = x.at(i, best);
      arg[i] = best;
    }
  }
  Tensor o = make_output(std::move(oshape), std::move(out), {x});
  Entry& e = push(Op::ReduceMax, {x}, o);
  e.axis = axis;
  e.saved = std::move(arg);
  return o;
}

Tensor Tape::reduce_mean_over_axis(const Tensor& x, int axis) {
  check_matrix(x, "reduce_mean_over_axis", "x");
  if (axis != 0 && axis != 1)
    throw ShapeError("reduce_mean_over_axis: axis must be 0 or 1");
  const std::size_t r = x.rows(), c = x.cols();
  Shape oshape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  std::vector<double> out(shape_numel(oshape), 0.0);
  if (axis == 0) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += x.at(i, j);
    for (auto& v : out) v /= static_cast<double>(r);
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[i] += x.at(i, j);
      out[i] /= static_cast<double>(c);
    }
  }
  Tensor o = make_output(std::move(oshape), std::move(out), {x});
  push(Op::ReduceMean, {x}, o).axis = axis;
  return o;
}

Tensor Tape::transpose(const Tensor& x) {
  check_matrix(x, "transpose", "x");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.at(i, j);
  Tensor o = make_output({c, r}, std::move(out), {x});
  push(Op::Transpose, {x}, o);
  return o;
}

Tensor Tape::row(const Tensor& x, std::size_t i) {
  check_matrix(x, "row", "x");
  if (i >= x.rows())
    throw ShapeError("row: index " + std::to_string(i) + " out of " +
                     shape_str(x.shape()));
  const std::size_t c = x.cols();
  std::vector<double> out(c);
  for (std::size_t j = 0; j < c; ++j) out[j] = x.at(i, j);
  Tensor o = make_output({1, c}, std::move(out), {x});
  push(Op::Row, {x}, o).index = i;
  return o;
}

Tensor Tape::sum_all(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x.at(i);
  Tensor o = make_output({1}, {s}, {x});
  push(Op::SumAll, {x}, o);
  return o;
}

Tensor Tape::cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t n = logits.numel();
  if (logits.shape().size() == 2 && logits.rows() != 1)
    throw ShapeError("cross_entropy: logits must be a vector or single row, got " +
                     shape_str(logits.shape()));
  if (label >= n)
    throw NumericError("cross_entropy: label " + std::to_string(label) +
                       " out of range for " + std::to_string(n) + " classes");
  double m = logits.at(0);
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits.at(i));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(logits.at(i) - m);
  const double loss = m + std::log(s) - logits.at(label);
  Tensor o = make_output({1}, {loss}, {logits});
  push(Op::CrossEntropy, {logits}, o).index = label;
  return o;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw NumericError("backward: loss must be a defined scalar");
  bool found = false;
  for (const auto& e : entries_)
    if (e.output.id() == loss.id()) found = true;
  if (!found)
    throw NumericError("backward: loss is not an output recorded on this tape");

  // Zero every gradient the sweep may touch, then seed the loss.
  std::unordered_set<const void*> seen;
  for (auto& e : entries_) {
    for (auto& t : e.inputs)
      if (t.requires_grad() && seen.insert(t.id()).second) t.zero_grad();
    if (e.output.requires_grad() && seen.insert(e.output.id()).second)
      e.output.zero_grad();
  }
  if (!loss.requires_grad()) return;  // nothing reaches a trainable leaf
  loss.impl_->grad.assign(1, 1.0);

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    backward_entry(*it);
}

void Tape::backward_entry(const Entry& e) {
  if (!e.output.requires_grad() || !e.output.grad_allocated()) return;
  const std::vector<double>& g = e.output.impl_->grad;
  auto grad_of = [](const Tensor& t) -> std::vector<double>* {
    return t.requires_grad() ? &t.impl_->grad : nullptr;
  };

  switch (e.op) {
    case Op::MatMul: {
      const Tensor& a = e.inputs[0];
      const Tensor& b = e.inputs[1];
      const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      if (auto* da = grad_of(a)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
              acc += g[i * n + j] * b.at(p, j);
            (*da)[i * k + p] += acc;
          }
      }
      if (auto* db = grad_of(b)) {
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i)
              acc += a.at(i, p) * g[i * n + j];
            (*db)[p * n + j] += acc;
          }
      }
      break;
    }
    case Op::Add: {
      for (int s = 0; s < 2; ++s)
        if (auto* d = grad_of(e.inputs[s]))
          for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
      break;
    }
    case Op::Mul: {
      const Tensor& a = e.inputs[0];
      const Tensor& b = e.inputs[1];
      if (auto* da = grad_of(a))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b.at(i);
      if (auto* db = grad_of(b))
        for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a.at(i);
      break;
    }
    case Op::Scale: {
      if (auto* d = grad_of(e.inputs[0]))
        for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i] * e.alpha;
      break;
    }
    case Op::Relu: {
      const Tensor& x = e.inputs[0];
      if (auto* d = grad_of(x))
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x.at(i) > 0.0) (*d)[i] += g[i];
      break;
    }
    case Op::SoftmaxRow: {
      const Tensor& x = e.inputs[0];
      const Tensor& mask = e.inputs[1];
      const Tensor& y = e.output;
      if (auto* d = grad_of(x)) {
        const std::size_t r = x.rows(), c = x.cols();
        for (std::size_t i = 0; i < r; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j)
            if (mask.at(i, j) == 1.0) s += g[i * c + j] * y.at(i, j);
          for (std::size_t j = 0; j < c; ++j)
            if (mask.at(i, j) == 1.0)
              (*d)[i * c + j] += y.at(i, j) * (g[i * c + j] - s);
        }
      }
      break;
    }
    case Op::LayerNorm: {
      const Tensor& x = e.inputs[0];
      const Tensor& gain = e.inputs[1];
      const Tensor& bias = e.inputs[2];
      const std::size_t n = x.rows(), dd = x.cols();
      const double eps = e.alpha;
      std::vector<double> y(dd);
      for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < dd; ++j) mean += x.at(i, j);
        mean /= static_cast<double>(dd);
        double var = 0.0;
        for (std::size_t j = 0; j < dd; ++j) {
          const double c = x.at(i, j) - mean;
          var += c * c;
        }
        var /= static_cast<double>(dd);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < dd; ++j) y[j] = (x.at(i, j) - mean) * inv;

        if (auto* dg = grad_of(gain))
          for (std::size_t j = 0; j < dd; ++j)
            (*dg)[j] += g[i * dd + j] * y[j];
        if (auto* db = grad_of(bias))
          for (std::size_t j = 0; j < dd; ++j) (*db)[j] += g[i * dd + j];
        if (auto* dx = grad_of(x)) {
          double mean_h = 0.0, mean_hy = 0.0;
          for (std::size_t j = 0; j < dd; ++j) {
            const double h = g[i * dd + j] * gain.at(j);
            mean_h += h;
            mean_hy += h * y[j];
          }
          mean_h /= static_cast<double>(dd);
          mean_hy /= static_cast<double>(dd);
          for (std::size_t j = 0; j < dd; ++j) {
            const double h = g[i * dd + j] * gain.at(j);
            (*dx)[i * dd + j] += (h - mean_h - y[j] * mean_hy) * inv;
          }
        }
      }
      break;
    }
    case Op::Linear: {
      const Tensor& x = e.inputs[0];
      const Tensor& w = e.inputs[1];
      const Tensor& b = e.inputs[2];
      const std::size_t n = x.rows(), d = x.cols(), m = w.cols();
      if (auto* dx = grad_of(x))
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < d; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j)
              acc += g[i * m + j] * w.at(p, j);
            (*dx)[i * d + p] += acc;
          }
      if (auto* dw = grad_of(w))
        for (std::size_t p = 0; p < d; ++p)
          for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
              acc += x.at(i, p) * g[i * m + j];
            (*dw)[p * m + j] += acc;
          }
      if (auto* db = grad_of(b))
        for (std::size_t j = 0; j < m; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += g[i * m + j];
          (*db)[j] += acc;
        }
      break;
    }
    case Op::ConcatLastDim: {
      const std::size_t r = e.output.rows(), total = e.output.cols();
      std::size_t off = 0;
      for (const auto& t : e.inputs) {
        const std::size_t c = t.cols();
        if (auto* d = grad_of(t))
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              (*d)[i * c + j] += g[i * total + off + j];
        off += c;
      }
      break;
    }
    case Op::ConcatRows: {
      const std::size_t c = e.output.cols();
      std::size_t off = 0;
      for (const auto& t : e.inputs) {
        if (auto* d = grad_of(t))
          for (std::size_t i = 0; i < t.rows(); ++i)
            for (std::size_t j = 0; j < c; ++j)
              (*d)[i * c + j] += g[(off + i) * c + j];
        off += t.rows();
      }
      break;
    }
    case Op::ReduceMax: {
      const Tensor& x = e.inputs[0];
      if (auto* d = grad_of(x)) {
        const std::size_t c = x.cols();
        if (e.axis == 0) {
          for (std::size_t j = 0; j < c; ++j)
            (*d)[e.saved[j] * c + j] += g[j];
        } else {
          for (std::size_t i = 0; i < x.rows(); ++i)
            (*d)[i * c + e.saved[i]] += g[i];
        }
      }
      break;
    }
    case Op::ReduceMean: {
      const Tensor& x = e.inputs[0];
      if (auto* d = grad_of(x)) {
        const std::size_t r = x.rows(), c = x.cols();
        if (e.axis == 0) {
          const double inv = 1.0 / static_cast<double>(r);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) (*d)[i * c + j] += g[j] * inv;
        } else {
          const double inv = 1.0 / static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) (*d)[i * c + j] += g[i] * inv;
        }
      }
      break;
    }
    case Op::Transpose: {
      const Tensor& x = e.inputs[0];
      if (auto* d = grad_of(x)) {
        const std::size_t r = x.rows(), c = x.cols();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) (*d)[i * c + j] += g[j * r + i];
      }
      break;
    }
    case Op::Row: {
      const Tensor& x = e.inputs[0];
      if (auto* d = grad_of(x)) {
        const std::size_t c = x.cols();
        for (std::size_t j = 0; j < c; ++j) (*d)[e.index * c + j] += g[j];
      }
      break;
    }
    case Op::SumAll: {
      if (auto* d = grad_of(e.inputs[0]))
        for (auto& v : *d) v += g[0];
      break;
    }
    case Op::CrossEntropy: {
      const Tensor& logits = e.inputs[0];
      if (auto* d = grad_of(logits)) {
        const std::size_t n = logits.numel();
        double m = logits.at(0);
        for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits.at(i));
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::exp(logits.at(i) - m);
        for (std::size_t i = 0; i < n; ++i) {
          const double p = std::exp(logits.at(i) - m) / s;
          (*d)[i] += (p - (i == e.index ? 1.0 : 0.0)) * g[0];
        }
      }
      break;
    }
  }
}

}  // namespace egograph

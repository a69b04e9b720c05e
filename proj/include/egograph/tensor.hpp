#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace egograph {

/// Storage precision of a tensor. f32 keeps values rounded through IEEE
/// single precision (training, checkpoints); f64 is full double (tests,
/// finite-difference checks).
enum class Precision { f64, f32 };

/// Thrown on dimension mismatches; the message names both shapes.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a computation produces or meets non-finite values or an
/// otherwise invalid numeric state (empty softmax row, bad label, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches it
  bool requires_grad = false;
  Precision precision = Precision::f64;
};
}  // namespace detail

/// Dense row-major tensor handle. Values are immutable during a forward
/// pass; the gradient buffer is filled by Tape::backward. Copying a Tensor
/// copies the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false,
                      Precision prec = Precision::f64);
  static Tensor full(Shape shape, double value, bool requires_grad = false,
                     Precision prec = Precision::f64);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false,
                          Precision prec = Precision::f64);
  static Tensor scalar(double value, Precision prec = Precision::f64);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_matrix() const { return defined() && impl_->shape.size() == 2; }

  double at(std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const {
    return impl_->data[r * cols() + c];
  }
  /// Scalar extraction; throws unless numel() == 1.
  double item() const;

  const std::vector<double>& data() const { return impl_->data; }
  /// Deep copy: fresh storage with the same shape, values, and precision.
  Tensor clone() const;
  /// Direct value access for optimizers and I/O. Never call while a tape
  /// recorded against this tensor is still alive.
  std::vector<double>& values() { return impl_->data; }
  /// Store one value, rounded through the tensor's precision.
  void set(std::size_t i, double v);

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
  Precision precision() const { return impl_->precision; }

  bool grad_allocated() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Identity of the underlying storage; used by Tape bookkeeping.
  const void* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend class Tape;
};

/// Reverse-mode tape. Ops record themselves in program order; backward
/// replays them in exact reverse order and accumulates gradients into every
/// requires_grad tensor reachable from the loss. One tape per worker; a
/// tape is not thread safe.
class Tape {
 public:
  explicit Tape(Precision prec = Precision::f64) : precision_(prec) {}

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor elementwise_mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  Tensor relu(const Tensor& x);
  /// Masked row softmax. mask entries must be exactly 0 or 1 and every row
  /// needs at least one unmasked entry; masked-out outputs are exactly 0.
  /// No gradient flows into the mask.
  Tensor softmax_row(const Tensor& x, const Tensor& mask);
  /// Per-row normalization (population variance, eps inside the sqrt)
  /// followed by elementwise gain/bias.
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);
  /// x [n x D] * w [D x M] + b [M] broadcast over rows, the only
  /// broadcasting in the op set.
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
  Tensor concat_lastdim(const std::vector<Tensor>& xs);
  Tensor concat_lastdim(const Tensor& a, const Tensor& b);
  Tensor concat_rows(const std::vector<Tensor>& xs);
  /// Max over one axis of a matrix; ties route the gradient to the lowest
  /// index.
  Tensor reduce_max_over_axis(const Tensor& x, int axis);
  Tensor reduce_mean_over_axis(const Tensor& x, int axis);
  Tensor transpose(const Tensor& x);
  Tensor row(const Tensor& x, std::size_t i);
  Tensor sum_all(const Tensor& x);
  /// -log softmax(logits)[label], stabilized through log-sum-exp. logits is
  /// a vector or a single row.
  Tensor cross_entropy(const Tensor& logits, std::size_t label);

  /// Reverse sweep from a scalar loss recorded on this tape. Gradients of
  /// every requires_grad tensor on the tape are zeroed first, so repeated
  /// calls do not accumulate across each other.
  void backward(const Tensor& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  Precision precision() const { return precision_; }

 private:
  enum class Op {
    MatMul,
    Add,
    Mul,
    Scale,
    Relu,
    SoftmaxRow,
    LayerNorm,
    Linear,
    ConcatLastDim,
    ConcatRows,
    ReduceMax,
    ReduceMean,
    Transpose,
    Row,
    SumAll,
    CrossEntropy,
  };

  struct Entry {
    Op op;
    std::vector<Tensor> inputs;
    Tensor output;
    int axis = 0;
    std::size_t index = 0;          // row index / class label
    double alpha = 0.0;             // scale factor / layer_norm eps
    std::vector<std::size_t> saved; // argmax indices for ReduceMax
  };

  Tensor make_output(Shape shape, std::vector<double> data,
                     const std::vector<Tensor>& inputs);
  Entry& push(Op op, std::vector<Tensor> inputs, Tensor output);
  void backward_entry(const Entry& e);

  std::vector<Entry> entries_;
  Precision precision_;
};

/// Free-function form of the reverse sweep.
inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

}  // namespace egograph

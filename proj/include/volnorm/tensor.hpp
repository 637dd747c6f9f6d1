#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace volnorm::tk {

using Shape = std::vector<int>;

long shape_numel(const Shape& shape);

/// An n-dimensional 32-bit real array participating in a differentiable
/// computation. Tensors are cheap handles onto shared storage; the grad
/// accumulator always shape-matches the values. Every operation validates
/// that its result is finite and throws NumericError otherwise.
class Tensor {
 public:
  Tensor() = default;

  /// Trainable leaf (requires_grad = true).
  static Tensor param(Shape shape, Eigen::ArrayXf values);
  /// Non-trainable leaf.
  static Tensor constant(Shape shape, Eigen::ArrayXf values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(float value);
  /// One-element tensor storing float(value) plus a double-precision shadow
  /// of the reduction, read back by scalar_double(). Reductions use this so
  /// the gradient checker is not limited by float storage rounding.
  static Tensor scalar_from_double(double value);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const;
  long numel() const;
  int rank() const;

  Eigen::ArrayXf& values();
  const Eigen::ArrayXf& values() const;
  Eigen::ArrayXf& grad();
  const Eigen::ArrayXf& grad() const;
  bool requires_grad() const;

  float scalar_value() const;  ///< value of a one-element tensor
  double scalar_double() const;  ///< shadow value when present, else the float

  /// Stable identity of the underlying storage; optimizer state is keyed
  /// on this.
  const void* id() const;

  struct Data;
  const std::shared_ptr<Data>& data() const { return data_; }

 private:
  explicit Tensor(std::shared_ptr<Data> d) : data_(std::move(d)) {}
  std::shared_ptr<Data> data_;
};

/// Records the operations of one forward pass as a tape; backward replays
/// it in reverse exactly once. A graph is confined to a single worker.
class Graph {
 public:
  /// Registers a backward step for an op that produced `out`. The closure
  /// scatters out's grad into the grads of the op's inputs. Exposed so
  /// modules can define custom differentiable operations.
  void record(std::function<void()> backward_fn);

  /// Seeds d(loss)/d(loss) = 1 and runs the tape in reverse, accumulating
  /// into every reachable grad. Throws NonScalarLoss unless loss has one
  /// element, and GraphConsumed on a second call.
  void backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return tape_.size(); }

 private:
  std::vector<std::function<void()>> tape_;
  bool consumed_ = false;
};

// --- operations ----------------------------------------------------------
// All take the recording graph first and return a fresh tensor.

/// 2D cross-correlation with zero padding. input [C_in, H, W], kernels
/// [C_out, C_in, k, k], bias [C_out]; output [C_out, H', W'] with
/// H' = floor((H + 2*padding - k) / stride) + 1.
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernels,
              const Tensor& bias, int stride = 1, int padding = 0);

/// Adjoint of conv2d's linear map at the same kernels and stride (zero
/// padding). input [C_out, H, W] -> output [C_in, (H-1)*stride + k, ...],
/// plus a per-output-channel bias [C_in].
Tensor conv2d_transpose(Graph& g, const Tensor& input, const Tensor& kernels,
                        const Tensor& bias, int stride);

/// weight [m, n] * input [n] + bias [m].
Tensor dense(Graph& g, const Tensor& input, const Tensor& weight,
             const Tensor& bias);

Tensor relu(Graph& g, const Tensor& x);
Tensor leaky_relu(Graph& g, const Tensor& x, float alpha);
Tensor sigmoid(Graph& g, const Tensor& x);

Tensor concat(Graph& g, const Tensor& a, const Tensor& b, int axis);
Tensor reshape(Graph& g, const Tensor& x, Shape shape);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul_scalar(Graph& g, const Tensor& a, float c);
/// a + lam * b, elementwise.
Tensor add_scaled(Graph& g, const Tensor& a, float lam, const Tensor& b);

Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);

/// Same values, no graph history; gradients stop here.
Tensor detach(const Tensor& x);

void zero_grad(const std::vector<Tensor>& params);

// --- gradient checking ----------------------------------------------------

struct FdCheckOptions {
  float epsilon = 1e-3f;
  /// 0 checks every coordinate; otherwise at most this many random
  /// coordinates per parameter (for large composed models).
  int max_coords_per_param = 0;
  /// Coordinates where analytic and numeric gradients BOTH fall below this
  /// magnitude are skipped. On deep float32 graphs the relative error of a
  /// near-zero gradient coordinate is dominated by forward rounding noise;
  /// per-op checks run with 0 (full coverage).
  float skip_below = 0.0f;
  /// Re-probes each coordinate at half the step and skips it when the two
  /// estimates disagree: that marks a probe contaminated by an activation
  /// kink inside the step (its error scales with the step), whereas an
  /// incorrect analytic gradient yields consistent estimates at both steps
  /// and is still reported.
  bool dual_step_filter = false;
  double probe_agreement_tol = 1e-4;
  std::uint64_t seed = 20240801;
};

/// Central finite differences per coordinate against the analytic grads of
/// build_loss. Returns the worst relative discrepancy, with denominator
/// max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(const std::function<Tensor(Graph&)>& build_loss,
                               const std::vector<Tensor>& params,
                               const FdCheckOptions& opts = {});
double finite_difference_check(const std::function<Tensor(Graph&)>& build_loss,
                               const std::vector<Tensor>& params,
                               float epsilon);

}  // namespace volnorm::tk

#include "volnorm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "volnorm/errors.hpp"
#include "volnorm/rng.hpp"

namespace volnorm::tk {

using RowMajorMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorMap = Eigen::Map<RowMajorMatrix>;
using ConstRowMajorMap = Eigen::Map<const RowMajorMatrix>;

long shape_numel(const Shape& shape) {
  long n = 1;
  for (int d : shape) n *= d;
  return n;
}

struct Tensor::Data {
  Shape shape;
  Eigen::ArrayXf values;
  Eigen::ArrayXf grad;
  bool requires_grad = false;
  double scalar_shadow = 0.0;
  bool has_scalar_shadow = false;
};

namespace {

std::shared_ptr<Tensor::Data> make_data(Shape shape, Eigen::ArrayXf values,
                                        bool requires_grad) {
  for (int d : shape) {
    if (d < 1) throw ShapeMismatch("tensor dimensions must be >= 1");
  }
  if (values.size() != shape_numel(shape)) {
    throw ShapeMismatch("value count does not match shape");
  }
  auto d = std::make_shared<Tensor::Data>();
  d->shape = std::move(shape);
  d->grad = Eigen::ArrayXf::Zero(values.size());
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return d;
}

}  // namespace

Tensor Tensor::param(Shape shape, Eigen::ArrayXf values) {
  return Tensor(make_data(std::move(shape), std::move(values), true));
}

Tensor Tensor::constant(Shape shape, Eigen::ArrayXf values) {
  return Tensor(make_data(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const long n = shape_numel(shape);
  return Tensor(make_data(std::move(shape), Eigen::ArrayXf::Zero(n),
                          requires_grad));
}

Tensor Tensor::scalar(float value) {
  Eigen::ArrayXf v(1);
  v[0] = value;
  return Tensor(make_data({1}, std::move(v), false));
}

Tensor Tensor::scalar_from_double(double value) {
  Eigen::ArrayXf v(1);
  v[0] = static_cast<float>(value);
  Tensor t(make_data({1}, std::move(v), false));
  t.data()->scalar_shadow = value;
  t.data()->has_scalar_shadow = true;
  return t;
}

const Shape& Tensor::shape() const { return data_->shape; }
long Tensor::numel() const { return data_->values.size(); }
int Tensor::rank() const { return static_cast<int>(data_->shape.size()); }
Eigen::ArrayXf& Tensor::values() { return data_->values; }
const Eigen::ArrayXf& Tensor::values() const { return data_->values; }
Eigen::ArrayXf& Tensor::grad() { return data_->grad; }
const Eigen::ArrayXf& Tensor::grad() const { return data_->grad; }
bool Tensor::requires_grad() const { return data_->requires_grad; }
const void* Tensor::id() const { return data_.get(); }

float Tensor::scalar_value() const {
  if (numel() != 1) throw ShapeMismatch("scalar_value on non-scalar tensor");
  return data_->values[0];
}

double Tensor::scalar_double() const {
  if (numel() != 1) throw ShapeMismatch("scalar_double on non-scalar tensor");
  return data_->has_scalar_shadow ? data_->scalar_shadow
                                  : static_cast<double>(data_->values[0]);
}

void Graph::record(std::function<void()> backward_fn) {
  tape_.push_back(std::move(backward_fn));
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) {
    throw GraphConsumed("backward already ran on this graph");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw NonScalarLoss("backward requires a one-element loss");
  }
  consumed_ = true;
  Tensor seed = loss;
  seed.grad()[0] += 1.0f;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

namespace {

Tensor op_output(Shape shape, Eigen::ArrayXf values, const char* op) {
  Tensor out = Tensor::constant(std::move(shape), std::move(values));
  if (!out.values().allFinite()) {
    throw NumericError(std::string(op) + " produced NaN or Inf");
  }
  return out;
}

// im2col for [C, H, W] input: column j holds the flattened C x k x k patch
// feeding output position j. Padding is zero-fill.
Eigen::MatrixXf im2col(const float* input, int channels, int height, int width,
                       int k, int stride, int padding, int out_h, int out_w) {
  Eigen::MatrixXf cols(channels * k * k, out_h * out_w);
  cols.setZero();
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const long col_index = static_cast<long>(oy) * out_w + ox;
      float* col = cols.data() + col_index * channels * k * k;
      for (int c = 0; c < channels; ++c) {
        const float* plane = input + static_cast<long>(c) * height * width;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride + ky - padding;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride + kx - padding;
            const float v = (iy >= 0 && iy < height && ix >= 0 && ix < width)
                                ? plane[iy * width + ix]
                                : 0.0f;
            col[(c * k + ky) * k + kx] = v;
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds column entries back onto the grid.
void col2im_add(const Eigen::MatrixXf& cols, float* output, int channels,
                int height, int width, int k, int stride, int padding,
                int out_h, int out_w) {
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const long col_index = static_cast<long>(oy) * out_w + ox;
      const float* col = cols.data() + col_index * channels * k * k;
      for (int c = 0; c < channels; ++c) {
        float* plane = output + static_cast<long>(c) * height * width;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride + kx - padding;
            if (ix < 0 || ix >= width) continue;
            plane[iy * width + ix] += col[(c * k + ky) * k + kx];
          }
        }
      }
    }
  }
}

struct ConvDims {
  int c_out, c_in, k;
};

ConvDims check_conv_args(const Tensor& input, const Tensor& kernels,
                         const Tensor& bias) {
  if (input.rank() != 3) throw ShapeMismatch("conv input must be [C, H, W]");
  if (kernels.rank() != 4 || kernels.shape()[2] != kernels.shape()[3]) {
    throw ShapeMismatch("kernels must be [C_out, C_in, k, k]");
  }
  if (bias.rank() != 1) throw ShapeMismatch("bias must be rank 1");
  return {kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]};
}

}  // namespace

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernels,
              const Tensor& bias, int stride, int padding) {
  const auto dims = check_conv_args(input, kernels, bias);
  if (input.shape()[0] != dims.c_in) {
    throw ShapeMismatch("conv2d: input channel count mismatch");
  }
  if (bias.shape()[0] != dims.c_out) {
    throw ShapeMismatch("conv2d: bias must be [C_out]");
  }
  if (stride < 1) throw ShapeMismatch("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeMismatch("conv2d: padding must be >= 0");
  const int height = input.shape()[1], width = input.shape()[2];
  if (dims.k > height + 2 * padding || dims.k > width + 2 * padding) {
    throw ShapeMismatch("conv2d: kernel larger than padded input");
  }
  const int out_h = (height + 2 * padding - dims.k) / stride + 1;
  const int out_w = (width + 2 * padding - dims.k) / stride + 1;

  auto cols = std::make_shared<Eigen::MatrixXf>(
      im2col(input.values().data(), dims.c_in, height, width, dims.k, stride,
             padding, out_h, out_w));

  Eigen::ArrayXf out_values(static_cast<long>(dims.c_out) * out_h * out_w);
  {
    ConstRowMajorMap kmat(kernels.values().data(), dims.c_out,
                          dims.c_in * dims.k * dims.k);
    RowMajorMap omat(out_values.data(), dims.c_out, out_h * out_w);
    omat.noalias() = kmat * (*cols);
    for (int c = 0; c < dims.c_out; ++c) {
      omat.row(c).array() += bias.values()[c];
    }
  }
  Tensor out =
      op_output({dims.c_out, out_h, out_w}, std::move(out_values), "conv2d");

  g.record([input = input, kernels = kernels, bias = bias, out, cols, dims, stride, padding, height,
            width, out_h, out_w]() mutable {
    ConstRowMajorMap grad_out(out.grad().data(), dims.c_out, out_h * out_w);
    {
      RowMajorMap grad_k(kernels.grad().data(), dims.c_out,
                         dims.c_in * dims.k * dims.k);
      grad_k.noalias() += grad_out * cols->transpose();
    }
    for (int c = 0; c < dims.c_out; ++c) {
      bias.grad()[c] += grad_out.row(c).sum();
    }
    {
      ConstRowMajorMap kmat(kernels.values().data(), dims.c_out,
                            dims.c_in * dims.k * dims.k);
      Eigen::MatrixXf grad_cols = kmat.transpose() * grad_out;
      col2im_add(grad_cols, input.grad().data(), dims.c_in, height, width,
                 dims.k, stride, padding, out_h, out_w);
    }
  });
  return out;
}

Tensor conv2d_transpose(Graph& g, const Tensor& input, const Tensor& kernels,
                        const Tensor& bias, int stride) {
  const auto dims = check_conv_args(input, kernels, bias);
  // Adjoint direction: the input carries C_out channels and the output
  // C_in; the bias is per output channel.
  if (input.shape()[0] != dims.c_out) {
    throw ShapeMismatch("conv2d_transpose: input channel count mismatch");
  }
  if (bias.shape()[0] != dims.c_in) {
    throw ShapeMismatch("conv2d_transpose: bias must be [C_in]");
  }
  if (stride < 1) throw ShapeMismatch("conv2d_transpose: stride must be >= 1");
  const int in_h = input.shape()[1], in_w = input.shape()[2];
  const int out_h = (in_h - 1) * stride + dims.k;
  const int out_w = (in_w - 1) * stride + dims.k;

  Eigen::ArrayXf out_values =
      Eigen::ArrayXf::Zero(static_cast<long>(dims.c_in) * out_h * out_w);
  {
    ConstRowMajorMap kmat(kernels.values().data(), dims.c_out,
                          dims.c_in * dims.k * dims.k);
    ConstRowMajorMap ymat(input.values().data(), dims.c_out, in_h * in_w);
    Eigen::MatrixXf cols = kmat.transpose() * ymat;
    col2im_add(cols, out_values.data(), dims.c_in, out_h, out_w, dims.k,
               stride, /*padding=*/0, in_h, in_w);
    for (int c = 0; c < dims.c_in; ++c) {
      Eigen::Map<Eigen::ArrayXf>(
          out_values.data() + static_cast<long>(c) * out_h * out_w,
          static_cast<long>(out_h) * out_w) += bias.values()[c];
    }
  }
  Tensor out = op_output({dims.c_in, out_h, out_w}, std::move(out_values),
                         "conv2d_transpose");

  g.record([input = input, kernels = kernels, bias = bias, out, dims, stride, in_h, in_w, out_h,
            out_w]() mutable {
    const Eigen::MatrixXf grad_cols =
        im2col(out.grad().data(), dims.c_in, out_h, out_w, dims.k, stride,
               /*padding=*/0, in_h, in_w);
    {
      ConstRowMajorMap kmat(kernels.values().data(), dims.c_out,
                            dims.c_in * dims.k * dims.k);
      RowMajorMap grad_in(input.grad().data(), dims.c_out, in_h * in_w);
      grad_in.noalias() += kmat * grad_cols;
    }
    {
      ConstRowMajorMap ymat(input.values().data(), dims.c_out, in_h * in_w);
      RowMajorMap grad_k(kernels.grad().data(), dims.c_out,
                         dims.c_in * dims.k * dims.k);
      grad_k.noalias() += ymat * grad_cols.transpose();
    }
    for (int c = 0; c < dims.c_in; ++c) {
      bias.grad()[c] += Eigen::Map<const Eigen::ArrayXf>(
                            out.grad().data() +
                                static_cast<long>(c) * out_h * out_w,
                            static_cast<long>(out_h) * out_w)
                            .sum();
    }
  });
  return out;
}

Tensor dense(Graph& g, const Tensor& input, const Tensor& weight,
             const Tensor& bias) {
  if (input.rank() != 1 || weight.rank() != 2 || bias.rank() != 1) {
    throw ShapeMismatch("dense expects input [n], weight [m, n], bias [m]");
  }
  const int n = input.shape()[0];
  const int m = weight.shape()[0];
  if (weight.shape()[1] != n || bias.shape()[0] != m) {
    throw ShapeMismatch("dense: weight/bias dimensions do not agree");
  }
  Eigen::ArrayXf out_values(m);
  {
    ConstRowMajorMap w(weight.values().data(), m, n);
    Eigen::Map<const Eigen::VectorXf> x(input.values().data(), n);
    Eigen::Map<Eigen::VectorXf> y(out_values.data(), m);
    y.noalias() = w * x;
    y += Eigen::Map<const Eigen::VectorXf>(bias.values().data(), m);
  }
  Tensor out = op_output({m}, std::move(out_values), "dense");

  g.record([input = input, weight = weight, bias = bias, out, m, n]() mutable {
    Eigen::Map<const Eigen::VectorXf> gy(out.grad().data(), m);
    Eigen::Map<const Eigen::VectorXf> x(input.values().data(), n);
    {
      RowMajorMap gw(weight.grad().data(), m, n);
      gw.noalias() += gy * x.transpose();
    }
    bias.grad() += out.grad();
    {
      ConstRowMajorMap w(weight.values().data(), m, n);
      Eigen::Map<Eigen::VectorXf> gx(input.grad().data(), n);
      gx.noalias() += w.transpose() * gy;
    }
  });
  return out;
}

Tensor relu(Graph& g, const Tensor& x) {
  Tensor out = op_output(x.shape(), x.values().max(0.0f), "relu");
  g.record([x = x, out]() mutable {
    x.grad() += (x.values() > 0.0f).cast<float>() * out.grad();
  });
  return out;
}

Tensor leaky_relu(Graph& g, const Tensor& x, float alpha) {
  Eigen::ArrayXf y =
      (x.values() > 0.0f).select(x.values(), alpha * x.values());
  Tensor out = op_output(x.shape(), std::move(y), "leaky_relu");
  g.record([x = x, out, alpha]() mutable {
    x.grad() += (x.values() > 0.0f)
                    .select(out.grad(), alpha * out.grad());
  });
  return out;
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  Eigen::ArrayXf y = 0.5f * ((0.5f * x.values()).tanh() + 1.0f);
  Tensor out = op_output(x.shape(), std::move(y), "sigmoid");
  g.record([x = x, out]() mutable {
    x.grad() += out.values() * (1.0f - out.values()) * out.grad();
  });
  return out;
}

Tensor concat(Graph& g, const Tensor& a, const Tensor& b, int axis) {
  if (a.rank() != b.rank() || axis < 0 || axis >= a.rank()) {
    throw ShapeMismatch("concat: rank/axis mismatch");
  }
  for (int d = 0; d < a.rank(); ++d) {
    if (d != axis && a.shape()[d] != b.shape()[d]) {
      throw ShapeMismatch("concat: non-concat axes must agree");
    }
  }
  Shape out_shape = a.shape();
  out_shape[axis] += b.shape()[axis];

  long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.shape()[d];
  for (int d = axis + 1; d < a.rank(); ++d) inner *= a.shape()[d];
  const long a_block = a.shape()[axis] * inner;
  const long b_block = b.shape()[axis] * inner;

  Eigen::ArrayXf out_values(a.numel() + b.numel());
  for (long o = 0; o < outer; ++o) {
    std::copy_n(a.values().data() + o * a_block, a_block,
                out_values.data() + o * (a_block + b_block));
    std::copy_n(b.values().data() + o * b_block, b_block,
                out_values.data() + o * (a_block + b_block) + a_block);
  }
  Tensor out = op_output(std::move(out_shape), std::move(out_values),
                         "concat");
  g.record([a = a, b = b, out, outer, a_block, b_block]() mutable {
    for (long o = 0; o < outer; ++o) {
      Eigen::Map<Eigen::ArrayXf>(a.grad().data() + o * a_block, a_block) +=
          Eigen::Map<const Eigen::ArrayXf>(
              out.grad().data() + o * (a_block + b_block), a_block);
      Eigen::Map<Eigen::ArrayXf>(b.grad().data() + o * b_block, b_block) +=
          Eigen::Map<const Eigen::ArrayXf>(
              out.grad().data() + o * (a_block + b_block) + a_block, b_block);
    }
  });
  return out;
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeMismatch("reshape: element count must be preserved");
  }
  Tensor out = op_output(std::move(shape), x.values(), "reshape");
  g.record([x = x, out]() mutable { x.grad() += out.grad(); });
  return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": operand shapes differ");
  }
}

}  // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = op_output(a.shape(), a.values() + b.values(), "add");
  g.record([a = a, b = b, out]() mutable {
    a.grad() += out.grad();
    b.grad() += out.grad();
  });
  return out;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = op_output(a.shape(), a.values() - b.values(), "sub");
  g.record([a = a, b = b, out]() mutable {
    a.grad() += out.grad();
    b.grad() -= out.grad();
  });
  return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = op_output(a.shape(), a.values() * b.values(), "mul");
  g.record([a = a, b = b, out]() mutable {
    a.grad() += b.values() * out.grad();
    b.grad() += a.values() * out.grad();
  });
  return out;
}

Tensor mul_scalar(Graph& g, const Tensor& a, float c) {
  Tensor out = op_output(a.shape(), a.values() * c, "mul_scalar");
  g.record([a = a, out, c]() mutable { a.grad() += c * out.grad(); });
  return out;
}

Tensor add_scaled(Graph& g, const Tensor& a, float lam, const Tensor& b) {
  check_same_shape(a, b, "add_scaled");
  Tensor out =
      op_output(a.shape(), a.values() + lam * b.values(), "add_scaled");
  g.record([a = a, b = b, out, lam]() mutable {
    a.grad() += out.grad();
    b.grad() += lam * out.grad();
  });
  return out;
}

Tensor sum(Graph& g, const Tensor& x) {
  const double total = x.values().cast<double>().sum();
  Tensor out = Tensor::scalar_from_double(total);
  if (!out.values().allFinite()) throw NumericError("sum produced NaN or Inf");
  g.record([x = x, out]() mutable { x.grad() += out.grad()[0]; });
  return out;
}

Tensor mean(Graph& g, const Tensor& x) {
  const double total = x.values().cast<double>().sum();
  Tensor out = Tensor::scalar_from_double(total / static_cast<double>(x.numel()));
  if (!out.values().allFinite()) throw NumericError("mean produced NaN or Inf");
  const float inv_n = 1.0f / static_cast<float>(x.numel());
  g.record([x = x, out, inv_n]() mutable { x.grad() += inv_n * out.grad()[0]; });
  return out;
}

Tensor detach(const Tensor& x) {
  return Tensor::constant(x.shape(), x.values());
}

void zero_grad(const std::vector<Tensor>& params) {
  for (const auto& p : params) {
    Tensor t = p;
    t.grad().setZero();
  }
}

double finite_difference_check(const std::function<Tensor(Graph&)>& build_loss,
                               const std::vector<Tensor>& params,
                               const FdCheckOptions& opts) {
  zero_grad(params);
  std::vector<Eigen::ArrayXf> analytic;
  {
    Graph g;
    Tensor loss = build_loss(g);
    g.backward(loss);
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad());
  }

  const auto eval = [&]() -> double {
    Graph g;
    return build_loss(g).scalar_double();
  };

  Rng rng(opts.seed);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    Eigen::ArrayXf& v = p.values();
    const long n = v.size();
    std::vector<long> coords;
    if (opts.max_coords_per_param > 0 && n > opts.max_coords_per_param) {
      std::set<long> seen;
      while (static_cast<int>(seen.size()) < opts.max_coords_per_param) {
        seen.insert(rng.uniform_int(0, static_cast<int>(n - 1)));
      }
      coords.assign(seen.begin(), seen.end());
    } else {
      coords.resize(static_cast<std::size_t>(n));
      std::iota(coords.begin(), coords.end(), 0L);
    }
    const auto central = [&](long i, float saved, float eps) {
      const float plus = saved + eps;
      const float minus = saved - eps;
      v[i] = plus;
      const double f_plus = eval();
      v[i] = minus;
      const double f_minus = eval();
      v[i] = saved;
      const double step =
          static_cast<double>(plus) - static_cast<double>(minus);
      return (f_plus - f_minus) / step;
    };
    for (long i : coords) {
      const float saved = v[i];
      const double numeric = central(i, saved, opts.epsilon);
      const double exact = static_cast<double>(analytic[pi][i]);
      if (opts.skip_below > 0.0f && std::fabs(exact) < opts.skip_below &&
          std::fabs(numeric) < opts.skip_below) {
        continue;
      }
      const double denom =
          std::max({std::fabs(exact), std::fabs(numeric), 1e-8});
      if (opts.dual_step_filter) {
        const double numeric_half = central(i, saved, 0.5f * opts.epsilon);
        if (std::fabs(numeric - numeric_half) >
            opts.probe_agreement_tol * denom) {
          continue;
        }
      }
      worst = std::max(worst, std::fabs(numeric - exact) / denom);
    }
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor(Graph&)>& build_loss,
                               const std::vector<Tensor>& params,
                               float epsilon) {
  FdCheckOptions opts;
  opts.epsilon = epsilon;
  return finite_difference_check(build_loss, params, opts);
}

}  // namespace volnorm::tk

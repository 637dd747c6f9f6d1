#include "volnorm/isgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "volnorm/errors.hpp"

namespace volnorm::isgen {

using tk::Graph;
using tk::Tensor;

namespace {
// Prediction clamp applied before logarithms (and inside the gradient
// denominators).
constexpr float kClamp = 1e-7f;
}  // namespace

void GeneratorConfig::validate() const {
  if (image_size < 16 || image_size % 16 != 0) {
    throw InvalidConfig("generator image_size must be a positive multiple of 16");
  }
  if (encoder_channels.size() != 4 || encoder_channels.back() != 64) {
    throw InvalidConfig("encoder must have 4 stages ending at 64 channels");
  }
  if (decoder_channels.size() != 3) {
    throw InvalidConfig("decoder must have 3 hidden stages before the output");
  }
}

void DiscriminatorConfig::validate() const {
  if (image_size < 8 || image_size % 8 != 0) {
    throw InvalidConfig("discriminator image_size must be a multiple of 8");
  }
  if (channels.size() != 3) {
    throw InvalidConfig("discriminator uses exactly 3 convolutional layers");
  }
}

void TrainConfig::validate() const {
  if (lambda < 0.0f) throw InvalidConfig("lambda must be >= 0");
  if (off_epochs < 1 || on_epochs < 1) {
    throw InvalidConfig("off/on epoch counts must be >= 1");
  }
  if (cycles < 1) throw InvalidConfig("cycles must be >= 1");
  if (warmup_epochs < 0) throw InvalidConfig("warmup_epochs must be >= 0");
  if (d_max < 1) throw InvalidConfig("d_max must be >= 1");
  if (!(lr > 0.0f)) throw InvalidConfig("learning rate must be > 0");
}

namespace {

Eigen::ArrayXf he_init(long n, long fan_in, Rng& rng) {
  const float scale = std::sqrt(2.0f / static_cast<float>(fan_in));
  Eigen::ArrayXf a(n);
  for (long i = 0; i < n; ++i) {
    a[i] = scale * static_cast<float>(rng.normal());
  }
  return a;
}

ConvLayer make_conv(int c_out, int c_in, int k, Rng& rng) {
  const long n = static_cast<long>(c_out) * c_in * k * k;
  return {Tensor::param({c_out, c_in, k, k},
                        he_init(n, static_cast<long>(c_in) * k * k, rng)),
          Tensor::param({c_out}, Eigen::ArrayXf::Zero(c_out))};
}

// Transposed-conv layer mapping c_in -> c_out channels; kernels are stored
// in conv2d layout [c_in, c_out, k, k] and the bias is per output channel.
ConvLayer make_deconv(int c_in, int c_out, int k, int stride, Rng& rng) {
  const long n = static_cast<long>(c_in) * c_out * k * k;
  const long fan_in =
      std::max<long>(1, static_cast<long>(c_in) * (k / stride) * (k / stride));
  return {Tensor::param({c_in, c_out, k, k}, he_init(n, fan_in, rng)),
          Tensor::param({c_out}, Eigen::ArrayXf::Zero(c_out))};
}

void append_layer_arrays(std::vector<tk::NamedArray>& out,
                         const std::string& name, const ConvLayer& layer) {
  out.push_back({name + ".kernels", layer.kernels.shape(),
                 layer.kernels.values()});
  out.push_back({name + ".bias", layer.bias.shape(), layer.bias.values()});
}

const tk::NamedArray& find_array(const std::vector<tk::NamedArray>& arrays,
                                 const std::string& name) {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw ModelMissing("checkpoint is missing array '" + name + "'");
}

void load_into(Tensor t, const std::vector<tk::NamedArray>& arrays,
               const std::string& name) {
  const auto& a = find_array(arrays, name);
  if (a.shape != t.shape()) {
    throw ShapeMismatch("checkpoint array '" + name + "' has the wrong shape");
  }
  t.values() = a.values;
}

}  // namespace

Generator::Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (auto* enc : {&enc1_, &enc2_}) {
    int c_in = 1;
    for (int c_out : cfg_.encoder_channels) {
      enc->push_back(make_conv(c_out, c_in, 4, rng));
      c_in = c_out;
    }
  }
  int c_in = 2 * cfg_.encoder_channels.back();
  for (int c_out : cfg_.decoder_channels) {
    dec_.push_back(make_deconv(c_in, c_out, 2, 2, rng));
    c_in = c_out;
  }
  dec_.push_back(make_deconv(c_in, 1, 2, 2, rng));
}

Tensor Generator::forward(Graph& g, const Tensor& x1, const Tensor& x2) const {
  const auto encode = [&](const std::vector<ConvLayer>& enc,
                          const Tensor& x) {
    Tensor h = x;
    for (const auto& layer : enc) {
      h = tk::leaky_relu(g, tk::conv2d(g, h, layer.kernels, layer.bias, 2, 1),
                         cfg_.leak);
    }
    return h;
  };
  Tensor features = tk::concat(g, encode(enc1_, x1), encode(enc2_, x2), 0);
  Tensor h = features;
  for (std::size_t i = 0; i + 1 < dec_.size(); ++i) {
    h = tk::leaky_relu(
        g, tk::conv2d_transpose(g, h, dec_[i].kernels, dec_[i].bias, 2),
        cfg_.leak);
  }
  return tk::sigmoid(
      g, tk::conv2d_transpose(g, h, dec_.back().kernels, dec_.back().bias, 2));
}

Image2D Generator::generate(const Image2D& x1, const Image2D& x2) const {
  Graph g;
  Tensor out = forward(g, image_to_tensor(x1), image_to_tensor(x2));
  return tensor_to_image(out);
}

std::vector<Tensor> Generator::params() const {
  std::vector<Tensor> out;
  for (const auto* block : {&enc1_, &enc2_, &dec_}) {
    for (const auto& layer : *block) {
      out.push_back(layer.kernels);
      out.push_back(layer.bias);
    }
  }
  return out;
}

std::vector<tk::NamedArray> Generator::named_arrays(
    const std::string& prefix) const {
  std::vector<tk::NamedArray> out;
  for (std::size_t i = 0; i < enc1_.size(); ++i) {
    append_layer_arrays(out, prefix + ".enc1." + std::to_string(i), enc1_[i]);
    append_layer_arrays(out, prefix + ".enc2." + std::to_string(i), enc2_[i]);
  }
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    append_layer_arrays(out, prefix + ".dec." + std::to_string(i), dec_[i]);
  }
  return out;
}

void Generator::load_arrays(const std::vector<tk::NamedArray>& arrays,
                            const std::string& prefix) {
  for (std::size_t i = 0; i < enc1_.size(); ++i) {
    const std::string n1 = prefix + ".enc1." + std::to_string(i);
    const std::string n2 = prefix + ".enc2." + std::to_string(i);
    load_into(enc1_[i].kernels, arrays, n1 + ".kernels");
    load_into(enc1_[i].bias, arrays, n1 + ".bias");
    load_into(enc2_[i].kernels, arrays, n2 + ".kernels");
    load_into(enc2_[i].bias, arrays, n2 + ".bias");
  }
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    const std::string n = prefix + ".dec." + std::to_string(i);
    load_into(dec_[i].kernels, arrays, n + ".kernels");
    load_into(dec_[i].bias, arrays, n + ".bias");
  }
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  int c_in = 1;
  for (int c_out : cfg_.channels) {
    conv_.push_back(make_conv(c_out, c_in, 4, rng));
    c_in = c_out;
  }
  const int spatial = cfg_.image_size / 8;
  const long flat = static_cast<long>(c_in) * spatial * spatial;
  fc_weight_ = Tensor::param({1, static_cast<int>(flat)},
                             he_init(flat, flat, rng));
  fc_bias_ = Tensor::param({1}, Eigen::ArrayXf::Zero(1));
}

Tensor Discriminator::score(Graph& g, const Tensor& image) const {
  Tensor h = image;
  for (const auto& layer : conv_) {
    h = tk::leaky_relu(g, tk::conv2d(g, h, layer.kernels, layer.bias, 2, 1),
                       cfg_.leak);
  }
  Tensor flat = tk::reshape(g, h, {static_cast<int>(h.numel())});
  return tk::sigmoid(g, tk::dense(g, flat, fc_weight_, fc_bias_));
}

std::vector<Tensor> Discriminator::params() const {
  std::vector<Tensor> out;
  for (const auto& layer : conv_) {
    out.push_back(layer.kernels);
    out.push_back(layer.bias);
  }
  out.push_back(fc_weight_);
  out.push_back(fc_bias_);
  return out;
}

std::vector<tk::NamedArray> Discriminator::named_arrays(
    const std::string& prefix) const {
  std::vector<tk::NamedArray> out;
  for (std::size_t i = 0; i < conv_.size(); ++i) {
    append_layer_arrays(out, prefix + ".conv." + std::to_string(i), conv_[i]);
  }
  out.push_back({prefix + ".fc.weight", fc_weight_.shape(),
                 fc_weight_.values()});
  out.push_back({prefix + ".fc.bias", fc_bias_.shape(), fc_bias_.values()});
  return out;
}

void Discriminator::load_arrays(const std::vector<tk::NamedArray>& arrays,
                                const std::string& prefix) {
  for (std::size_t i = 0; i < conv_.size(); ++i) {
    const std::string n = prefix + ".conv." + std::to_string(i);
    load_into(conv_[i].kernels, arrays, n + ".kernels");
    load_into(conv_[i].bias, arrays, n + ".bias");
  }
  load_into(fc_weight_, arrays, prefix + ".fc.weight");
  load_into(fc_bias_, arrays, prefix + ".fc.bias");
}

IsGenModel make_model(int image_size, std::uint64_t seed) {
  Rng rng(seed);
  GeneratorConfig gcfg;
  gcfg.image_size = image_size;
  DiscriminatorConfig dcfg;
  dcfg.image_size = image_size;
  Generator gen(gcfg, rng);
  Discriminator disc(dcfg, rng);
  return {std::move(gen), std::move(disc)};
}

void save_model(const std::filesystem::path& path, const IsGenModel& model) {
  std::vector<tk::NamedArray> arrays;
  Eigen::ArrayXf meta(1);
  meta[0] = static_cast<float>(model.generator.config().image_size);
  arrays.push_back({"meta.image_size", {1}, meta});
  auto gen_arrays = model.generator.named_arrays("gen");
  auto disc_arrays = model.discriminator.named_arrays("disc");
  arrays.insert(arrays.end(), gen_arrays.begin(), gen_arrays.end());
  arrays.insert(arrays.end(), disc_arrays.begin(), disc_arrays.end());
  tk::save_checkpoint(path, arrays);
}

IsGenModel load_model(const std::filesystem::path& path) {
  const auto arrays = tk::load_checkpoint(path);
  const auto& meta = find_array(arrays, "meta.image_size");
  const int image_size = static_cast<int>(meta.values[0]);
  IsGenModel model = make_model(image_size, /*seed=*/0);
  model.generator.load_arrays(arrays, "gen");
  model.discriminator.load_arrays(arrays, "disc");
  return model;
}

// --- losses -----------------------------------------------------------------

Tensor reconstruction_loss(Graph& g, const Tensor& y, const Tensor& yhat) {
  if (y.shape() != yhat.shape()) {
    throw ShapeMismatch("reconstruction_loss: label/prediction shapes differ");
  }
  const long n = y.numel();
  double total = 0.0;
  for (long i = 0; i < n; ++i) {
    const float yi = y.values()[i];
    const float pi = yhat.values()[i];
    if (yi == 0.0f) {
      total += static_cast<double>(pi) * pi;
    } else {
      const double d = static_cast<double>(yi) - pi;
      total += 5.0 * d * d;
    }
  }
  Tensor out = Tensor::scalar_from_double(total / static_cast<double>(n));
  if (!out.values().allFinite()) {
    throw NumericError("reconstruction_loss produced NaN or Inf");
  }
  g.record([y = y, yhat = yhat, out, n]() mutable {
    const float go = out.grad()[0] / static_cast<float>(n);
    for (long i = 0; i < n; ++i) {
      const float yi = y.values()[i];
      const float pi = yhat.values()[i];
      yhat.grad()[i] +=
          go * (yi == 0.0f ? 2.0f * pi : -10.0f * (yi - pi));
    }
  });
  return out;
}

Tensor discriminator_loss(Graph& g, const std::vector<float>& labels,
                          const Tensor& predictions) {
  const long n = predictions.numel();
  if (static_cast<long>(labels.size()) != n) {
    throw LengthMismatch("discriminator_loss: label/prediction counts differ");
  }
  double total = 0.0;
  for (long i = 0; i < n; ++i) {
    const double p = std::clamp(predictions.values()[i], kClamp, 1.0f - kClamp);
    const double yl = labels[static_cast<std::size_t>(i)];
    total += yl * std::log(p) + (1.0 - yl) * std::log(1.0 - p);
  }
  Tensor out = Tensor::scalar_from_double(-total / static_cast<double>(n));
  if (!out.values().allFinite()) {
    throw NumericError("discriminator_loss produced NaN or Inf");
  }
  g.record([labels, predictions = predictions, out, n]() mutable {
    const float go = out.grad()[0] / static_cast<float>(n);
    for (long i = 0; i < n; ++i) {
      const float p =
          std::clamp(predictions.values()[i], kClamp, 1.0f - kClamp);
      const float yl = labels[static_cast<std::size_t>(i)];
      predictions.grad()[i] -= go * (yl / p - (1.0f - yl) / (1.0f - p));
    }
  });
  return out;
}

Tensor generator_loss(Graph& g, const Tensor& y_g, const Tensor& yhat_g,
                      const Tensor& yhat_d, float lambda) {
  Tensor recon = reconstruction_loss(g, y_g, yhat_g);
  if (lambda == 0.0f) return recon;
  // Inverted labels: the generator wants the synthetic slice (first score)
  // called real.
  Tensor adv = discriminator_loss(g, {1.0f, 0.0f}, yhat_d);
  return tk::add_scaled(g, recon, lambda, adv);
}

// --- triplets ---------------------------------------------------------------

Triplet sample_triplet(const Volume3D& vol, Rng& rng, int d_max,
                       int image_size) {
  if (d_max < 1) throw InvalidConfig("d_max must be >= 1");
  const int n = vol.slices();
  if (n < 2 * d_max + 1) {
    throw VolumeTooThin("triplet sampling needs at least " +
                        std::to_string(2 * d_max + 1) + " slices, have " +
                        std::to_string(n));
  }
  const int d = rng.uniform_int(1, d_max);
  const int center = rng.uniform_int(d, n - 1 - d);
  const float peak = vol.values().maxCoeff();
  const float scale = peak > 0.0f ? 1.0f / peak : 1.0f;
  const auto prep = [&](int index) {
    Image2D img = vol.slice(index);
    img *= scale;
    return resize_nearest(img, image_size, image_size);
  };
  Triplet t;
  t.x1 = prep(center - d);
  t.y = prep(center);
  t.x2 = prep(center + d);
  t.spacing = d;
  t.center = center;
  return t;
}

// --- steps ------------------------------------------------------------------

Tensor image_to_tensor(const Image2D& img) {
  const int rows = static_cast<int>(img.rows());
  const int cols = static_cast<int>(img.cols());
  Eigen::ArrayXf flat(static_cast<long>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) flat[static_cast<long>(r) * cols + c] = img(r, c);
  return Tensor::constant({1, rows, cols}, std::move(flat));
}

Image2D tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.shape()[0] != 1) {
    throw ShapeMismatch("tensor_to_image expects [1, H, W]");
  }
  const int rows = t.shape()[1], cols = t.shape()[2];
  Image2D img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) img(r, c) = t.values()[static_cast<long>(r) * cols + c];
  return img;
}

StepLosses adversarial_step(Generator& gen, Discriminator& disc,
                            const Triplet& t, float lambda,
                            tk::AdamState& opt_g, tk::AdamState& opt_d) {
  const auto gen_params = gen.params();
  const auto disc_params = disc.params();

  // Generator update. The discriminator participates in the forward pass
  // (the adversarial gradient flows through it) but its parameters are not
  // stepped here; its contaminated grads are cleared afterwards.
  tk::zero_grad(gen_params);
  tk::zero_grad(disc_params);
  Tensor x1 = image_to_tensor(t.x1);
  Tensor x2 = image_to_tensor(t.x2);
  Tensor y = image_to_tensor(t.y);
  StepLosses losses;
  Tensor yhat_g;
  {
    Graph g;
    yhat_g = gen.forward(g, x1, x2);
    Tensor score_syn = disc.score(g, yhat_g);
    Tensor score_real = disc.score(g, x1);
    Tensor yhat_d = tk::concat(g, score_syn, score_real, 0);
    Tensor l_rl = reconstruction_loss(g, y, yhat_g);
    Tensor l_g = generator_loss(g, y, yhat_g, yhat_d, lambda);
    losses.l_g = l_g.scalar_value();
    losses.l_rl = l_rl.scalar_value();
    g.backward(l_g);
  }
  tk::adam_step(gen_params, opt_g);
  tk::zero_grad(disc_params);

  // Discriminator update against the pre-update synthetic slice; the
  // generator sees no gradient through the detached input.
  {
    Graph g;
    Tensor score_syn = disc.score(g, tk::detach(yhat_g));
    Tensor score_real = disc.score(g, x1);
    Tensor yhat_d = tk::concat(g, score_syn, score_real, 0);
    Tensor l_d = discriminator_loss(g, {0.0f, 1.0f}, yhat_d);
    losses.l_d = l_d.scalar_value();
    g.backward(l_d);
  }
  tk::adam_step(disc_params, opt_d);
  tk::zero_grad(gen_params);
  tk::zero_grad(disc_params);
  return losses;
}

StepLosses nonadversarial_step(Generator& gen, const Triplet& t,
                               tk::AdamState& opt_g) {
  const auto gen_params = gen.params();
  tk::zero_grad(gen_params);
  StepLosses losses;
  losses.l_d = std::numeric_limits<float>::quiet_NaN();
  {
    Graph g;
    Tensor yhat_g = gen.forward(g, image_to_tensor(t.x1), image_to_tensor(t.x2));
    Tensor l_rl = reconstruction_loss(g, image_to_tensor(t.y), yhat_g);
    losses.l_g = l_rl.scalar_value();
    losses.l_rl = losses.l_g;
    g.backward(l_rl);
  }
  tk::adam_step(gen_params, opt_g);
  tk::zero_grad(gen_params);
  return losses;
}

double mean_reconstruction_loss(const Generator& gen,
                                const std::vector<Triplet>& triplets) {
  if (triplets.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& t : triplets) {
    Graph g;
    Tensor yhat = gen.forward(g, image_to_tensor(t.x1), image_to_tensor(t.x2));
    total += reconstruction_loss(g, image_to_tensor(t.y), yhat).scalar_double();
  }
  return total / static_cast<double>(triplets.size());
}

std::string TrainLog::to_table() const {
  std::ostringstream out;
  out << "epoch\tmode\tl_rl\tl_d\tval_l_rl\n";
  for (const auto& e : epochs) {
    out << e.epoch << '\t' << e.mode << '\t' << e.mean_l_rl << '\t';
    if (std::isnan(e.mean_l_d)) {
      out << '-';
    } else {
      out << e.mean_l_d;
    }
    out << '\t' << e.val_l_rl << '\n';
  }
  out << "# best_epoch\t" << best_epoch << "\tval_l_rl\t" << best_val_l_rl
      << '\n';
  return out.str();
}

TrainLog on_off_train(IsGenModel& model, const std::vector<Triplet>& train,
                      const std::vector<Triplet>& validation,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw EmptyDataset("on_off_train: no training triplets");

  std::vector<std::string> modes;
  for (int w = 0; w < cfg.warmup_epochs; ++w) modes.push_back("warmup");
  for (int c = 0; c < cfg.cycles; ++c) {
    for (int e = 0; e < cfg.off_epochs; ++e) modes.push_back("off");
    for (int e = 0; e < cfg.on_epochs; ++e) modes.push_back("on");
  }

  tk::AdamState opt_g, opt_d;
  opt_g.lr = cfg.lr;
  opt_d.lr = cfg.lr;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0u);

  TrainLog log;
  log.best_val_l_rl = std::numeric_limits<double>::infinity();
  std::vector<Eigen::ArrayXf> best_params;

  for (std::size_t ei = 0; ei < modes.size(); ++ei) {
    const bool adversarial = modes[ei] == "on";
    rng.shuffle(order);
    double sum_rl = 0.0, sum_d = 0.0;
    for (std::size_t idx : order) {
      const Triplet& t = train[idx];
      StepLosses s =
          adversarial
              ? adversarial_step(model.generator, model.discriminator, t,
                                 cfg.lambda, opt_g, opt_d)
              : nonadversarial_step(model.generator, t, opt_g);
      sum_rl += s.l_rl;
      sum_d += s.l_d;
    }
    EpochLog e;
    e.epoch = static_cast<int>(ei) + 1;
    e.mode = modes[ei];
    e.mean_l_rl = sum_rl / static_cast<double>(train.size());
    e.mean_l_d = adversarial ? sum_d / static_cast<double>(train.size())
                             : std::numeric_limits<double>::quiet_NaN();
    e.val_l_rl = validation.empty()
                     ? e.mean_l_rl
                     : mean_reconstruction_loss(model.generator, validation);
    log.epochs.push_back(e);

    if (e.val_l_rl < log.best_val_l_rl) {
      log.best_val_l_rl = e.val_l_rl;
      log.best_epoch = e.epoch;
      best_params.clear();
      for (const auto& p : model.generator.params()) {
        best_params.push_back(p.values());
      }
    }
  }

  // Retain the checkpoint with the lowest validation reconstruction loss.
  if (!best_params.empty()) {
    auto params = model.generator.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i].values() = best_params[i];
    }
  }
  return log;
}

}  // namespace volnorm::isgen

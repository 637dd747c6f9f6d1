#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "volnorm/checkpoint.hpp"
#include "volnorm/optim.hpp"
#include "volnorm/rng.hpp"
#include "volnorm/tensor.hpp"
#include "volnorm/volume.hpp"

namespace volnorm::isgen {

/// Generator topology. Two independent 4-stage stride-2 convolutional
/// encoders (kernel 4, padding 1) take the flanking slices down to
/// (image_size/16)^2 x 64 each; the 128-channel concatenation is brought
/// back to image_size^2 x 1 by four stride-2 transposed convolutions
/// (kernel 2, which doubles the grid exactly), leaky_relu(0.2) hidden and
/// a sigmoid output.
struct GeneratorConfig {
  int image_size = 256;
  std::vector<int> encoder_channels{16, 32, 48, 64};
  std::vector<int> decoder_channels{48, 32, 16};  // final stage emits 1
  float leak = 0.2f;

  void validate() const;
};

/// Binary real-vs-synthetic classifier: 3 stride-2 convolutions, one fully
/// connected layer, a single sigmoid output neuron.
struct DiscriminatorConfig {
  int image_size = 256;
  std::vector<int> channels{16, 32, 64};
  float leak = 0.2f;

  void validate() const;
};

struct TrainConfig {
  float lambda = 0.03f;   ///< adversarial weight
  int off_epochs = 5;     ///< reconstruction-only epochs per cycle
  int on_epochs = 5;      ///< adversarial epochs per cycle
  int cycles = 10;
  int warmup_epochs = 0;  ///< optional reconstruction-only epochs up front
  int d_max = 4;          ///< largest sampled triplet spacing
  float lr = 1e-3f;
  std::uint64_t seed = 1;

  void validate() const;
  int total_epochs() const {
    return warmup_epochs + cycles * (off_epochs + on_epochs);
  }
};

struct ConvLayer {
  tk::Tensor kernels;
  tk::Tensor bias;
};

class Generator {
 public:
  Generator(const GeneratorConfig& cfg, Rng& rng);

  /// x1, x2: [1, S, S] slices in [0, 1]; returns the synthesized middle
  /// slice [1, S, S] in (0, 1).
  tk::Tensor forward(tk::Graph& g, const tk::Tensor& x1,
                     const tk::Tensor& x2) const;

  /// Inference on plain images (rows = cols = image_size).
  Image2D generate(const Image2D& x1, const Image2D& x2) const;

  std::vector<tk::Tensor> params() const;
  const GeneratorConfig& config() const { return cfg_; }

  std::vector<tk::NamedArray> named_arrays(const std::string& prefix) const;
  void load_arrays(const std::vector<tk::NamedArray>& arrays,
                   const std::string& prefix);

 private:
  GeneratorConfig cfg_;
  std::vector<ConvLayer> enc1_, enc2_, dec_;
};

class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, Rng& rng);

  /// image: [1, S, S]; returns a [1] score in (0, 1).
  tk::Tensor score(tk::Graph& g, const tk::Tensor& image) const;

  std::vector<tk::Tensor> params() const;
  const DiscriminatorConfig& config() const { return cfg_; }

  std::vector<tk::NamedArray> named_arrays(const std::string& prefix) const;
  void load_arrays(const std::vector<tk::NamedArray>& arrays,
                   const std::string& prefix);

 private:
  DiscriminatorConfig cfg_;
  std::vector<ConvLayer> conv_;
  tk::Tensor fc_weight_, fc_bias_;
};

/// Generator-discriminator pair trained per modality.
struct IsGenModel {
  Generator generator;
  Discriminator discriminator;
};

IsGenModel make_model(int image_size, std::uint64_t seed);
void save_model(const std::filesystem::path& path, const IsGenModel& model);
IsGenModel load_model(const std::filesystem::path& path);

// --- losses (differentiable graph ops) ------------------------------------

/// Piecewise reconstruction loss, mean over pixels:
///   yhat^2 where y == 0, 5 * (y - yhat)^2 elsewhere.
/// The label y is data, not a differentiable input.
tk::Tensor reconstruction_loss(tk::Graph& g, const tk::Tensor& y,
                               const tk::Tensor& yhat);

/// Binary cross entropy, mean over the batch, predictions clamped to
/// [1e-7, 1 - 1e-7] before the logs (the clamped value is also used in the
/// gradient denominators, keeping them bounded).
tk::Tensor discriminator_loss(tk::Graph& g, const std::vector<float>& labels,
                              const tk::Tensor& predictions);

/// reconstruction_loss + lambda * discriminator_loss with inverted labels
/// [1, 0]; predictions must be ordered [synthetic, real]. With lambda == 0
/// the adversarial branch is not recorded at all, so the result reduces to
/// reconstruction_loss exactly.
tk::Tensor generator_loss(tk::Graph& g, const tk::Tensor& y_g,
                          const tk::Tensor& yhat_g, const tk::Tensor& yhat_d,
                          float lambda);

// --- triplet sampling ------------------------------------------------------

/// An equal-width slice triple scaled to [0, 1] and resized to the model
/// grid.
struct Triplet {
  Image2D x1, y, x2;
  int spacing = 0;
  int center = 0;
};

/// Picks spacing d uniformly in [1, d_max] and a center uniformly in
/// [d, n-1-d]; slices are scaled by the volume's intensity maximum
/// (backgrounds stay exactly 0) and resized to image_size^2 by nearest
/// neighbour. Throws VolumeTooThin when the volume has fewer than
/// 2*d_max + 1 slices.
Triplet sample_triplet(const Volume3D& vol, Rng& rng, int d_max,
                       int image_size);

// --- training steps ---------------------------------------------------------

struct StepLosses {
  float l_g = 0.0f;   ///< generator objective (reconstruction + adversarial)
  float l_rl = 0.0f;  ///< reconstruction part alone
  float l_d = 0.0f;   ///< discriminator loss (NaN outside adversarial steps)
};

/// One adversarial update: the generator descends
/// grad L_G(y_g, yhat_g, inverted labels, yhat_d) with the adversarial
/// gradient flowing through the discriminator's forward pass, then the
/// discriminator descends grad L_D on [synthetic, real] with labels [0, 1]
/// against the pre-update synthetic slice. Neither update writes to the
/// other model's parameters.
StepLosses adversarial_step(Generator& gen, Discriminator& disc,
                            const Triplet& t, float lambda,
                            tk::AdamState& opt_g, tk::AdamState& opt_d);

/// One reconstruction-only update of the generator; the discriminator is
/// not touched (nor evaluated).
StepLosses nonadversarial_step(Generator& gen, const Triplet& t,
                               tk::AdamState& opt_g);

// --- the On-Off schedule ----------------------------------------------------

struct EpochLog {
  int epoch = 0;            // 1-based
  std::string mode;         // "warmup", "off" or "on"
  double mean_l_rl = 0.0;
  double mean_l_d = 0.0;    // NaN outside adversarial epochs
  double val_l_rl = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;       // epoch whose weights were retained
  double best_val_l_rl = 0.0;

  std::string to_table() const;  ///< plain-text table (epoch, mode, L_RL, L_D)
};

/// Alternates off_epochs reconstruction-only epochs with on_epochs
/// adversarial epochs, `cycles` times (after the optional warmup). The
/// generator weights with the lowest validation reconstruction loss are
/// retained. With no validation triplets the training mean is used.
TrainLog on_off_train(IsGenModel& model, const std::vector<Triplet>& train,
                      const std::vector<Triplet>& validation,
                      const TrainConfig& cfg);

/// Mean reconstruction loss of the generator over a triplet set.
double mean_reconstruction_loss(const Generator& gen,
                                const std::vector<Triplet>& triplets);

// --- helpers ---------------------------------------------------------------

tk::Tensor image_to_tensor(const Image2D& img);
Image2D tensor_to_image(const tk::Tensor& t);

}  // namespace volnorm::isgen

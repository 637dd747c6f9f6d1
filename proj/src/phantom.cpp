#include "volnorm/phantom.hpp"

#include <cmath>

#include "volnorm/errors.hpp"
#include "volnorm/rng.hpp"

namespace volnorm {

double PhantomModel::field_at(double s, double r, double c) const {
  double total = 0.0;
  for (const auto& b : blobs) {
    const double ds = (s - b.center[0]) / b.sigma[0];
    const double dr = (r - b.center[1]) / b.sigma[1];
    const double dc = (c - b.center[2]) / b.sigma[2];
    total += b.amplitude * std::exp(-0.5 * (ds * ds + dr * dr + dc * dc));
  }
  return total;
}

bool PhantomModel::tumor_at(double s, double r, double c) const {
  if (tumor_index < 0) return false;
  const auto& b = blobs[static_cast<std::size_t>(tumor_index)];
  const double ds = (s - b.center[0]) / b.sigma[0];
  const double dr = (r - b.center[1]) / b.sigma[1];
  const double dc = (c - b.center[2]) / b.sigma[2];
  const double value = b.amplitude * std::exp(-0.5 * (ds * ds + dr * dr + dc * dc));
  return value > 0.5 * b.amplitude;
}

Image2D PhantomModel::analytic_slice(double s, int rows, int cols) const {
  Image2D img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      img(r, c) = static_cast<float>(field_at(s, r, c));
  return img;
}

Phantom make_phantom(std::uint64_t seed, const PhantomConfig& config) {
  for (int d : config.shape) {
    if (d < 8) throw InvalidConfig("phantom shape must be >= 8 per axis");
  }
  if (config.n_blobs < 0) throw InvalidConfig("n_blobs must be >= 0");
  if (config.tumor && config.n_blobs < 1) {
    throw InvalidConfig("a tumor phantom needs at least one blob");
  }
  if (!(config.tumor_scale > 0.0)) {
    throw InvalidConfig("tumor_scale must be positive");
  }

  Rng rng(seed);
  PhantomModel model;
  const auto& shape = config.shape;
  for (int i = 0; i < config.n_blobs; ++i) {
    GaussianBlob blob;
    const bool is_tumor = config.tumor && i == 0;
    for (int d = 0; d < 3; ++d) {
      const double extent = shape[d];
      if (is_tumor) {
        // Keep the tumor well inside the grid so its half-peak level set
        // is fully contained.
        blob.center[d] = rng.uniform(0.35 * extent, 0.65 * extent);
        blob.sigma[d] =
            rng.uniform(extent / 14.0, extent / 9.0) * config.tumor_scale;
      } else {
        blob.center[d] = rng.uniform(0.2 * extent, 0.8 * extent);
        blob.sigma[d] = rng.uniform(extent / 10.0, extent / 5.0);
      }
    }
    blob.amplitude =
        is_tumor ? 1.0f : static_cast<float>(rng.uniform(0.3, 0.9));
    model.blobs.push_back(blob);
    if (is_tumor) model.tumor_index = 0;
  }

  Volume3D vol(shape[0], shape[1], shape[2], Orientation::Coronal,
               {1.0f, 1.0f, 1.0f});
  Mask3D mask(shape[0], shape[1], shape[2], {1.0f, 1.0f, 1.0f});
  for (int s = 0; s < shape[0]; ++s)
    for (int r = 0; r < shape[1]; ++r)
      for (int c = 0; c < shape[2]; ++c) {
        vol.at(s, r, c) = static_cast<float>(model.field_at(s, r, c));
        if (model.tumor_index >= 0 && model.tumor_at(s, r, c)) {
          mask.at(s, r, c) = 1;
        }
      }
  vol.validate();
  return {std::move(vol), std::move(mask), std::move(model)};
}

}  // namespace volnorm

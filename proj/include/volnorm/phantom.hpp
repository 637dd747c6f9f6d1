#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "volnorm/volume.hpp"

namespace volnorm {

/// One axis-aligned 3D Gaussian component of a phantom field.
struct GaussianBlob {
  float amplitude = 1.0f;
  std::array<double, 3> center{};  // (slice, row, col), voxel units
  std::array<double, 3> sigma{};
};

/// Closed-form phantom field: a sum of Gaussian blobs. The field is exact
/// at any fractional coordinate, which makes intermediate-slice ground
/// truth computable analytically; the mask is the half-peak level set of
/// the designated tumor blob.
struct PhantomModel {
  std::vector<GaussianBlob> blobs;
  int tumor_index = -1;

  double field_at(double s, double r, double c) const;
  bool tumor_at(double s, double r, double c) const;

  /// Full analytic cross-section at a (possibly fractional) slice position.
  Image2D analytic_slice(double s, int rows, int cols) const;
};

struct PhantomConfig {
  std::array<int, 3> shape{48, 48, 48};  // (slices, rows, cols)
  int n_blobs = 5;
  bool tumor = true;
  /// Scales the tumor blob radii; the corpus label rule uses two values.
  double tumor_scale = 1.0;
};

struct Phantom {
  Volume3D volume;
  Mask3D mask;
  PhantomModel model;
};

/// Deterministic in seed. Shape must be >= 8 per axis and, with
/// tumor=true, n_blobs must be >= 1 (the first blob is the tumor).
/// Throws InvalidConfig.
Phantom make_phantom(std::uint64_t seed, const PhantomConfig& config);

}  // namespace volnorm

#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace volnorm {

/// 2D image carrier used for slices; indexed (row, col).
using Image2D = Eigen::ArrayXXf;

/// Anatomical plane indexed by a volume's slice axis.
enum class Orientation { Axial, Sagittal, Coronal };

const char* to_string(Orientation o);
Orientation orientation_from_string(const std::string& s);

/// Index triple (slice, row, col).
using Index3 = std::array<int, 3>;

/// Dense 3D scalar grid with per-axis spacing, an orientation tag and a
/// modality label. Values are 32-bit reals laid out slice-major, so each
/// slice is contiguous. Valid volumes are finite and non-negative (MRI
/// magnitude convention), with strictly positive spacing.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(int slices, int rows, int cols, Orientation orientation,
           std::array<float, 3> spacing_mm, std::string modality = "synthetic");

  int slices() const { return ns_; }
  int rows() const { return nr_; }
  int cols() const { return nc_; }
  long numel() const { return static_cast<long>(ns_) * nr_ * nc_; }

  float& at(int s, int r, int c) {
    return values_[(static_cast<long>(s) * nr_ + r) * nc_ + c];
  }
  float at(int s, int r, int c) const {
    return values_[(static_cast<long>(s) * nr_ + r) * nc_ + c];
  }

  Eigen::ArrayXf& values() { return values_; }
  const Eigen::ArrayXf& values() const { return values_; }

  Orientation orientation() const { return orientation_; }
  void set_orientation(Orientation o) { orientation_ = o; }
  const std::array<float, 3>& spacing() const { return spacing_; }
  void set_spacing(const std::array<float, 3>& s) { spacing_ = s; }
  const std::string& modality() const { return modality_; }
  void set_modality(std::string m) { modality_ = std::move(m); }

  Image2D slice(int s) const;
  void set_slice(int s, const Image2D& img);

  /// Checks the type invariants (finite, non-negative, positive spacing,
  /// non-degenerate dims); throws InvalidVolume. Called by the load and
  /// generation paths.
  void validate() const;

 private:
  int ns_ = 0, nr_ = 0, nc_ = 0;
  Eigen::ArrayXf values_;
  std::array<float, 3> spacing_{1.0f, 1.0f, 1.0f};
  Orientation orientation_ = Orientation::Coronal;
  std::string modality_ = "synthetic";
};

/// Binary mask sharing Volume3D's shape contract; values are 0 or 1.
class Mask3D {
 public:
  Mask3D() = default;
  Mask3D(int slices, int rows, int cols, std::array<float, 3> spacing_mm);

  int slices() const { return ns_; }
  int rows() const { return nr_; }
  int cols() const { return nc_; }
  long numel() const { return static_cast<long>(ns_) * nr_ * nc_; }

  std::uint8_t& at(int s, int r, int c) {
    return values_[(static_cast<std::size_t>(s) * nr_ + r) * nc_ + c];
  }
  std::uint8_t at(int s, int r, int c) const {
    return values_[(static_cast<std::size_t>(s) * nr_ + r) * nc_ + c];
  }

  std::vector<std::uint8_t>& values() { return values_; }
  const std::vector<std::uint8_t>& values() const { return values_; }

  const std::array<float, 3>& spacing() const { return spacing_; }
  void set_spacing(const std::array<float, 3>& s) { spacing_ = s; }

  long count() const;  ///< number of set voxels

 private:
  int ns_ = 0, nr_ = 0, nc_ = 0;
  std::vector<std::uint8_t> values_;
  std::array<float, 3> spacing_{1.0f, 1.0f, 1.0f};
};

// --- orientation handling ----------------------------------------------
//
// Reorientation is pure axis permutation, no resampling. Coronal is the
// reference frame; the fixed table is
//   Axial    <-> Coronal : swap slice and row axes (axes 0, 1)
//   Sagittal <-> Coronal : swap slice and column axes (axes 0, 2)
//   Axial    <-> Sagittal: composition through Coronal.
// Spacing components permute with their axes, so a round trip recovers the
// source volume exactly.

Volume3D reorient(const Volume3D& vol, Orientation target);
Mask3D reorient(const Mask3D& mask, Orientation source, Orientation target);

/// Smallest axis-aligned subvolume containing every voxel > threshold,
/// plus the offset of its origin in the source. Throws EmptyVolume when
/// nothing exceeds the threshold.
std::pair<Volume3D, Index3> crop_to_bounding_box(const Volume3D& vol,
                                                 float threshold = 0.0f);

/// `target` strictly increasing indices drawn uniformly from [0, n):
/// index_i = round_half_up(i * (n-1) / (target-1)). Endpoints always
/// included. Throws InsufficientSlices when n < target.
std::vector<int> uniform_select(int n, int target);

/// Linear map of [min, max] onto [0, 255]. Throws ConstantVolume when the
/// volume has no intensity range.
Volume3D scale_to_u8(const Volume3D& vol);

// --- grid utilities ------------------------------------------------------

/// Nearest-neighbour resize with endpoint-aligned index mapping
/// (src = round(dst * (src_n - 1) / (dst_n - 1)), the same rule
/// uniform_select applies along the slice axis). Identity when the sizes
/// match.
Image2D resize_nearest(const Image2D& img, int rows, int cols);

/// Replaces a volume's in-plane grid slice by slice.
Volume3D resize_in_plane_nearest(const Volume3D& vol, int rows, int cols);
Mask3D resize_in_plane_nearest(const Mask3D& mask, int rows, int cols);

}  // namespace volnorm

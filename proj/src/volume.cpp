#include "volnorm/volume.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "volnorm/errors.hpp"

namespace volnorm {

const char* to_string(Orientation o) {
  switch (o) {
    case Orientation::Axial:
      return "axial";
    case Orientation::Sagittal:
      return "sagittal";
    case Orientation::Coronal:
      return "coronal";
  }
  return "coronal";
}

Orientation orientation_from_string(const std::string& s) {
  if (s == "axial") return Orientation::Axial;
  if (s == "sagittal") return Orientation::Sagittal;
  if (s == "coronal") return Orientation::Coronal;
  throw InvalidConfig("unknown orientation: " + s);
}

Volume3D::Volume3D(int slices, int rows, int cols, Orientation orientation,
                   std::array<float, 3> spacing_mm, std::string modality)
    : ns_(slices),
      nr_(rows),
      nc_(cols),
      spacing_(spacing_mm),
      orientation_(orientation),
      modality_(std::move(modality)) {
  if (slices < 1 || rows < 1 || cols < 1) {
    throw InvalidVolume("volume dimensions must all be >= 1");
  }
  values_ = Eigen::ArrayXf::Zero(numel());
}

Image2D Volume3D::slice(int s) const {
  Image2D img(nr_, nc_);
  for (int r = 0; r < nr_; ++r)
    for (int c = 0; c < nc_; ++c) img(r, c) = at(s, r, c);
  return img;
}

void Volume3D::set_slice(int s, const Image2D& img) {
  if (img.rows() != nr_ || img.cols() != nc_) {
    throw ShapeMismatch("set_slice: image does not match in-plane grid");
  }
  for (int r = 0; r < nr_; ++r)
    for (int c = 0; c < nc_; ++c) at(s, r, c) = img(r, c);
}

void Volume3D::validate() const {
  if (ns_ < 1 || nr_ < 1 || nc_ < 1) {
    throw InvalidVolume("volume dimensions must all be >= 1");
  }
  for (float sp : spacing_) {
    if (!(sp > 0.0f) || !std::isfinite(sp)) {
      throw InvalidVolume("spacing components must be strictly positive");
    }
  }
  if (!values_.allFinite()) {
    throw InvalidVolume("volume contains NaN or Inf");
  }
  if ((values_ < 0.0f).any()) {
    throw InvalidVolume("volume contains negative intensities");
  }
}

Mask3D::Mask3D(int slices, int rows, int cols, std::array<float, 3> spacing_mm)
    : ns_(slices), nr_(rows), nc_(cols), spacing_(spacing_mm) {
  if (slices < 1 || rows < 1 || cols < 1) {
    throw InvalidVolume("mask dimensions must all be >= 1");
  }
  values_.assign(static_cast<std::size_t>(numel()), 0);
}

long Mask3D::count() const {
  long n = 0;
  for (auto v : values_) n += v;
  return n;
}

namespace {

// Axis permutation for source -> target: perm[d] gives the source axis
// that becomes target axis d. Built from the fixed table through Coronal.
std::array<int, 3> compose(const std::array<int, 3>& outer,
                           const std::array<int, 3>& inner) {
  return {inner[outer[0]], inner[outer[1]], inner[outer[2]]};
}

std::array<int, 3> to_coronal_perm(Orientation from) {
  switch (from) {
    case Orientation::Axial:
      return {1, 0, 2};  // swap slice and row axes
    case Orientation::Sagittal:
      return {2, 1, 0};  // swap slice and column axes
    case Orientation::Coronal:
      return {0, 1, 2};
  }
  return {0, 1, 2};
}

std::array<int, 3> reorient_perm(Orientation from, Orientation to) {
  // from -> Coronal, then Coronal -> to (each swap is an involution).
  return compose(to_coronal_perm(to), to_coronal_perm(from));
}

template <typename Grid, typename Get, typename Set>
void permute_grid(const Grid& src_dims, const std::array<int, 3>& perm,
                  const Get& get, const Set& set) {
  const int n0 = src_dims[perm[0]];
  const int n1 = src_dims[perm[1]];
  const int n2 = src_dims[perm[2]];
  std::array<int, 3> src{};
  for (int i = 0; i < n0; ++i) {
    src[perm[0]] = i;
    for (int j = 0; j < n1; ++j) {
      src[perm[1]] = j;
      for (int k = 0; k < n2; ++k) {
        src[perm[2]] = k;
        set(i, j, k, get(src[0], src[1], src[2]));
      }
    }
  }
}

}  // namespace

Volume3D reorient(const Volume3D& vol, Orientation target) {
  if (vol.orientation() == target) return vol;
  const auto perm = reorient_perm(vol.orientation(), target);
  const std::array<int, 3> dims{vol.slices(), vol.rows(), vol.cols()};
  Volume3D out(dims[perm[0]], dims[perm[1]], dims[perm[2]], target,
               {vol.spacing()[perm[0]], vol.spacing()[perm[1]],
                vol.spacing()[perm[2]]},
               vol.modality());
  permute_grid(
      dims, perm, [&](int s, int r, int c) { return vol.at(s, r, c); },
      [&](int s, int r, int c, float v) { out.at(s, r, c) = v; });
  return out;
}

Mask3D reorient(const Mask3D& mask, Orientation source, Orientation target) {
  if (source == target) return mask;
  const auto perm = reorient_perm(source, target);
  const std::array<int, 3> dims{mask.slices(), mask.rows(), mask.cols()};
  Mask3D out(dims[perm[0]], dims[perm[1]], dims[perm[2]],
             {mask.spacing()[perm[0]], mask.spacing()[perm[1]],
              mask.spacing()[perm[2]]});
  permute_grid(
      dims, perm, [&](int s, int r, int c) { return mask.at(s, r, c); },
      [&](int s, int r, int c, std::uint8_t v) { out.at(s, r, c) = v; });
  return out;
}

std::pair<Volume3D, Index3> crop_to_bounding_box(const Volume3D& vol,
                                                 float threshold) {
  Index3 lo{vol.slices(), vol.rows(), vol.cols()};
  Index3 hi{-1, -1, -1};
  for (int s = 0; s < vol.slices(); ++s)
    for (int r = 0; r < vol.rows(); ++r)
      for (int c = 0; c < vol.cols(); ++c) {
        if (vol.at(s, r, c) > threshold) {
          lo[0] = std::min(lo[0], s);
          lo[1] = std::min(lo[1], r);
          lo[2] = std::min(lo[2], c);
          hi[0] = std::max(hi[0], s);
          hi[1] = std::max(hi[1], r);
          hi[2] = std::max(hi[2], c);
        }
      }
  if (hi[0] < 0) {
    throw EmptyVolume("crop_to_bounding_box: no voxel above threshold");
  }
  Volume3D out(hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1,
               vol.orientation(), vol.spacing(), vol.modality());
  for (int s = 0; s < out.slices(); ++s)
    for (int r = 0; r < out.rows(); ++r)
      for (int c = 0; c < out.cols(); ++c)
        out.at(s, r, c) = vol.at(lo[0] + s, lo[1] + r, lo[2] + c);
  return {std::move(out), lo};
}

std::vector<int> uniform_select(int n, int target) {
  if (target < 2) {
    throw InvalidConfig("uniform_select: target must be >= 2");
  }
  if (n < target) {
    throw InsufficientSlices("uniform_select: need at least " +
                             std::to_string(target) + " slices, have " +
                             std::to_string(n));
  }
  std::vector<int> idx(static_cast<std::size_t>(target));
  const double scale = static_cast<double>(n - 1) / (target - 1);
  for (int i = 0; i < target; ++i) {
    idx[static_cast<std::size_t>(i)] =
        static_cast<int>(std::floor(i * scale + 0.5));
  }
  return idx;
}

Volume3D scale_to_u8(const Volume3D& vol) {
  const float lo = vol.values().minCoeff();
  const float hi = vol.values().maxCoeff();
  if (!(hi > lo)) {
    throw ConstantVolume("scale_to_u8: volume has no intensity range");
  }
  Volume3D out = vol;
  out.values() = (vol.values() - lo) * (255.0f / (hi - lo));
  return out;
}

Image2D resize_nearest(const Image2D& img, int rows, int cols) {
  const int sr = static_cast<int>(img.rows());
  const int sc = static_cast<int>(img.cols());
  if (sr == rows && sc == cols) return img;
  Image2D out(rows, cols);
  const double rscale = rows > 1 ? static_cast<double>(sr - 1) / (rows - 1) : 0.0;
  const double cscale = cols > 1 ? static_cast<double>(sc - 1) / (cols - 1) : 0.0;
  for (int r = 0; r < rows; ++r) {
    const int src_r = static_cast<int>(std::floor(r * rscale + 0.5));
    for (int c = 0; c < cols; ++c) {
      const int src_c = static_cast<int>(std::floor(c * cscale + 0.5));
      out(r, c) = img(src_r, src_c);
    }
  }
  return out;
}

Volume3D resize_in_plane_nearest(const Volume3D& vol, int rows, int cols) {
  if (vol.rows() == rows && vol.cols() == cols) return vol;
  Volume3D out(vol.slices(), rows, cols, vol.orientation(), vol.spacing(),
               vol.modality());
  auto sp = vol.spacing();
  sp[1] *= static_cast<float>(vol.rows()) / rows;
  sp[2] *= static_cast<float>(vol.cols()) / cols;
  out.set_spacing(sp);
  for (int s = 0; s < vol.slices(); ++s) {
    out.set_slice(s, resize_nearest(vol.slice(s), rows, cols));
  }
  return out;
}

Mask3D resize_in_plane_nearest(const Mask3D& mask, int rows, int cols) {
  if (mask.rows() == rows && mask.cols() == cols) return mask;
  Mask3D out(mask.slices(), rows, cols, mask.spacing());
  auto sp = mask.spacing();
  sp[1] *= static_cast<float>(mask.rows()) / rows;
  sp[2] *= static_cast<float>(mask.cols()) / cols;
  out.set_spacing(sp);
  const double rscale =
      rows > 1 ? static_cast<double>(mask.rows() - 1) / (rows - 1) : 0.0;
  const double cscale =
      cols > 1 ? static_cast<double>(mask.cols() - 1) / (cols - 1) : 0.0;
  for (int s = 0; s < mask.slices(); ++s)
    for (int r = 0; r < rows; ++r) {
      const int src_r = static_cast<int>(std::floor(r * rscale + 0.5));
      for (int c = 0; c < cols; ++c) {
        const int src_c = static_cast<int>(std::floor(c * cscale + 0.5));
        out.at(s, r, c) = mask.at(s, src_r, src_c);
      }
    }
  return out;
}

}  // namespace volnorm

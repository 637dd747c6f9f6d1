#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "volnorm/volume.hpp"

namespace volnorm::radiomics {

/// Fixed feature registry: 6 location/shape entries plus 11 intensity and
/// texture entries per modality (FLAIR, T1wCE, T2w) = 39.
constexpr int kFeatureCount = 39;
const std::array<std::string, kFeatureCount>& feature_names();

/// Per-axis means of the set voxel coordinates, in voxel units, ordered as
/// the (slice, row, col) axes.
struct Centroid {
  double x, y, z;
};
Centroid centroid(const Mask3D& mask);

/// Volume as voxel count times voxel volume; surface area by counting mask
/// faces exposed to background or the grid boundary; sphericity
/// pi^(1/3) (6V)^(2/3) / A.
struct ShapeFeatures {
  double volume_mm3;
  double surface_area_mm2;
  double sphericity;
};
ShapeFeatures shape_features(const Mask3D& mask);

/// First-order statistics over the masked raw intensities. Entropy uses a
/// 64-bin equal-width histogram of the masked range (log base 2); variance
/// is the population variance.
struct FirstOrderFeatures {
  double energy;
  double total_energy;
  double entropy;
  double mean;
  double variance;
};
FirstOrderFeatures first_order(const Volume3D& vol, const Mask3D& mask);

/// The 13 unique 3D direction vectors (one per axis pair of the
/// 26-neighbourhood).
const std::vector<Index3>& directions13();

/// Symmetric gray-level co-occurrence matrix over `levels` equal-width
/// bins of the masked intensity range; both voxels of a pair must be in
/// the mask.
struct GLCMatrix {
  int levels = 0;
  Eigen::MatrixXd counts;  // levels x levels
  double total = 0.0;
  Eigen::MatrixXd normalized() const;
};
GLCMatrix glcm(const Volume3D& vol, const Mask3D& mask, int levels = 32,
               const std::vector<Index3>& offsets = directions13());

struct GlcmFeatures {
  double contrast;
  double correlation;  ///< 1 when either marginal variance is 0
  double angular_second_moment;
  double inverse_difference_moment;
};
GlcmFeatures glcm_features(const GLCMatrix& m);

/// Gray-level run-length matrix: maximal runs of equal quantized level
/// along each direction, restricted to in-mask voxels.
struct GLRLMatrix {
  int levels = 0;
  int max_run = 0;
  Eigen::MatrixXd counts;  // levels x max_run, column j-1 = run length j
  double total = 0.0;
};
GLRLMatrix glrlm(const Volume3D& vol, const Mask3D& mask, int levels = 32,
                 const std::vector<Index3>& directions = directions13());

struct GlrlmFeatures {
  double short_run_emphasis;
  double long_run_emphasis;
};
GlrlmFeatures glrlm_features(const GLRLMatrix& m);

/// Co-registered per-modality scans of one subject.
struct ModalityVolumes {
  Volume3D flair;
  Volume3D t1wce;
  Volume3D t2w;
};

struct FeatureVector {
  std::array<double, kFeatureCount> values{};
};

/// Assembles the 39-entry vector in registry order:
/// [Xc, Yc, Zc, Volume, SurfaceArea, Sphericity] then per modality
/// [Energy, TotalEnergy, Entropy, Mean, Variance, GLCM-Contrast,
///  GLCM-Correlation, GLCM-ASM, GLCM-IDM, GLRLM-SRE, GLRLM-LRE].
FeatureVector extract_all(const ModalityVolumes& volumes, const Mask3D& mask);

/// Segmentation overlap; both metrics are 1 when both masks are empty.
double iou(const Mask3D& a, const Mask3D& b);
double dice(const Mask3D& a, const Mask3D& b);

}  // namespace volnorm::radiomics

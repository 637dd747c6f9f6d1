#include "volnorm/radiomics.hpp"

#include <cmath>
#include <limits>

#include "volnorm/errors.hpp"

namespace volnorm::radiomics {

const std::array<std::string, kFeatureCount>& feature_names() {
  static const std::array<std::string, kFeatureCount> names = [] {
    std::array<std::string, kFeatureCount> n;
    n[0] = "Xc";
    n[1] = "Yc";
    n[2] = "Zc";
    n[3] = "Volume";
    n[4] = "SurfaceArea";
    n[5] = "Sphericity";
    const char* modalities[3] = {"FLAIR", "T1wCE", "T2w"};
    const char* per_modality[11] = {
        "Energy",        "TotalEnergy",     "Entropy",  "Mean",
        "Variance",      "GlcmContrast",    "GlcmCorrelation",
        "GlcmASM",       "GlcmIDM",         "GlrlmSRE", "GlrlmLRE"};
    int k = 6;
    for (const char* m : modalities) {
      for (const char* f : per_modality) {
        n[static_cast<std::size_t>(k++)] = std::string(m) + "_" + f;
      }
    }
    return n;
  }();
  return names;
}

namespace {

void require_same_shape(const Volume3D& vol, const Mask3D& mask) {
  if (vol.slices() != mask.slices() || vol.rows() != mask.rows() ||
      vol.cols() != mask.cols()) {
    throw ShapeMismatch("volume and mask shapes differ");
  }
}

bool in_bounds(const Mask3D& m, int s, int r, int c) {
  return s >= 0 && s < m.slices() && r >= 0 && r < m.rows() && c >= 0 &&
         c < m.cols();
}

// Equal-width quantization of masked intensities; a degenerate range maps
// everything to level 0.
std::vector<int> quantize_masked(const Volume3D& vol, const Mask3D& mask,
                                 int levels) {
  float lo = std::numeric_limits<float>::max();
  float hi = std::numeric_limits<float>::lowest();
  for (long i = 0; i < mask.numel(); ++i) {
    if (mask.values()[static_cast<std::size_t>(i)]) {
      lo = std::min(lo, vol.values()[i]);
      hi = std::max(hi, vol.values()[i]);
    }
  }
  std::vector<int> level(static_cast<std::size_t>(vol.numel()), 0);
  if (hi > lo) {
    const double scale = static_cast<double>(levels) / (static_cast<double>(hi) - lo);
    for (long i = 0; i < vol.numel(); ++i) {
      if (!mask.values()[static_cast<std::size_t>(i)]) continue;
      const int q = static_cast<int>((vol.values()[i] - lo) * scale);
      level[static_cast<std::size_t>(i)] = std::min(q, levels - 1);
    }
  }
  return level;
}

}  // namespace

Centroid centroid(const Mask3D& mask) {
  double sx = 0.0, sy = 0.0, sz = 0.0;
  long n = 0;
  for (int s = 0; s < mask.slices(); ++s)
    for (int r = 0; r < mask.rows(); ++r)
      for (int c = 0; c < mask.cols(); ++c)
        if (mask.at(s, r, c)) {
          sx += s;
          sy += r;
          sz += c;
          ++n;
        }
  if (n == 0) throw EmptyMask("centroid of an empty mask");
  return {sx / n, sy / n, sz / n};
}

ShapeFeatures shape_features(const Mask3D& mask) {
  const auto& sp = mask.spacing();
  const double face_area[3] = {static_cast<double>(sp[1]) * sp[2],
                               static_cast<double>(sp[0]) * sp[2],
                               static_cast<double>(sp[0]) * sp[1]};
  const double voxel_volume = static_cast<double>(sp[0]) * sp[1] * sp[2];
  long count = 0;
  double area = 0.0;
  static const int face_dirs[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                      {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
  for (int s = 0; s < mask.slices(); ++s)
    for (int r = 0; r < mask.rows(); ++r)
      for (int c = 0; c < mask.cols(); ++c) {
        if (!mask.at(s, r, c)) continue;
        ++count;
        for (int f = 0; f < 6; ++f) {
          const int ns = s + face_dirs[f][0];
          const int nr = r + face_dirs[f][1];
          const int nc = c + face_dirs[f][2];
          if (!in_bounds(mask, ns, nr, nc) || !mask.at(ns, nr, nc)) {
            area += face_area[f / 2];
          }
        }
      }
  if (count == 0) throw EmptyMask("shape features of an empty mask");
  const double volume = count * voxel_volume;
  const double sphericity =
      std::cbrt(3.14159265358979323846) * std::pow(6.0 * volume, 2.0 / 3.0) /
      area;
  return {volume, area, sphericity};
}

FirstOrderFeatures first_order(const Volume3D& vol, const Mask3D& mask) {
  require_same_shape(vol, mask);
  double energy = 0.0, sum = 0.0;
  float lo = std::numeric_limits<float>::max();
  float hi = std::numeric_limits<float>::lowest();
  long n = 0;
  for (long i = 0; i < vol.numel(); ++i) {
    if (!mask.values()[static_cast<std::size_t>(i)]) continue;
    const double x = vol.values()[i];
    energy += x * x;
    sum += x;
    lo = std::min(lo, vol.values()[i]);
    hi = std::max(hi, vol.values()[i]);
    ++n;
  }
  if (n == 0) throw EmptyMask("first_order over an empty mask");
  const double mean = sum / n;
  double ss = 0.0;
  for (long i = 0; i < vol.numel(); ++i) {
    if (!mask.values()[static_cast<std::size_t>(i)]) continue;
    const double d = vol.values()[i] - mean;
    ss += d * d;
  }

  constexpr int kEntropyBins = 64;
  std::array<long, kEntropyBins> hist{};
  if (hi > lo) {
    const double scale = kEntropyBins / (static_cast<double>(hi) - lo);
    for (long i = 0; i < vol.numel(); ++i) {
      if (!mask.values()[static_cast<std::size_t>(i)]) continue;
      const int bin = std::min(
          kEntropyBins - 1,
          static_cast<int>((vol.values()[i] - lo) * scale));
      hist[static_cast<std::size_t>(bin)]++;
    }
  } else {
    hist[0] = n;
  }
  double entropy = 0.0;
  for (long h : hist) {
    if (h == 0) continue;
    const double p = static_cast<double>(h) / n;
    entropy -= p * std::log2(p);
  }

  const double voxel_volume = static_cast<double>(vol.spacing()[0]) *
                              vol.spacing()[1] * vol.spacing()[2];
  return {energy, voxel_volume * energy, entropy, mean, ss / n};
}

const std::vector<Index3>& directions13() {
  static const std::vector<Index3> dirs = [] {
    std::vector<Index3> d;
    for (int s = -1; s <= 1; ++s)
      for (int r = -1; r <= 1; ++r)
        for (int c = -1; c <= 1; ++c) {
          if (s == 0 && r == 0 && c == 0) continue;
          // keep one direction per axis line
          if (s > 0 || (s == 0 && r > 0) || (s == 0 && r == 0 && c > 0)) {
            d.push_back({s, r, c});
          }
        }
    return d;
  }();
  return dirs;
}

Eigen::MatrixXd GLCMatrix::normalized() const {
  if (total <= 0.0) return counts;
  return counts / total;
}

GLCMatrix glcm(const Volume3D& vol, const Mask3D& mask, int levels,
               const std::vector<Index3>& offsets) {
  require_same_shape(vol, mask);
  if (levels < 2) throw InvalidConfig("glcm needs at least 2 levels");
  const auto level = quantize_masked(vol, mask, levels);
  GLCMatrix m;
  m.levels = levels;
  m.counts = Eigen::MatrixXd::Zero(levels, levels);
  for (int s = 0; s < mask.slices(); ++s)
    for (int r = 0; r < mask.rows(); ++r)
      for (int c = 0; c < mask.cols(); ++c) {
        if (!mask.at(s, r, c)) continue;
        const long i =
            (static_cast<long>(s) * mask.rows() + r) * mask.cols() + c;
        for (const auto& d : offsets) {
          const int ns = s + d[0], nr = r + d[1], nc = c + d[2];
          if (!in_bounds(mask, ns, nr, nc) || !mask.at(ns, nr, nc)) continue;
          const long j =
              (static_cast<long>(ns) * mask.rows() + nr) * mask.cols() + nc;
          const int a = level[static_cast<std::size_t>(i)];
          const int b = level[static_cast<std::size_t>(j)];
          m.counts(a, b) += 1.0;
          m.counts(b, a) += 1.0;
        }
      }
  m.total = m.counts.sum();
  if (m.total <= 0.0) {
    throw DegenerateRegion("glcm: no co-occurring in-mask pair");
  }
  return m;
}

GlcmFeatures glcm_features(const GLCMatrix& m) {
  const Eigen::MatrixXd p = m.normalized();
  const int n = m.levels;
  double contrast = 0.0, asm_energy = 0.0, idm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double pij = p(i, j);
      const double diff = i - j;
      contrast += pij * diff * diff;
      asm_energy += pij * pij;
      idm += pij / (1.0 + diff * diff);
    }
  // Marginal statistics (the matrix is symmetric, so both marginals agree).
  double mu_r = 0.0, mu_c = 0.0;
  for (int i = 0; i < n; ++i) {
    mu_r += i * p.row(i).sum();
    mu_c += i * p.col(i).sum();
  }
  double var_r = 0.0, var_c = 0.0, cross = 0.0;
  for (int i = 0; i < n; ++i) {
    var_r += (i - mu_r) * (i - mu_r) * p.row(i).sum();
    var_c += (i - mu_c) * (i - mu_c) * p.col(i).sum();
    for (int j = 0; j < n; ++j) cross += i * j * p(i, j);
  }
  double correlation = 1.0;
  if (var_r > 0.0 && var_c > 0.0) {
    correlation = (cross - mu_r * mu_c) / std::sqrt(var_r * var_c);
  }
  return {contrast, correlation, asm_energy, idm};
}

GLRLMatrix glrlm(const Volume3D& vol, const Mask3D& mask, int levels,
                 const std::vector<Index3>& directions) {
  require_same_shape(vol, mask);
  if (levels < 2) throw InvalidConfig("glrlm needs at least 2 levels");
  if (mask.count() == 0) throw DegenerateRegion("glrlm over an empty mask");
  const auto level = quantize_masked(vol, mask, levels);
  const int max_run = std::max({mask.slices(), mask.rows(), mask.cols()});
  GLRLMatrix m;
  m.levels = levels;
  m.max_run = max_run;
  m.counts = Eigen::MatrixXd::Zero(levels, max_run);

  const auto at_level = [&](int s, int r, int c) {
    return level[(static_cast<std::size_t>(s) * mask.rows() + r) * mask.cols() +
                 c];
  };
  for (const auto& d : directions) {
    for (int s = 0; s < mask.slices(); ++s)
      for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c) {
          if (!mask.at(s, r, c)) continue;
          const int q = at_level(s, r, c);
          // Run start: the predecessor along d is outside the mask or has
          // a different level.
          const int ps = s - d[0], pr = r - d[1], pc = c - d[2];
          if (in_bounds(mask, ps, pr, pc) && mask.at(ps, pr, pc) &&
              at_level(ps, pr, pc) == q) {
            continue;
          }
          int len = 1;
          int ns = s + d[0], nr = r + d[1], nc = c + d[2];
          while (in_bounds(mask, ns, nr, nc) && mask.at(ns, nr, nc) &&
                 at_level(ns, nr, nc) == q) {
            ++len;
            ns += d[0];
            nr += d[1];
            nc += d[2];
          }
          m.counts(q, len - 1) += 1.0;
        }
  }
  m.total = m.counts.sum();
  return m;
}

GlrlmFeatures glrlm_features(const GLRLMatrix& m) {
  if (m.total <= 0.0) throw DegenerateRegion("glrlm has no runs");
  double sre = 0.0, lre = 0.0;
  for (int i = 0; i < m.levels; ++i)
    for (int j = 0; j < m.max_run; ++j) {
      const double p = m.counts(i, j) / m.total;
      if (p == 0.0) continue;
      const double len = j + 1;
      sre += p / (len * len);
      lre += p * len * len;
    }
  return {sre, lre};
}

FeatureVector extract_all(const ModalityVolumes& volumes, const Mask3D& mask) {
  const Volume3D* mods[3] = {&volumes.flair, &volumes.t1wce, &volumes.t2w};
  const char* names[3] = {"FLAIR", "T1wCE", "T2w"};
  for (int i = 0; i < 3; ++i) {
    if (mods[i]->numel() == 0) {
      throw MissingModality(std::string("missing modality ") + names[i]);
    }
    require_same_shape(*mods[i], mask);
  }
  if (mask.count() == 0) throw EmptyMask("extract_all on an empty mask");

  FeatureVector fv;
  const Centroid c = centroid(mask);
  const ShapeFeatures sf = shape_features(mask);
  fv.values[0] = c.x;
  fv.values[1] = c.y;
  fv.values[2] = c.z;
  fv.values[3] = sf.volume_mm3;
  fv.values[4] = sf.surface_area_mm2;
  fv.values[5] = sf.sphericity;
  int k = 6;
  for (int i = 0; i < 3; ++i) {
    const FirstOrderFeatures fo = first_order(*mods[i], mask);
    const GlcmFeatures gf = glcm_features(glcm(*mods[i], mask));
    const GlrlmFeatures rf = glrlm_features(glrlm(*mods[i], mask));
    fv.values[static_cast<std::size_t>(k++)] = fo.energy;
    fv.values[static_cast<std::size_t>(k++)] = fo.total_energy;
    fv.values[static_cast<std::size_t>(k++)] = fo.entropy;
    fv.values[static_cast<std::size_t>(k++)] = fo.mean;
    fv.values[static_cast<std::size_t>(k++)] = fo.variance;
    fv.values[static_cast<std::size_t>(k++)] = gf.contrast;
    fv.values[static_cast<std::size_t>(k++)] = gf.correlation;
    fv.values[static_cast<std::size_t>(k++)] = gf.angular_second_moment;
    fv.values[static_cast<std::size_t>(k++)] = gf.inverse_difference_moment;
    fv.values[static_cast<std::size_t>(k++)] = rf.short_run_emphasis;
    fv.values[static_cast<std::size_t>(k++)] = rf.long_run_emphasis;
  }
  return fv;
}

namespace {

void require_same_shape(const Mask3D& a, const Mask3D& b) {
  if (a.slices() != b.slices() || a.rows() != b.rows() ||
      a.cols() != b.cols()) {
    throw ShapeMismatch("mask shapes differ");
  }
}

}  // namespace

double iou(const Mask3D& a, const Mask3D& b) {
  require_same_shape(a, b);
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const bool av = a.values()[i] != 0;
    const bool bv = b.values()[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double dice(const Mask3D& a, const Mask3D& b) {
  require_same_shape(a, b);
  long inter = 0, total = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const bool av = a.values()[i] != 0;
    const bool bv = b.values()[i] != 0;
    inter += av && bv;
    total += av;
    total += bv;
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace volnorm::radiomics

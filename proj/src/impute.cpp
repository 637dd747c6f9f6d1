#include "volnorm/impute.hpp"

#include <cmath>

#include "volnorm/errors.hpp"
#include "volnorm/stats.hpp"

namespace volnorm::impute {

std::vector<Image2D> copy_impute_round(const std::vector<Image2D>& slices) {
  return isgen_impute_round(
      slices, [](const Image2D& left, const Image2D&) { return left; });
}

std::vector<Image2D> isgen_impute_round(const std::vector<Image2D>& slices,
                                        const SliceSynth& synth) {
  const std::size_t n = slices.size();
  if (n < 2) {
    throw TooFewSlices("an imputation round needs at least 2 slices");
  }
  std::vector<Image2D> out;
  out.reserve(2 * n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    out.push_back(slices[i]);
    out.push_back(synth(slices[i], slices[i + 1]));
  }
  out.push_back(slices.back());
  return out;
}

SliceSynth make_generator_synth(const isgen::Generator& gen,
                                float intensity_peak) {
  const int model_size = gen.config().image_size;
  const float scale = intensity_peak > 0.0f ? intensity_peak : 1.0f;
  return [&gen, model_size, scale](const Image2D& left,
                                   const Image2D& right) -> Image2D {
    const int rows = static_cast<int>(left.rows());
    const int cols = static_cast<int>(left.cols());
    Image2D l = resize_nearest(left / scale, model_size, model_size);
    Image2D r = resize_nearest(right / scale, model_size, model_size);
    Image2D mid = gen.generate(l, r);
    return resize_nearest(mid, rows, cols) * scale;
  };
}

SliceSynth copy_synth() {
  return [](const Image2D& left, const Image2D&) { return left; };
}

int rounds_to_reach(int n, int target) {
  if (n < 2) throw TooFewSlices("need at least 2 slices to impute");
  int k = 0;
  long count = n;
  while (count < target) {
    count = 2 * count - 1;
    ++k;
  }
  return k;
}

Volume3D normalize_volume(const Volume3D& vol, const SliceSynth& synth,
                          int target) {
  if (target < 2) throw InvalidConfig("normalization target must be >= 2");
  if (vol.slices() < 2) {
    throw TooFewSlices("normalize_volume needs at least 2 slices");
  }

  std::vector<Image2D> slices;
  slices.reserve(static_cast<std::size_t>(vol.slices()));
  for (int s = 0; s < vol.slices(); ++s) slices.push_back(vol.slice(s));

  float slice_spacing = vol.spacing()[0];
  while (static_cast<int>(slices.size()) < target) {
    slices = isgen_impute_round(slices, synth);
    slice_spacing *= 0.5f;
  }

  const int count = static_cast<int>(slices.size());
  const auto keep = uniform_select(count, target);
  slice_spacing *= static_cast<float>(count - 1) / (target - 1);

  Volume3D selected(target, vol.rows(), vol.cols(), vol.orientation(),
                    {slice_spacing, vol.spacing()[1], vol.spacing()[2]},
                    vol.modality());
  for (int i = 0; i < target; ++i) {
    selected.set_slice(i, slices[static_cast<std::size_t>(keep[i])]);
  }

  return reorient(resize_in_plane_nearest(selected, target, target),
                  Orientation::Coronal);
}

Mask3D normalize_mask(const Mask3D& mask, Orientation source, int target) {
  if (target < 2) throw InvalidConfig("normalization target must be >= 2");
  if (mask.slices() < 2) {
    throw TooFewSlices("normalize_mask needs at least 2 slices");
  }
  // Represent mask slices as images; copy rounds keep values in {0, 1}.
  std::vector<Image2D> slices;
  for (int s = 0; s < mask.slices(); ++s) {
    Image2D img(mask.rows(), mask.cols());
    for (int r = 0; r < mask.rows(); ++r)
      for (int c = 0; c < mask.cols(); ++c)
        img(r, c) = static_cast<float>(mask.at(s, r, c));
    slices.push_back(std::move(img));
  }
  float slice_spacing = mask.spacing()[0];
  while (static_cast<int>(slices.size()) < target) {
    slices = copy_impute_round(slices);
    slice_spacing *= 0.5f;
  }
  const int count = static_cast<int>(slices.size());
  const auto keep = uniform_select(count, target);
  slice_spacing *= static_cast<float>(count - 1) / (target - 1);

  Mask3D selected(target, mask.rows(), mask.cols(),
                  {slice_spacing, mask.spacing()[1], mask.spacing()[2]});
  for (int i = 0; i < target; ++i) {
    const Image2D& img = slices[static_cast<std::size_t>(keep[i])];
    for (int r = 0; r < mask.rows(); ++r)
      for (int c = 0; c < mask.cols(); ++c)
        selected.at(i, r, c) = img(r, c) != 0.0f ? 1 : 0;
  }
  return reorient(resize_in_plane_nearest(selected, target, target), source,
                  Orientation::Coronal);
}

double mae_0_255(const Image2D& pred, const Image2D& truth, float truth_min,
                 float truth_max) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ShapeMismatch("mae_0_255: slice shapes differ");
  }
  if (!(truth_max > truth_min)) {
    throw ConstantVolume("mae_0_255: degenerate truth intensity range");
  }
  const double scale = 255.0 / (static_cast<double>(truth_max) - truth_min);
  return scale *
         (pred.cast<double>() - truth.cast<double>()).abs().mean();
}

PairedComparison paired_comparison(const std::vector<double>& errors_a,
                                   const std::vector<double>& errors_b,
                                   double alpha) {
  if (errors_a.size() != errors_b.size()) {
    throw LengthMismatch("paired_comparison: unequal sample counts");
  }
  const std::size_t n = errors_a.size();
  if (n < 2) {
    throw LengthMismatch("paired_comparison needs at least 2 pairs");
  }
  PairedComparison out;
  double sum_a = 0.0, sum_b = 0.0, sum_d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_a += errors_a[i];
    sum_b += errors_b[i];
    sum_d += errors_a[i] - errors_b[i];
  }
  out.mean_a = sum_a / static_cast<double>(n);
  out.mean_b = sum_b / static_cast<double>(n);
  out.df = static_cast<int>(n) - 1;
  const double mean_d = sum_d / static_cast<double>(n);

  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = errors_a[i] - errors_b[i] - mean_d;
    ss += d * d;
  }
  if (ss == 0.0) {
    out.degenerate = true;
    out.t = 0.0;
    out.p = mean_d != 0.0 ? 0.0 : 1.0;
    out.significant = out.p < alpha;
    return out;
  }
  const double sd = std::sqrt(ss / out.df);
  out.t = mean_d / (sd / std::sqrt(static_cast<double>(n)));
  out.p = stats::t_two_sided_p(out.t, out.df);
  out.significant = out.p < alpha;
  return out;
}

}  // namespace volnorm::impute

#pragma once

#include <functional>
#include <vector>

#include "volnorm/isgen.hpp"
#include "volnorm/volume.hpp"

namespace volnorm::impute {

/// Synthesizes the slice lying between two neighbours. Implementations:
/// the IS-Gen generator (make_generator_synth), the copy imputer, or test
/// stubs.
using SliceSynth =
    std::function<Image2D(const Image2D& left, const Image2D& right)>;

/// Baseline: between each adjacent pair, inserts a copy of the left slice.
/// No new pixel values are created; output length 2n - 1.
std::vector<Image2D> copy_impute_round(const std::vector<Image2D>& slices);

/// Between each adjacent pair (s_i, s_{i+1}) inserts synth(s_i, s_{i+1});
/// original slices are preserved bitwise at even output positions.
std::vector<Image2D> isgen_impute_round(const std::vector<Image2D>& slices,
                                        const SliceSynth& synth);

/// Wraps a trained generator as a SliceSynth at the volume's native grid:
/// inputs are scaled by 1/intensity_peak (backgrounds stay 0), resized to
/// the model grid, synthesized, then mapped back.
SliceSynth make_generator_synth(const isgen::Generator& gen,
                                float intensity_peak);

/// A SliceSynth that duplicates the left neighbour (the copy imputer in
/// SliceSynth form).
SliceSynth copy_synth();

/// Imputation rounds needed to reach at least `target` slices from n
/// (after k rounds the count is 2^k (n-1) + 1); 0 when already there.
int rounds_to_reach(int n, int target);

/// Repeats isgen_impute_round until the slice count reaches `target`, takes
/// uniform_select(count, target), resizes the in-plane grid to
/// target x target (nearest neighbour), and reorients to Coronal. The
/// in-plane resize happens in the scan's native orientation, before the
/// reorientation, which is what makes the output exactly target^3 for any
/// input shape. A coronal target-sized input passes through bitwise.
Volume3D normalize_volume(const Volume3D& vol, const SliceSynth& synth,
                          int target = 128);

/// The mask counterpart: copy-imputer rounds (which preserve {0,1} values)
/// plus the same selection, resize and reorientation, so ground-truth masks
/// stay aligned with normalized volumes.
Mask3D normalize_mask(const Mask3D& mask, Orientation source, int target = 128);

/// Mean absolute pixel error after mapping both images onto [0, 255] with
/// the truth volume's intensity range.
double mae_0_255(const Image2D& pred, const Image2D& truth, float truth_min,
                 float truth_max);

struct PairedComparison {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t = 0.0;
  double p = 1.0;
  int df = 0;
  bool significant = false;
  bool degenerate = false;  ///< all paired differences identical
};

/// Two-sided paired t-test on per-case differences a_i - b_i. When every
/// difference is identical the variance is degenerate and the result is
/// reported exactly: p = 0 for a nonzero mean difference, else p = 1.
PairedComparison paired_comparison(const std::vector<double>& errors_a,
                                   const std::vector<double>& errors_b,
                                   double alpha = 0.05);

}  // namespace volnorm::impute

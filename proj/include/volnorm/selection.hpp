#pragma once

#include "volnorm/volume.hpp"

namespace volnorm::selection {

/// Index of the slice with the most voxels above the threshold (the
/// largest cross-section); ties break toward the smallest index. Throws
/// EmptyVolume when nothing exceeds the threshold.
int central_image_index(const Volume3D& vol, float threshold = 0.0f);

/// Index of the slice with the largest mask area; ties break toward the
/// smallest index. Throws EmptyMask.
int tumor_center_index(const Mask3D& mask);

/// Contiguous half-open slice range [start, start + n).
struct WindowRange {
  int start = 0;
  int count = 0;
  int end() const { return start + count; }
};

/// The n slices around `center`, clamped to stay inside [0, total):
/// start = clamp(center - n/2, 0, total - n). Throws WindowTooLarge when
/// total < n.
WindowRange select_window(int center, int n, int total);

struct SelectedWindow {
  Volume3D volume;  ///< the selected slices
  WindowRange range;
  int center = 0;   ///< the tumor-area argmax slice
};

/// Tumor-centered selection: tumor_center_index then select_window,
/// returning the selected sub-volume plus the chosen range. The inputs are
/// expected to be a normalized volume and its aligned mask.
SelectedWindow enhanced_selection(const Volume3D& vol, const Mask3D& mask,
                                  int n = 64);

}  // namespace volnorm::selection

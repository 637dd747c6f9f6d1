#include "volnorm/selection.hpp"

#include <algorithm>

#include "volnorm/errors.hpp"

namespace volnorm::selection {

int central_image_index(const Volume3D& vol, float threshold) {
  long best_count = 0;
  int best_index = -1;
  for (int s = 0; s < vol.slices(); ++s) {
    long count = 0;
    for (int r = 0; r < vol.rows(); ++r)
      for (int c = 0; c < vol.cols(); ++c)
        if (vol.at(s, r, c) > threshold) ++count;
    if (count > best_count) {
      best_count = count;
      best_index = s;
    }
  }
  if (best_index < 0) {
    throw EmptyVolume("central_image_index: no voxel above threshold");
  }
  return best_index;
}

int tumor_center_index(const Mask3D& mask) {
  long best_area = 0;
  int best_index = -1;
  for (int s = 0; s < mask.slices(); ++s) {
    long area = 0;
    for (int r = 0; r < mask.rows(); ++r)
      for (int c = 0; c < mask.cols(); ++c) area += mask.at(s, r, c);
    if (area > best_area) {
      best_area = area;
      best_index = s;
    }
  }
  if (best_index < 0) throw EmptyMask("tumor_center_index: empty mask");
  return best_index;
}

WindowRange select_window(int center, int n, int total) {
  if (n < 1) throw InvalidConfig("window size must be >= 1");
  if (total < n) {
    throw WindowTooLarge("window of " + std::to_string(n) +
                         " slices does not fit in " + std::to_string(total));
  }
  const int start = std::clamp(center - n / 2, 0, total - n);
  return {start, n};
}

SelectedWindow enhanced_selection(const Volume3D& vol, const Mask3D& mask,
                                  int n) {
  if (vol.slices() != mask.slices() || vol.rows() != mask.rows() ||
      vol.cols() != mask.cols()) {
    throw ShapeMismatch("enhanced_selection: volume and mask shapes differ");
  }
  const int center = tumor_center_index(mask);
  const WindowRange range = select_window(center, n, vol.slices());
  Volume3D out(n, vol.rows(), vol.cols(), vol.orientation(), vol.spacing(),
               vol.modality());
  for (int i = 0; i < n; ++i) {
    out.set_slice(i, vol.slice(range.start + i));
  }
  return {std::move(out), range, center};
}

}  // namespace volnorm::selection

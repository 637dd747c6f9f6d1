#include <cmath>
#include <vector>

#include "doctest.h"
#include "volnorm/errors.hpp"
#include "volnorm/impute.hpp"
#include "volnorm/phantom.hpp"
#include "volnorm/rng.hpp"

using namespace volnorm;
using namespace volnorm::impute;

namespace {

Image2D constant_slice(float v, int n = 4) {
  return Image2D::Constant(n, n, v);
}

SliceSynth average_synth() {
  return [](const Image2D& a, const Image2D& b) -> Image2D {
    return 0.5f * (a + b);
  };
}

}  // namespace

TEST_CASE("copy imputer duplicates the left neighbour") {
  std::vector<Image2D> in{constant_slice(1), constant_slice(2),
                          constant_slice(3)};
  auto out = copy_impute_round(in);
  REQUIRE(out.size() == 5);
  const float expected[5] = {1, 1, 2, 2, 3};
  for (int i = 0; i < 5; ++i) CHECK(out[static_cast<size_t>(i)](0, 0) == expected[i]);
}

TEST_CASE("copy imputer output length is 2n-1 and synthesizes nothing") {
  Rng rng(1);
  std::vector<Image2D> in;
  for (int i = 0; i < 33; ++i) {
    Image2D s(3, 3);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) s(r, c) = rng.uniform_float();
    in.push_back(std::move(s));
  }
  auto out = copy_impute_round(in);
  CHECK(out.size() == 65);
  for (const auto& s : out) {
    bool found = false;
    for (const auto& orig : in) {
      if ((s == orig).all()) {
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("copy imputer needs at least two slices") {
  std::vector<Image2D> one{constant_slice(1)};
  CHECK_THROWS_AS(copy_impute_round(one), TooFewSlices);
}

TEST_CASE("isgen round interleaves synthesized slices") {
  std::vector<Image2D> in{constant_slice(0), constant_slice(1)};
  auto out = isgen_impute_round(in, average_synth());
  REQUIRE(out.size() == 3);
  CHECK(out[0](0, 0) == 0.0f);
  CHECK(out[1](0, 0) == 0.5f);
  CHECK(out[2](0, 0) == 1.0f);
}

TEST_CASE("isgen round preserves originals bitwise at even positions") {
  Rng rng(2);
  std::vector<Image2D> in;
  for (int i = 0; i < 7; ++i) {
    Image2D s(5, 5);
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 5; ++c) s(r, c) = rng.uniform_float();
    in.push_back(std::move(s));
  }
  auto out = isgen_impute_round(in, average_synth());
  REQUIRE(out.size() == 13);
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK((out[2 * i] == in[i]).all());
  }
}

TEST_CASE("slice-count law: k rounds give 2^k (n-1) + 1 slices") {
  for (int n : {2, 3, 5, 17, 33, 64, 128, 200}) {
    std::vector<Image2D> slices;
    for (int i = 0; i < n; ++i) slices.push_back(constant_slice(static_cast<float>(i), 2));
    long expected = n;
    for (int k = 1; k <= 4; ++k) {
      slices = copy_impute_round(slices);
      expected = 2 * expected - 1;
      CHECK(static_cast<long>(slices.size()) == expected);
    }
  }
}

TEST_CASE("rounds_to_reach matches direct iteration for n in 2..200") {
  for (int n = 2; n <= 200; ++n) {
    const int k = rounds_to_reach(n, 128);
    // closed form: ceil(log2(127 / (n-1))), clamped at 0
    const int closed =
        std::max(0, static_cast<int>(std::ceil(
                        std::log2(127.0 / static_cast<double>(n - 1)))));
    CHECK(k == closed);
    long count = n;
    for (int i = 0; i < k; ++i) count = 2 * count - 1;
    CHECK(count >= 128);
    if (k > 0) {
      long prev = n;
      for (int i = 0; i + 1 < k; ++i) prev = 2 * prev - 1;
      CHECK(prev < 128);
    }
  }
}

TEST_CASE("normalize_volume reaches the target cube") {
  PhantomConfig cfg;
  cfg.shape = {33, 20, 24};
  Phantom p = make_phantom(3, cfg);
  Volume3D out = normalize_volume(p.volume, average_synth(), 128);
  CHECK(out.slices() == 128);
  CHECK(out.rows() == 128);
  CHECK(out.cols() == 128);
  CHECK(out.orientation() == Orientation::Coronal);
}

TEST_CASE("normalize_volume on many slices just selects uniformly") {
  Volume3D v(200, 16, 16, Orientation::Coronal, {1, 1, 1});
  for (int s = 0; s < 200; ++s)
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) v.at(s, r, c) = static_cast<float>(s);
  int synth_calls = 0;
  SliceSynth counting = [&](const Image2D& a, const Image2D&) {
    ++synth_calls;
    return a;
  };
  Volume3D out = normalize_volume(v, counting, 128);
  CHECK(synth_calls == 0);
  CHECK(out.slices() == 128);
  // Slice 0 keeps intensity 0, last slice keeps intensity 199.
  CHECK(out.at(0, 0, 0) == 0.0f);
  CHECK(out.at(127, 0, 0) == 199.0f);
}

TEST_CASE("normalize_volume passes a conforming volume through bitwise") {
  Rng rng(4);
  Volume3D v(128, 128, 128, Orientation::Coronal, {1, 1, 1});
  for (long i = 0; i < v.numel(); ++i) v.values()[i] = rng.uniform_float();
  Volume3D out = normalize_volume(v, average_synth(), 128);
  CHECK((out.values() == v.values()).all());
  CHECK(out.orientation() == Orientation::Coronal);
}

TEST_CASE("normalize_volume reorients non-coronal inputs") {
  PhantomConfig cfg;
  cfg.shape = {20, 24, 28};
  Phantom p = make_phantom(5, cfg);
  Volume3D axial = p.volume;
  axial.set_orientation(Orientation::Axial);
  Volume3D out = normalize_volume(axial, average_synth(), 64);
  CHECK(out.orientation() == Orientation::Coronal);
  CHECK(out.slices() == 64);
  CHECK(out.rows() == 64);
  CHECK(out.cols() == 64);
}

TEST_CASE("normalize_volume rejects single-slice volumes") {
  Volume3D v(1, 8, 8, Orientation::Coronal, {1, 1, 1});
  CHECK_THROWS_AS(normalize_volume(v, average_synth(), 128), TooFewSlices);
}

TEST_CASE("normalize_mask keeps values binary and reaches the cube") {
  PhantomConfig cfg;
  cfg.shape = {24, 20, 22};
  Phantom p = make_phantom(6, cfg);
  Mask3D out = normalize_mask(p.mask, Orientation::Coronal, 64);
  CHECK(out.slices() == 64);
  CHECK(out.rows() == 64);
  CHECK(out.cols() == 64);
  CHECK(out.count() > 0);
  for (auto v : out.values()) CHECK((v == 0 || v == 1));
}

TEST_CASE("averaging synth beats the copy imputer on a smooth phantom") {
  PhantomConfig cfg;
  cfg.shape = {32, 24, 24};
  Phantom p = make_phantom(7, cfg);
  const float peak = p.volume.values().maxCoeff();

  std::vector<double> copy_errors, avg_errors;
  // Thin out to even slices; both imputers fill the odd gap positions,
  // where the phantom has exact ground truth.
  std::vector<Image2D> thin;
  for (int s = 0; s < 32; s += 2) thin.push_back(p.volume.slice(s));
  auto copied = copy_impute_round(thin);
  auto averaged = isgen_impute_round(thin, average_synth());
  for (int gap = 0; gap < 15; ++gap) {
    const Image2D truth = p.volume.slice(2 * gap + 1);
    copy_errors.push_back(mae_0_255(copied[2 * gap + 1], truth, 0.0f, peak));
    avg_errors.push_back(mae_0_255(averaged[2 * gap + 1], truth, 0.0f, peak));
  }
  double copy_mean = 0.0, avg_mean = 0.0;
  for (std::size_t i = 0; i < copy_errors.size(); ++i) {
    copy_mean += copy_errors[i];
    avg_mean += avg_errors[i];
  }
  CHECK(avg_mean < copy_mean);
  auto cmp = paired_comparison(avg_errors, copy_errors);
  CHECK(cmp.mean_a < cmp.mean_b);
}

TEST_CASE("mae_0_255 hand cases") {
  CHECK(mae_0_255(constant_slice(7), constant_slice(7), 0.0f, 255.0f) == 0.0);
  CHECK(mae_0_255(constant_slice(0), constant_slice(255), 0.0f, 255.0f) ==
        doctest::Approx(255.0));
  CHECK(mae_0_255(constant_slice(43), constant_slice(42), 0.0f, 255.0f) ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(
      mae_0_255(constant_slice(1, 3), constant_slice(1, 4), 0.0f, 1.0f),
      ShapeMismatch);
}

TEST_CASE("paired_comparison flags identical samples as degenerate") {
  std::vector<double> a{1.0, 2.0, 3.0};
  auto r = paired_comparison(a, a);
  CHECK(r.degenerate);
  CHECK(r.p == 1.0);
  CHECK_FALSE(r.significant);

  std::vector<double> b{2.0, 3.0, 4.0};  // constant shift, zero variance
  auto r2 = paired_comparison(a, b);
  CHECK(r2.degenerate);
  CHECK(r2.p == 0.0);
  CHECK(r2.significant);
}

TEST_CASE("paired_comparison detects a strong shift") {
  Rng rng(8);
  std::vector<double> a, b;
  for (int i = 0; i < 100; ++i) {
    const double noise_a = rng.normal();
    const double noise_b = rng.normal();
    b.push_back(10.0 + noise_b);
    a.push_back(b.back() - 10.0 + noise_a);
  }
  auto r = paired_comparison(a, b);
  CHECK(r.significant);
  CHECK(r.mean_a < r.mean_b);
  CHECK(r.p < 1e-6);
}

TEST_CASE("paired_comparison p matches the t table") {
  // Ten differences, five at mean+s and five at mean-s. The sample sd is
  // s * sqrt(10/9), so t = mean * sqrt(10) / sd = 3 * mean / s; s = 3
  // gives t = mean = 2.262 at df = 9, whose two-sided p is 0.050.
  std::vector<double> a, b;
  const double mean = 2.262;
  const double s = 3.0;
  for (int i = 0; i < 10; ++i) {
    const double d = mean + ((i % 2 == 0) ? s : -s);
    a.push_back(d);
    b.push_back(0.0);
  }
  auto r = paired_comparison(a, b);
  CHECK(r.df == 9);
  CHECK(r.t == doctest::Approx(2.262).epsilon(1e-3));
  CHECK(r.p == doctest::Approx(0.050).epsilon(2e-2));
}

TEST_CASE("paired_comparison validates input lengths") {
  std::vector<double> a{1.0, 2.0};
  std::vector<double> c{1.0};
  CHECK_THROWS_AS(paired_comparison(a, c), LengthMismatch);
  CHECK_THROWS_AS(paired_comparison(c, c), LengthMismatch);
}

#include <doctest.h>

#include <array>

#include "support/testing.hpp"
#include "svg/geometry.hpp"

using namespace svg;
using namespace svg::geometry;

TEST_SUITE("iou") {
  TEST_CASE("box examples") {
    CHECK(iou_box({0, 0, 10, 10}, {0, 0, 10, 10}) == doctest::Approx(1.0));
    CHECK(iou_box({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
    CHECK(iou_box({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("degenerate boxes") {
    CHECK(iou_box({5, 5, 5, 5}, {5, 5, 5, 5}) == 1.0);
    CHECK(iou_box({5, 5, 5, 5}, {0, 0, 10, 10}) == 0.0);
    CHECK(iou_box({0, 0, 0, 10}, {0, 0, 0, 10}) == 1.0);
    CHECK(iou_box({0, 0, 0, 10}, {0, 0, 0, 11}) == 0.0);
  }

  TEST_CASE("box IoU agrees with cell counting on small integer boxes") {
    svgtest::Rng rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
      const BBox a = svgtest::random_box(rng, 12, 12), b = svgtest::random_box(rng, 12, 12);
      CHECK(iou_box(a, b) == doctest::Approx(svgtest::raster_iou(a, b)).epsilon(1e-12));
    }
  }

  TEST_CASE("symmetry, identity, translation, bounds") {
    svgtest::Rng rng(6);
    std::uniform_real_distribution<double> coord(0, 500), shift(-1000, 1000);
    for (int trial = 0; trial < 5000; ++trial) {
      auto box = [&] {
        double x1 = coord(rng), x2 = coord(rng), y1 = coord(rng), y2 = coord(rng);
        return BBox{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
      };
      const BBox a = box(), b = box();
      const double dx = shift(rng), dy = shift(rng);
      const BBox ta{a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy}, tb{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
      const double v = iou_box(a, b);
      CHECK(v == doctest::Approx(iou_box(b, a)).epsilon(1e-12));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(std::abs(iou_box(ta, tb) - v) < 1e-9);
      if (a.area() > 0) CHECK(iou_box(a, a) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("shrinking one box toward the intersection never lowers IoU") {
    svgtest::Rng rng(8);
    for (int trial = 0; trial < 2000; ++trial) {
      const BBox a = svgtest::random_box(rng, 50, 50), b = svgtest::random_box(rng, 50, 50);
      const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
      const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
      if (ix1 >= ix2 || iy1 >= iy2) continue;
      const double t = std::uniform_real_distribution<double>(0, 1)(rng);
      const BBox s{a.x1 + t * (ix1 - a.x1), a.y1 + t * (iy1 - a.y1), a.x2 + t * (ix2 - a.x2), a.y2 + t * (iy2 - a.y2)};
      CHECK(iou_box(s, b) >= iou_box(a, b) - 1e-12);
    }
  }

  TEST_CASE("mask examples") {
    const Mask left5 = Mask::from_box(10, 10, {0, 0, 5, 10});
    const Mask left8 = Mask::from_box(10, 10, {0, 0, 8, 10});
    const Mask right2 = Mask::from_box(10, 10, {8, 0, 10, 10});
    CHECK(iou_mask(left5, left5) == 1.0);
    CHECK(iou_mask(left5, right2) == 0.0);
    CHECK(iou_mask(left5, left8) == doctest::Approx(0.625));
    const Mask empty(10, 10, {100});
    CHECK(iou_mask(empty, empty) == 1.0);
    CHECK(iou_mask(empty, left5) == 0.0);
    CHECK_THROWS_AS(iou_mask(left5, Mask::from_box(10, 9, {0, 0, 5, 9})), std::invalid_argument);
  }

  TEST_CASE("mask IoU agrees with pixel counting") {
    svgtest::Rng rng(9);
    for (int trial = 0; trial < 500; ++trial) {
      const int w = svgtest::uniform(rng, 1, 9), h = svgtest::uniform(rng, 1, 9);
      std::vector<std::uint8_t> ra(std::size_t(w * h)), rb(ra.size());
      for (auto& p : ra) p = svgtest::coin(rng) ? 1 : 0;
      for (auto& p : rb) p = svgtest::coin(rng) ? 1 : 0;
      long inter = 0, uni = 0;
      for (std::size_t i = 0; i < ra.size(); ++i) {
        inter += ra[i] && rb[i];
        uni += ra[i] || rb[i];
      }
      const double expected = uni == 0 ? 1.0 : double(inter) / double(uni);
      CHECK(iou_mask(Mask::encode(w, h, ra), Mask::encode(w, h, rb)) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_SUITE("normalization") {
  TEST_CASE("examples") {
    CHECK(normalize_box({500, 250, 1500, 750}, 2000, 1000) == NormBBox{250, 250, 750, 750});
    CHECK(normalize_box({0, 0, 1000, 1000}, 1000, 1000) == NormBBox{0, 0, 1000, 1000});
    CHECK(normalize_box({0, 0, 100, 100}, 100, 100) == NormBBox{0, 0, 1000, 1000});
  }

  TEST_CASE("half rounds away from zero") {
    // 1 px of 2000 is 0.5 units.
    CHECK(normalize_box({1, 3, 5, 7}, 2000, 2000) == NormBBox{1, 2, 3, 4});
  }

  TEST_CASE("out-of-bounds boxes clamp with a warning") {
    std::vector<Diagnostic> warnings;
    CHECK(normalize_box({-10, 5, 120, 50}, 100, 100, &warnings) == NormBBox{0, 50, 1000, 500});
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].code == "box_clamped");
    warnings.clear();
    normalize_box({0, 0, 10, 10}, 100, 100, &warnings);
    CHECK(warnings.empty());
  }

  TEST_CASE("round trip within half a pixel when the image side is at most 1000") {
    svgtest::Rng rng(10);
    for (int trial = 0; trial < 5000; ++trial) {
      const int w = svgtest::uniform(rng, 1, 1000), h = svgtest::uniform(rng, 1, 1000);
      const BBox b = svgtest::random_box(rng, std::max(w, 2), std::max(h, 2));
      const BBox clipped{std::min(b.x1, double(w)), std::min(b.y1, double(h)), std::min(b.x2, double(w)),
                         std::min(b.y2, double(h))};
      const BBox back = denormalize_box(normalize_box(clipped, w, h), w, h);
      CHECK(std::abs(back.x1 - clipped.x1) <= 0.5 + 1e-9);
      CHECK(std::abs(back.y1 - clipped.y1) <= 0.5 + 1e-9);
      CHECK(std::abs(back.x2 - clipped.x2) <= 0.5 + 1e-9);
      CHECK(std::abs(back.y2 - clipped.y2) <= 0.5 + 1e-9);
    }
  }

  TEST_CASE("larger images round-trip within half a quantization step") {
    svgtest::Rng rng(12);
    for (int trial = 0; trial < 2000; ++trial) {
      const int w = svgtest::uniform(rng, 1001, 8000), h = svgtest::uniform(rng, 1001, 8000);
      const BBox b = svgtest::random_box(rng, w, h);
      const BBox back = denormalize_box(normalize_box(b, w, h), w, h);
      CHECK(std::abs(back.x1 - b.x1) <= 0.5 * w / 1000.0 + 1e-9);
      CHECK(std::abs(back.y2 - b.y2) <= 0.5 * h / 1000.0 + 1e-9);
    }
  }

  TEST_CASE("union box") { CHECK(union_box({0, 5, 10, 10}, {3, 0, 20, 8}) == BBox{0, 0, 20, 10}); }
}

TEST_SUITE("nms") {
  TEST_CASE("A, B, C example") {
    const std::vector<Candidate> c = {{{0, 0, 100, 100}, {}}, {{10, 10, 90, 90}, {}}, {{200, 200, 300, 300}, {}}};
    CHECK(iou_box(c[0].box, c[1].box) == doctest::Approx(0.64));
    CHECK(nms_by_area_indices(c, 0.6, 10) == std::vector<std::size_t>{0, 2});
  }

  TEST_CASE("single candidate and identical pair") {
    const std::vector<Candidate> one = {{{1, 1, 5, 5}, {}}};
    CHECK(nms_by_area_indices(one, 0.6, 3) == std::vector<std::size_t>{0});
    const std::vector<Candidate> twins = {{{1, 1, 5, 5}, {}}, {{1, 1, 5, 5}, {}}};
    CHECK(nms_by_area_indices(twins, 1.0, 3) == std::vector<std::size_t>{0});
    CHECK(nms_by_area(twins, 0.6, 3).size() == 1);
  }

  TEST_CASE("k truncates after suppression and output is area ordered") {
    const std::vector<Candidate> c = {{{0, 0, 2, 2}, {}}, {{10, 10, 20, 20}, {}}, {{30, 30, 35, 35}, {}}};
    CHECK(nms_by_area_indices(c, 0.6, 2) == std::vector<std::size_t>{1, 2});
    CHECK(nms_by_area_indices(c, 0.6, 1) == std::vector<std::size_t>{1});
    CHECK(nms_by_area_indices({}, 0.6, 5).empty());
  }

  TEST_CASE("masks decide area and overlap when both candidates carry one") {
    // Box areas say B is larger, mask areas say A is.
    Candidate a{{0, 0, 4, 4}, Mask::from_box(10, 10, {0, 0, 4, 4})};
    Candidate b{{0, 0, 6, 6}, Mask::from_box(10, 10, {5, 5, 6, 6})};
    CHECK(a.area() == 16.0);
    CHECK(b.area() == 1.0);
    const std::vector<Candidate> c = {b, a};
    CHECK(nms_by_area_indices(c, 0.5, 5) == std::vector<std::size_t>{1, 0});
    CHECK(candidate_iou(a, b) == 0.0);
    Candidate box_only{{0, 0, 6, 6}, std::nullopt};
    CHECK(candidate_iou(a, box_only) == doctest::Approx(16.0 / 36.0));
  }

  TEST_CASE("survivors are pairwise below threshold and match the oracle") {
    svgtest::Rng rng(13);
    for (int trial = 0; trial < 1500; ++trial) {
      const int n = svgtest::uniform(rng, 0, 8);
      std::vector<Candidate> c;
      std::vector<BBox> boxes;
      for (int i = 0; i < n; ++i) {
        boxes.push_back(svgtest::random_box(rng, 6, 6));
        c.push_back({boxes.back(), std::nullopt});
      }
      const double thr = std::array{0.3, 0.5, 0.6, 1.0}[std::size_t(svgtest::uniform(rng, 0, 3))];
      const std::size_t k = std::size_t(svgtest::uniform(rng, 1, 9));
      const auto got = nms_by_area_indices(c, thr, k);
      CHECK(got == svgtest::nms_oracle(boxes, thr, k));
      CHECK(got.size() <= k);
      for (std::size_t i = 0; i < got.size(); ++i) {
        for (std::size_t j = i + 1; j < got.size(); ++j) CHECK(iou_box(boxes[got[i]], boxes[got[j]]) < thr);
      }
    }
  }
}

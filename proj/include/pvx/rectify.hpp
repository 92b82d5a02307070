#pragma once

#include <array>
#include <span>
#include <vector>

#include "pvx/geometry.hpp"
#include "pvx/ingest.hpp"
#include "pvx/segmentation.hpp"

namespace pvx {

// Four corners; fitted quads come out ordered top-left, top-right,
// bottom-right, bottom-left.
struct Quadrilateral {
  std::array<Point2, 4> corners{};

  double perimeter() const;
  bool contains(Point2 p, double eps = 1e-9) const;
  bool convex() const;
  Box bounds() const;
};

struct Patch {
  RasterU16 pixels;
  int source_frame = 0;
  int width() const { return pixels.width(); }
  int height() const { return pixels.height(); }
};

struct QuadFitParams {
  // Merges whose new corner lies farther than this many bbox diagonals from
  // the bbox center are rejected.
  double merge_limit_factor = 1.5;
  // Hulls up to this size are searched exhaustively over all choices of four
  // edge lines; larger ones fall back to greedy edge merging.
  std::size_t exact_max_vertices = 64;
};

std::vector<Point2> convex_hull(std::vector<Point2> points);

// Convex hull of the mask's pixel squares (counter-clockwise in the
// x-right/y-up sense, i.e. clockwise on screen).
std::vector<Point2> mask_hull(const ModuleMask& mask);

double polygon_perimeter(std::span<const Point2> polygon);

// Reduction of a convex polygon to an enclosing quad with sides on hull edge
// lines and minimal perimeter. The result never has a larger perimeter than
// `bounds` (taken as a fallback).
Quadrilateral reduce_hull_to_quad(std::span<const Point2> hull, const Box& bounds, const QuadFitParams& params = {});

// Canonical corner order: by angle around the centroid, starting from the
// corner with the smallest x + y.
Quadrilateral canonical_order(const Quadrilateral& quad);

Quadrilateral fit_min_perimeter_quad_unclipped(const ModuleMask& mask, const QuadFitParams& params = {});
// Fitted quad with its corners clipped to the frame.
Quadrilateral fit_min_perimeter_quad(const ModuleMask& mask, const QuadFitParams& params = {});

// Exact projective map taking src[i] to dst[i]. Throws DegenerateConfiguration
// when three points of either set are collinear.
Homography dlt_homography(std::span<const Point2, 4> src, std::span<const Point2, 4> dst);
// Normalized least-squares DLT over n >= 4 correspondences.
Homography fit_homography(std::span<const Point2> src, std::span<const Point2> dst);

// (width, height) of the rectified patch: rounded maximum side lengths.
std::pair<int, int> patch_size(const Quadrilateral& quad);
Patch warp_patch(const Frame& frame, const Quadrilateral& quad);

// Bilinear sample of the raster at continuous coordinates (pixel centers at +0.5).
double sample_bilinear(const RasterU16& raster, double x, double y);

// IoU between the mask and the quad rasterized at pixel centers.
double iou_quad_mask(const ModuleMask& mask, const Quadrilateral& quad);

struct QuadCheck {
  Quadrilateral quad;
  double iou = 0.0;
  bool accepted = false;
};

// Fits, clips and applies the IoU acceptance test (reject iff IoU < iou_min).
QuadCheck check_mask(const ModuleMask& mask, double iou_min = 0.9, const QuadFitParams& params = {});

}  // namespace pvx

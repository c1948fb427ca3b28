#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occgeom/grid.hpp"

namespace occgeom {

struct ClassCounts {
  std::int64_t tp{0};
  std::int64_t fp{0};
  std::int64_t fn{0};

  /// TP / (TP + FP + FN); empty when the denominator is zero.
  std::optional<double> iou() const;
};

struct EvalResult {
  ClassCounts occupancy;                          // any non-free label counts as occupied
  std::optional<double> iou;
  std::vector<ClassCounts> counts;                // K semantic classes
  std::vector<std::optional<double>> per_class_iou;
  std::optional<double> miou;                     // mean over classes with a defined IoU
  std::int64_t evaluated_voxels{0};
};

using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Entry (g, p) counts evaluated voxels with ground truth g and prediction p.
/// `visible` (empty = all) excludes voxels where it is 0.
ConfusionMatrix confusion(const SemanticOccupancy& pred, const SemanticOccupancy& gt,
                          std::span<const std::uint8_t> visible = {});

EvalResult evaluate(const SemanticOccupancy& pred, const SemanticOccupancy& gt,
                    std::span<const std::uint8_t> visible = {});

EvalResult evaluate_from_confusion(const ConfusionMatrix& m);

/// class,name,TP,FP,FN,IoU rows for every semantic class, then occupancy
/// and mIoU summary rows. Undefined IoUs are written as "nan".
std::string metrics_csv(const EvalResult& r, const std::vector<std::string>& class_names);

}  // namespace occgeom

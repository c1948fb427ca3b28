#include "occgeom/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace occgeom {

namespace {

std::string shape_string(const VoxelGridSpec& s) {
  return "(" + std::to_string(s.dims[0]) + ", " + std::to_string(s.dims[1]) + ", " + std::to_string(s.dims[2]) + ")";
}

void check_pair(const SemanticOccupancy& pred, const SemanticOccupancy& gt, std::span<const std::uint8_t> visible) {
  if (pred.spec.dims != gt.spec.dims)
    throw DimensionError("prediction grid " + shape_string(pred.spec) + " does not match ground truth " +
                         shape_string(gt.spec));
  if (pred.num_classes != gt.num_classes)
    throw DimensionError("prediction has " + std::to_string(pred.num_classes) + " classes, ground truth " +
                         std::to_string(gt.num_classes));
  const auto n = static_cast<std::size_t>(gt.spec.num_voxels());
  if (pred.labels.size() != n || gt.labels.size() != n) throw DimensionError("label arrays do not match the grid");
  if (!visible.empty() && visible.size() != n) throw DimensionError("visibility mask does not match the grid");
  for (std::size_t i = 0; i < n; ++i)
    if (pred.labels[i] > gt.num_classes || gt.labels[i] > gt.num_classes)
      throw DomainError("label outside 0.." + std::to_string(gt.num_classes));
}

std::string format_iou(const std::optional<double>& v) {
  if (!v) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

}  // namespace

std::optional<double> ClassCounts::iou() const {
  const std::int64_t denom = tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

ConfusionMatrix confusion(const SemanticOccupancy& pred, const SemanticOccupancy& gt,
                          std::span<const std::uint8_t> visible) {
  check_pair(pred, gt, visible);
  const int k1 = gt.num_classes + 1;
  ConfusionMatrix m = ConfusionMatrix::Zero(k1, k1);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (!visible.empty() && !visible[i]) continue;
    ++m(gt.labels[i], pred.labels[i]);
  }
  return m;
}

EvalResult evaluate_from_confusion(const ConfusionMatrix& m) {
  const Index k = m.rows() - 1;
  EvalResult r;
  r.evaluated_voxels = m.sum();
  // Free is the last row/column and the negative class for occupancy.
  r.occupancy.tp = m.topLeftCorner(k, k).sum();
  r.occupancy.fp = m.row(k).head(k).sum();
  r.occupancy.fn = m.col(k).head(k).sum();
  r.iou = r.occupancy.iou();
  double sum = 0.0;
  int defined = 0;
  for (Index c = 0; c < k; ++c) {
    ClassCounts cc;
    cc.tp = m(c, c);
    cc.fp = m.col(c).sum() - m(c, c);
    cc.fn = m.row(c).sum() - m(c, c);
    r.counts.push_back(cc);
    r.per_class_iou.push_back(cc.iou());
    if (r.per_class_iou.back()) {
      sum += *r.per_class_iou.back();
      ++defined;
    }
  }
  if (defined > 0) r.miou = sum / defined;
  return r;
}

EvalResult evaluate(const SemanticOccupancy& pred, const SemanticOccupancy& gt,
                    std::span<const std::uint8_t> visible) {
  return evaluate_from_confusion(confusion(pred, gt, visible));
}

std::string metrics_csv(const EvalResult& r, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "class,name,TP,FP,FN,IoU\n";
  for (std::size_t c = 0; c < r.counts.size(); ++c) {
    const auto& cc = r.counts[c];
    const std::string name = c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    os << c << ',' << name << ',' << cc.tp << ',' << cc.fp << ',' << cc.fn << ',' << format_iou(r.per_class_iou[c])
       << '\n';
  }
  os << "occupancy,IoU," << r.occupancy.tp << ',' << r.occupancy.fp << ',' << r.occupancy.fn << ','
     << format_iou(r.iou) << '\n';
  os << "mean,mIoU,,,," << format_iou(r.miou) << '\n';
  return os.str();
}

}  // namespace occgeom

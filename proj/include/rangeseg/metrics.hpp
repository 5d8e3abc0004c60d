#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rangeseg/error.hpp"

namespace rangeseg {

/// K x K integer counts; rows are ground truth, columns are prediction.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_classes)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const {
    return counts_[gt * k_ + pred];
  }
  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * k_ + pred]; }
  std::uint64_t ignored() const { return ignored_; }
  std::uint64_t total() const;

  /// Accumulate one (pred, gt) pair list. Points whose ground truth is the
  /// ignore id are counted separately and never scored.
  void accumulate(const std::vector<std::uint32_t>& pred,
                  const std::vector<std::uint32_t>& gt, std::uint32_t ignore_id);

  void accumulate_one(std::uint32_t pred, std::uint32_t gt, std::uint32_t ignore_id);

  /// Additive merge of two matrices over the same class set.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t ignored_ = 0;
};

/// Per-class score; classes with a zero denominator carry no value.
struct ClassScores {
  std::vector<std::optional<double>> per_class;
  double mean = 0;              // over present classes (or all, see zero_absent)
  std::size_t present_count = 0;
};

/// IoU_c = TP / (TP + FP + FN). With zero_absent, absent classes score 0 and
/// the mean runs over all classes (benchmark convention); otherwise absent
/// classes are excluded from the mean.
ClassScores iou(const ConfusionMatrix& cm, bool zero_absent = false);

/// Acc_c = TP / (TP + FN).
ClassScores acc(const ConfusionMatrix& cm, bool zero_absent = false);

struct RangeBin {
  double lo = 0;
  double hi = 0;
  ConfusionMatrix cm;
  std::optional<double> miou;  // empty when no class is present in the bin
};

/// Uniform edges from 0 to max_range in steps of `step` (default 0..50 by 5).
std::vector<double> default_bin_edges(double max_range = 50.0, double step = 5.0);

/// Partition points by range into [edge_i, edge_{i+1}) bins and score each bin
/// independently. Points outside [edges.front(), edges.back()) are dropped.
std::vector<RangeBin> range_binned_miou(const std::vector<std::uint32_t>& pred,
                                        const std::vector<std::uint32_t>& gt,
                                        const std::vector<float>& ranges,
                                        const std::vector<double>& bin_edges,
                                        std::size_t num_classes, std::uint32_t ignore_id,
                                        bool zero_absent = false);

}  // namespace rangeseg

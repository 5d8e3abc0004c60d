#include "rangeseg/metrics.hpp"

#include <algorithm>

namespace rangeseg {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t sum = ignored_;
  for (std::uint64_t c : counts_) sum += c;
  return sum;
}

void ConfusionMatrix::accumulate(const std::vector<std::uint32_t>& pred,
                                 const std::vector<std::uint32_t>& gt,
                                 std::uint32_t ignore_id) {
  if (pred.size() != gt.size()) {
    throw DimensionError("accumulate: " + std::to_string(pred.size()) +
                         " predictions vs " + std::to_string(gt.size()) + " labels");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    try {
      accumulate_one(pred[i], gt[i], ignore_id);
    } catch (const ValueError& e) {
      throw ValueError(std::string(e.what()) + " at index " + std::to_string(i));
    }
  }
}

void ConfusionMatrix::accumulate_one(std::uint32_t pred, std::uint32_t gt,
                                     std::uint32_t ignore_id) {
  if (gt == ignore_id) {
    ++ignored_;
    return;
  }
  if (gt >= k_) {
    throw ValueError("accumulate: ground-truth id " + std::to_string(gt) + " out of range");
  }
  if (pred >= k_) {
    throw ValueError("accumulate: predicted id " + std::to_string(pred) + " out of range");
  }
  ++counts_[gt * k_ + pred];
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) {
    throw DimensionError("confusion matrix merge: " + std::to_string(k_) + " vs " +
                         std::to_string(other.k_) + " classes");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
  return *this;
}

namespace {

ClassScores scores_from(const ConfusionMatrix& cm, bool zero_absent, bool want_iou) {
  const std::size_t k = cm.num_classes();
  std::vector<std::uint64_t> row(k, 0), col(k, 0);
  for (std::size_t g = 0; g < k; ++g) {
    for (std::size_t p = 0; p < k; ++p) {
      row[g] += cm.at(g, p);
      col[p] += cm.at(g, p);
    }
  }
  ClassScores out;
  out.per_class.resize(k);
  double sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t denom = want_iou ? row[c] + col[c] - tp : row[c];
    if (denom > 0) {
      const double v = static_cast<double>(tp) / static_cast<double>(denom);
      out.per_class[c] = v;
      sum += v;
      ++out.present_count;
    }
  }
  const std::size_t divisor = zero_absent ? k : out.present_count;
  out.mean = divisor > 0 ? sum / static_cast<double>(divisor) : 0.0;
  return out;
}

}  // namespace

ClassScores iou(const ConfusionMatrix& cm, bool zero_absent) {
  return scores_from(cm, zero_absent, true);
}

ClassScores acc(const ConfusionMatrix& cm, bool zero_absent) {
  return scores_from(cm, zero_absent, false);
}

std::vector<double> default_bin_edges(double max_range, double step) {
  std::vector<double> edges;
  for (double e = 0.0; e <= max_range + 1e-9; e += step) edges.push_back(e);
  return edges;
}

std::vector<RangeBin> range_binned_miou(const std::vector<std::uint32_t>& pred,
                                        const std::vector<std::uint32_t>& gt,
                                        const std::vector<float>& ranges,
                                        const std::vector<double>& bin_edges,
                                        std::size_t num_classes, std::uint32_t ignore_id,
                                        bool zero_absent) {
  if (pred.size() != gt.size() || pred.size() != ranges.size()) {
    throw DimensionError("range_binned_miou: input lengths differ");
  }
  if (bin_edges.size() < 2) {
    throw ConfigError("range_binned_miou: need at least two bin edges");
  }
  for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i) {
    if (!(bin_edges[i] < bin_edges[i + 1])) {
      throw ConfigError("range_binned_miou: bin edges must be strictly increasing");
    }
  }
  std::vector<RangeBin> bins(bin_edges.size() - 1);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lo = bin_edges[b];
    bins[b].hi = bin_edges[b + 1];
    bins[b].cm = ConfusionMatrix(num_classes);
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = ranges[i];
    if (r < bin_edges.front() || r >= bin_edges.back()) continue;
    const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), r);
    const std::size_t b = static_cast<std::size_t>(it - bin_edges.begin()) - 1;
    bins[b].cm.accumulate_one(pred[i], gt[i], ignore_id);
  }
  for (RangeBin& bin : bins) {
    const ClassScores s = iou(bin.cm, zero_absent);
    if (s.present_count > 0) bin.miou = s.mean;
  }
  return bins;
}

}  // namespace rangeseg

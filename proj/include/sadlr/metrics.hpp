#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sadlr/mask.hpp"

namespace sadlr {

/// Pixel counts for one prediction / ground-truth pair.
struct IouCounts {
    std::int64_t intersection = 0;
    std::int64_t union_ = 0;
    double iou = 1.0;
};

inline constexpr std::array<double, 5> kPrecisionThresholds{0.5, 0.6, 0.7, 0.8, 0.9};

/// Empty prediction against empty ground truth counts as IoU 1.
IouCounts iou(const BinaryMask& pred, const BinaryMask& gt);

/// Percentage of ious strictly above k.
double precision_at_k(std::span<const double> ious, double k);
double mean_iou(std::span<const IouCounts> samples);
/// Accumulated intersection over accumulated union; 1 when every union is empty.
double overall_iou(std::span<const IouCounts> samples);

struct MetricReport {
    std::array<double, 5> p_at_k{};
    double mean_iou = 0.0;
    double overall_iou = 0.0;
    std::int64_t intersection = 0;
    std::int64_t union_ = 0;
    std::int64_t count = 0;
};

/// Mergeable running totals; the report depends only on the multiset of
/// samples added.
class MetricAccumulator {
  public:
    void add(const IouCounts& sample);
    void add(const BinaryMask& pred, const BinaryMask& gt) { add(iou(pred, gt)); }
    void merge(const MetricAccumulator& other);
    std::int64_t count() const { return count_; }
    /// Throws ContractError when nothing has been added.
    MetricReport report() const;

  private:
    std::int64_t count_ = 0;
    std::array<std::int64_t, 5> passed_{};
    std::int64_t intersection_ = 0;
    std::int64_t union_ = 0;
    double iou_sum_ = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricReport& report);
std::string metrics_json(const MetricReport& report);

} // namespace sadlr

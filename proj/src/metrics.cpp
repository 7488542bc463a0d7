#include "sadlr/metrics.hpp"

#include <cstdio>
#include <json.hpp>

#include "sadlr/errors.hpp"

namespace sadlr {

IouCounts iou(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw ShapeError("iou: prediction " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                         " vs ground truth " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
    }
    IouCounts out;
    const auto p = pred.bits();
    const auto g = gt.bits();
    for (std::size_t i = 0; i < p.size(); ++i) {
        out.intersection += p[i] & g[i];
        out.union_ += p[i] | g[i];
    }
    out.iou = out.union_ == 0 ? 1.0 : static_cast<double>(out.intersection) / static_cast<double>(out.union_);
    return out;
}

double precision_at_k(std::span<const double> ious, double k) {
    if (ious.empty()) {
        throw ContractError("precision_at_k: no samples");
    }
    if (!(k > 0.0 && k < 1.0)) {
        throw ContractError("precision_at_k: threshold must lie in (0, 1)");
    }
    std::size_t passed = 0;
    for (double v : ious) {
        passed += v > k ? 1 : 0;
    }
    return 100.0 * static_cast<double>(passed) / static_cast<double>(ious.size());
}

double mean_iou(std::span<const IouCounts> samples) {
    if (samples.empty()) {
        throw ContractError("mean_iou: no samples");
    }
    double total = 0.0;
    for (const auto& s : samples) {
        total += s.iou;
    }
    return total / static_cast<double>(samples.size());
}

double overall_iou(std::span<const IouCounts> samples) {
    if (samples.empty()) {
        throw ContractError("overall_iou: no samples");
    }
    std::int64_t inter = 0;
    std::int64_t uni = 0;
    for (const auto& s : samples) {
        inter += s.intersection;
        uni += s.union_;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void MetricAccumulator::add(const IouCounts& sample) {
    ++count_;
    for (std::size_t k = 0; k < kPrecisionThresholds.size(); ++k) {
        passed_[k] += sample.iou > kPrecisionThresholds[k] ? 1 : 0;
    }
    intersection_ += sample.intersection;
    union_ += sample.union_;
    iou_sum_ += sample.iou;
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
    count_ += other.count_;
    for (std::size_t k = 0; k < passed_.size(); ++k) {
        passed_[k] += other.passed_[k];
    }
    intersection_ += other.intersection_;
    union_ += other.union_;
    iou_sum_ += other.iou_sum_;
}

MetricReport MetricAccumulator::report() const {
    if (count_ == 0) {
        throw ContractError("metric report requested with no samples");
    }
    MetricReport out;
    for (std::size_t k = 0; k < passed_.size(); ++k) {
        out.p_at_k[k] = 100.0 * static_cast<double>(passed_[k]) / static_cast<double>(count_);
    }
    out.mean_iou = iou_sum_ / static_cast<double>(count_);
    out.overall_iou = union_ == 0 ? 1.0 : static_cast<double>(intersection_) / static_cast<double>(union_);
    out.intersection = intersection_;
    out.union_ = union_;
    out.count = count_;
    return out;
}

std::string metrics_csv_header() { return "p50,p60,p70,p80,p90,oiou,miou"; }

std::string metrics_csv_row(const MetricReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f,%.4f,%.6f,%.6f", r.p_at_k[0], r.p_at_k[1], r.p_at_k[2],
                  r.p_at_k[3], r.p_at_k[4], r.overall_iou, r.mean_iou);
    return buf;
}

std::string metrics_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["p50"] = r.p_at_k[0];
    j["p60"] = r.p_at_k[1];
    j["p70"] = r.p_at_k[2];
    j["p80"] = r.p_at_k[3];
    j["p90"] = r.p_at_k[4];
    j["oiou"] = r.overall_iou;
    j["miou"] = r.mean_iou;
    j["intersection"] = r.intersection;
    j["union"] = r.union_;
    j["count"] = r.count;
    return j.dump();
}

} // namespace sadlr

#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "recognet/volume.hpp"

namespace recognet {

struct ConfusionCounts {
    uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    uint64_t total() const { return tp + fp + fn + tn; }
};

inline ConfusionCounts confusion_counts(const MaskVolume& pred, const MaskVolume& gt) {
    if (pred.slices != gt.slices || pred.height != gt.height || pred.width != gt.width)
        throw DataError("confusion_counts: mask dims differ, " + std::to_string(pred.slices) + "x" +
                        std::to_string(pred.height) + "x" + std::to_string(pred.width) + " vs " +
                        std::to_string(gt.slices) + "x" + std::to_string(gt.height) + "x" +
                        std::to_string(gt.width));
    ConfusionCounts c;
    for (size_t i = 0; i < pred.voxels.size(); ++i) {
        const bool p = pred.voxels[i] != 0;
        const bool g = gt.voxels[i] != 0;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

struct MetricSet {
    std::string case_id;
    double precision = 0, recall = 0, f1 = 0, iou = 0, dsc = 0;
    std::vector<double> size_profile;  // predicted per-slice relative areas
};

// Degenerate-case conventions: empty-vs-empty counts as perfect agreement
// (1.0), empty-vs-nonempty as zero. Never NaN.
namespace detail {

inline double safe_ratio(uint64_t num, uint64_t den, bool other_empty) {
    if (den > 0) return static_cast<double>(num) / static_cast<double>(den);
    return other_empty ? 1.0 : 0.0;
}

}  // namespace detail

// Precision/recall/F1/IoU from volume-aggregated counts; DSC computed
// per slice (2TP / (2TP+FP+FN)) and averaged over slices where prediction or
// reference is nonempty.
inline MetricSet volume_metrics(const MaskVolume& pred, const MaskVolume& gt) {
    const ConfusionCounts c = confusion_counts(pred, gt);
    MetricSet m;
    m.case_id = gt.case_id.empty() ? pred.case_id : gt.case_id;
    m.precision = detail::safe_ratio(c.tp, c.tp + c.fp, c.tp + c.fn == 0);
    m.recall = detail::safe_ratio(c.tp, c.tp + c.fn, c.tp + c.fp == 0);
    // 2TP/(2TP+FP+FN) is the harmonic mean of precision and recall computed
    // directly from counts, so the slice-level f1 == dsc identity is exact.
    m.f1 = c.tp + c.fp + c.fn > 0
               ? 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn)
               : 1.0;
    m.iou = c.tp + c.fp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp + c.fn) : 1.0;

    const int64_t plane = int64_t(pred.height) * pred.width;
    double dsc_sum = 0.0;
    int dsc_slices = 0;
    for (int s = 0; s < pred.slices; ++s) {
        uint64_t tp = 0, fp = 0, fn = 0;
        const uint8_t* ps = pred.slice(s);
        const uint8_t* gs = gt.slice(s);
        for (int64_t i = 0; i < plane; ++i) {
            const bool p = ps[i] != 0, g = gs[i] != 0;
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
        }
        const uint64_t den = 2 * tp + fp + fn;
        if (den == 0) continue;  // empty/empty slice, excluded from the average
        dsc_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(den);
        ++dsc_slices;
    }
    m.dsc = dsc_slices > 0 ? dsc_sum / dsc_slices : 1.0;

    m.size_profile.resize(pred.slices);
    for (int s = 0; s < pred.slices; ++s) {
        uint64_t fg = 0;
        const uint8_t* ps = pred.slice(s);
        for (int64_t i = 0; i < plane; ++i) fg += ps[i] != 0;
        m.size_profile[s] = static_cast<double>(fg) / static_cast<double>(plane);
    }
    return m;
}

// Per-slice foreground fraction (normalized by slice area).
inline std::vector<double> size_profile(const MaskVolume& mask) {
    const int64_t plane = int64_t(mask.height) * mask.width;
    std::vector<double> prof(mask.slices);
    for (int s = 0; s < mask.slices; ++s) {
        uint64_t fg = 0;
        const uint8_t* ps = mask.slice(s);
        for (int64_t i = 0; i < plane; ++i) fg += ps[i] != 0;
        prof[s] = static_cast<double>(fg) / static_cast<double>(plane);
    }
    return prof;
}

inline MetricSet aggregate_mean(const std::vector<MetricSet>& per_volume) {
    if (per_volume.empty()) throw std::invalid_argument("aggregate_mean: empty metric list");
    MetricSet m;
    m.case_id = "MEAN";
    for (const auto& v : per_volume) {
        m.precision += v.precision;
        m.recall += v.recall;
        m.f1 += v.f1;
        m.iou += v.iou;
        m.dsc += v.dsc;
    }
    const double n = static_cast<double>(per_volume.size());
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    m.iou /= n;
    m.dsc /= n;
    return m;
}

namespace detail {

inline std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

// CSV schema: case,precision,recall,f1,iou,dsc with a MEAN footer row.
inline std::string metrics_csv(const std::vector<MetricSet>& per_volume) {
    std::ostringstream os;
    os << "case,precision,recall,f1,iou,dsc\n";
    auto row = [&os](const MetricSet& m) {
        os << m.case_id << ',' << detail::fmt6(m.precision) << ',' << detail::fmt6(m.recall) << ','
           << detail::fmt6(m.f1) << ',' << detail::fmt6(m.iou) << ',' << detail::fmt6(m.dsc) << '\n';
    };
    for (const auto& m : per_volume) row(m);
    row(aggregate_mean(per_volume));
    return os.str();
}

// Aligned text table in report column order (precision, recall, F1, DSC,
// with IoU appended).
inline std::string metrics_table(const std::vector<MetricSet>& per_volume) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %9s %9s %9s %9s %9s\n", "case", "precision", "recall",
                  "f1", "dsc", "iou");
    os << buf;
    auto row = [&](const MetricSet& m) {
        std::snprintf(buf, sizeof buf, "%-16s %9.4f %9.4f %9.4f %9.4f %9.4f\n", m.case_id.c_str(),
                      m.precision, m.recall, m.f1, m.dsc, m.iou);
        os << buf;
    };
    for (const auto& m : per_volume) row(m);
    row(aggregate_mean(per_volume));
    return os.str();
}

struct ProfileRecord {
    std::string case_id;
    std::vector<double> gt;
    std::vector<double> pred;
};

// CSV schema: case,slice,gt_rel_size,pred_rel_size (slice is 1-based).
inline std::string profiles_csv(const std::vector<ProfileRecord>& records) {
    std::ostringstream os;
    os << "case,slice,gt_rel_size,pred_rel_size\n";
    for (const auto& r : records)
        for (size_t s = 0; s < r.gt.size(); ++s)
            os << r.case_id << ',' << (s + 1) << ',' << detail::fmt6(r.gt[s]) << ','
               << detail::fmt6(s < r.pred.size() ? r.pred[s] : 0.0) << '\n';
    return os.str();
}

}  // namespace recognet

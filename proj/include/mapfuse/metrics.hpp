#pragma once

#include <cstdint>
#include <vector>

#include "mapfuse/raster.hpp"

namespace mapfuse {

struct ClassCounts {
    int64_t intersection = 0;
    int64_t union_ = 0;
};

struct MetricsReport {
    double bc = 0.0;
    double sc = 0.0;
    double scs = 0.0;
    double miou = 0.0;
    int64_t bc_intersection = 0;
    int64_t bc_union = 0;
    std::vector<ClassCounts> sc_per_class;
    std::vector<ClassCounts> miou_per_class;
    int sc_counted_classes = 0;
    int miou_counted_classes = 0;
    bool sc_vacuous = false;  // no class had positive union on changed pixels
};

// Pooled integer counting; ratios are formed once at report time, so merging
// across samples stays exact.
class MetricsAccumulator {
public:
    explicit MetricsAccumulator(int num_classes = 0) : num_classes_(num_classes) {
        sc_.resize(num_classes);
        miou_.resize(num_classes);
    }

    void add_binary(const ChangeMask& truth, const ChangeMask& pred) {
        if (truth.height != pred.height || truth.width != pred.width)
            throw DataError("binary IoU: mask size mismatch");
        for (size_t i = 0; i < truth.values.size(); ++i) {
            const bool t = truth.values[i], p = pred.values[i];
            bc_inter_ += t && p;
            bc_union_ += t || p;
        }
    }

    void add_semantic(const SemanticMap& truth, const SemanticMap& pred, const ChangeMask& change) {
        if (truth.height != pred.height || truth.width != pred.width ||
            truth.height != change.height || truth.width != change.width)
            throw DataError("semantic metrics: raster size mismatch");
        if (truth.num_classes != pred.num_classes || truth.num_classes != num_classes_)
            throw DataError("semantic metrics: class set mismatch");
        for (size_t i = 0; i < truth.labels.size(); ++i) {
            const int t = truth.labels[i], p = pred.labels[i];
            if (t == p) {
                ++miou_[t].intersection;
                ++miou_[t].union_;
            } else {
                ++miou_[t].union_;
                ++miou_[p].union_;
            }
            if (change.values[i]) {
                if (t == p) {
                    ++sc_[t].intersection;
                    ++sc_[t].union_;
                } else {
                    ++sc_[t].union_;
                    ++sc_[p].union_;
                }
            }
        }
        has_semantic_ = true;
    }

    MetricsReport report() const {
        MetricsReport r;
        r.bc_intersection = bc_inter_;
        r.bc_union = bc_union_;
        // Both-empty masks agree perfectly.
        r.bc = bc_union_ == 0 ? 1.0 : static_cast<double>(bc_inter_) / bc_union_;
        r.sc_per_class = sc_;
        r.miou_per_class = miou_;
        double sc_sum = 0.0, miou_sum = 0.0;
        for (int c = 0; c < num_classes_; ++c) {
            if (sc_[c].union_ > 0) {
                sc_sum += static_cast<double>(sc_[c].intersection) / sc_[c].union_;
                ++r.sc_counted_classes;
            }
            if (miou_[c].union_ > 0) {
                miou_sum += static_cast<double>(miou_[c].intersection) / miou_[c].union_;
                ++r.miou_counted_classes;
            }
        }
        r.sc_vacuous = r.sc_counted_classes == 0;
        r.sc = r.sc_vacuous ? 1.0 : sc_sum / r.sc_counted_classes;
        r.miou = r.miou_counted_classes == 0 ? 1.0 : miou_sum / r.miou_counted_classes;
        r.scs = 0.5 * (r.bc + r.sc);
        return r;
    }

    bool has_semantic() const { return has_semantic_; }
    int num_classes() const { return num_classes_; }

private:
    int num_classes_;
    int64_t bc_inter_ = 0, bc_union_ = 0;
    std::vector<ClassCounts> sc_, miou_;
    bool has_semantic_ = false;
};

inline double binary_change_iou(const ChangeMask& truth, const ChangeMask& pred) {
    MetricsAccumulator acc(2);
    acc.add_binary(truth, pred);
    return acc.report().bc;
}

inline double semantic_change_score(const SemanticMap& truth, const SemanticMap& pred,
                                    const ChangeMask& change) {
    MetricsAccumulator acc(truth.num_classes);
    acc.add_semantic(truth, pred, change);
    return acc.report().sc;
}

inline double scs(double bc, double sc) { return 0.5 * (bc + sc); }

inline double miou(const SemanticMap& truth, const SemanticMap& pred) {
    MetricsAccumulator acc(truth.num_classes);
    ChangeMask all;
    all.height = truth.height;
    all.width = truth.width;
    all.values.assign(truth.labels.size(), 0);
    acc.add_semantic(truth, pred, all);
    return acc.report().miou;
}

}  // namespace mapfuse

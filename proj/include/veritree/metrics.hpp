#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace veritree {

/// Classification metrics over a confusion matrix indexed [actual][predicted].
struct MetricsReport {
    struct PerClass {
        double precision = 0.0;
        double recall = 0.0;
        double f1 = 0.0;
    };

    std::vector<std::vector<std::size_t>> confusion;
    double accuracy = 0.0;
    std::vector<PerClass> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;

    std::size_t total() const;

    /// Derive all metrics from counts. Precision/recall default to 0 when
    /// their denominator is empty; F1 = 2PR/(P+R) when P+R > 0, else 0.
    static MetricsReport from_confusion(std::vector<std::vector<std::size_t>> counts);

    std::string to_json(const std::vector<std::string>& class_names) const;
};

}  // namespace veritree

#include "veritree/metrics.hpp"

#include "json.hpp"
#include "veritree/errors.hpp"

namespace veritree {

std::size_t MetricsReport::total() const {
    std::size_t n = 0;
    for (const auto& row : confusion)
        for (auto v : row) n += v;
    return n;
}

MetricsReport MetricsReport::from_confusion(std::vector<std::vector<std::size_t>> counts) {
    const std::size_t k = counts.size();
    for (const auto& row : counts)
        if (row.size() != k) throw ShapeError("confusion matrix must be square");

    MetricsReport r;
    r.confusion = std::move(counts);

    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < k; ++i) {
        correct += r.confusion[i][i];
        for (std::size_t j = 0; j < k; ++j) total += r.confusion[i][j];
    }
    r.accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);

    r.per_class.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t predicted = 0, actual = 0;
        for (std::size_t i = 0; i < k; ++i) {
            predicted += r.confusion[i][c];
            actual += r.confusion[c][i];
        }
        const double tp = static_cast<double>(r.confusion[c][c]);
        auto& pc = r.per_class[c];
        pc.precision = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
        pc.recall = actual == 0 ? 0.0 : tp / static_cast<double>(actual);
        pc.f1 = (pc.precision + pc.recall) > 0.0
                    ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                    : 0.0;
        r.macro_precision += pc.precision;
        r.macro_recall += pc.recall;
        r.macro_f1 += pc.f1;
    }
    if (k > 0) {
        r.macro_precision /= static_cast<double>(k);
        r.macro_recall /= static_cast<double>(k);
        r.macro_f1 /= static_cast<double>(k);
    }
    return r;
}

std::string MetricsReport::to_json(const std::vector<std::string>& class_names) const {
    nlohmann::json j;
    j["accuracy"] = accuracy;
    j["macro"] = {{"precision", macro_precision}, {"recall", macro_recall}, {"f1", macro_f1}};
    j["classes"] = nlohmann::json::object();
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
        j["classes"][name] = {{"precision", per_class[c].precision},
                              {"recall", per_class[c].recall},
                              {"f1", per_class[c].f1}};
    }
    j["confusion"] = confusion;
    j["total"] = total();
    return j.dump();
}

}  // namespace veritree

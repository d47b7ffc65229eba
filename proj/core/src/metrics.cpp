#include "dcls/metrics.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "dcls/common.hpp"

namespace dcls {

Metrics metrics_from_confusion(const std::vector<std::vector<int64_t>>& confusion) {
    const size_t m = confusion.size();
    if (m == 0) throw ConfigError("empty confusion matrix");
    for (const auto& row : confusion)
        if (row.size() != m) throw ConfigError("confusion matrix must be square");

    Metrics out;
    out.confusion = confusion;
    out.per_class.resize(m);
    int64_t total = 0, diag = 0;
    double f1_sum = 0.0;
    for (size_t c = 0; c < m; ++c) {
        int64_t tp = confusion[c][c];
        int64_t fp = 0, fn = 0;
        for (size_t r = 0; r < m; ++r) {
            total += confusion[c][r];
            if (r != c) {
                fn += confusion[c][r];
                fp += confusion[r][c];
            }
        }
        diag += tp;
        auto& pc = out.per_class[c];
        pc.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        pc.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        pc.f1 = (pc.precision + pc.recall) > 0.0
                    ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                    : 0.0;
        f1_sum += pc.f1;
    }
    if (total == 0) throw ConfigError("confusion matrix has no counts");
    out.accuracy = static_cast<double>(diag) / total;
    out.macro_f1 = f1_sum / static_cast<double>(m);
    return out;
}

Metrics evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                             int num_classes) {
    if (truth.empty() || truth.size() != predicted.size())
        throw ConfigError("truth/prediction size mismatch");
    std::vector<std::vector<int64_t>> conf(num_classes, std::vector<int64_t>(num_classes, 0));
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
            predicted[i] >= num_classes)
            throw ConfigError("class id out of range in evaluation");
        conf[truth[i]][predicted[i]] += 1;
    }
    return metrics_from_confusion(conf);
}

int predict_class(const EncoderModel& model, const TokenizedSample& sample) {
    ForwardTrace trace = forward(model, sample.ids, ForwardMode::classify);
    return static_cast<int>(std::max_element(trace.class_logits.begin(),
                                             trace.class_logits.end()) -
                            trace.class_logits.begin());
}

Metrics evaluate(const EncoderModel& model, const std::vector<TokenizedSample>& test) {
    if (test.empty()) throw ConfigError("empty test set");
    std::vector<int> truth, pred;
    truth.reserve(test.size());
    pred.reserve(test.size());
    for (const auto& s : test) {
        truth.push_back(s.label_id);
        pred.push_back(predict_class(model, s));
    }
    return evaluate_predictions(truth, pred, model.config.num_classes);
}

std::string Metrics::to_json() const {
    nlohmann::json j;
    j["accuracy"] = accuracy;
    j["macro_f1"] = macro_f1;
    nlohmann::json pc = nlohmann::json::array();
    for (const auto& c : per_class)
        pc.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}});
    j["per_class"] = pc;
    j["confusion"] = confusion;
    return j.dump();
}

} // namespace dcls

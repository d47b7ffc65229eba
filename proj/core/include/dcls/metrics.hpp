#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcls/corpus.hpp"
#include "dcls/encoder.hpp"

namespace dcls {

struct Metrics {
    struct PerClass {
        double precision = 0.0;
        double recall = 0.0;
        double f1 = 0.0;
    };
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    std::vector<PerClass> per_class;
    std::vector<std::vector<int64_t>> confusion; // [truth][pred]

    std::string to_json() const; // deterministic serialization
};

// Confusion counts -> precision/recall/F1 per class (0 conventions for empty
// denominators), macro-F1 as the unweighted mean, accuracy as trace/total.
Metrics metrics_from_confusion(const std::vector<std::vector<int64_t>>& confusion);

// Metrics of argmax predictions vs truth; labels are class ids in [0, m).
Metrics evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                             int num_classes);

// Argmax predictions of the model over a test set.
Metrics evaluate(const EncoderModel& model, const std::vector<TokenizedSample>& test);

int predict_class(const EncoderModel& model, const TokenizedSample& sample);

} // namespace dcls

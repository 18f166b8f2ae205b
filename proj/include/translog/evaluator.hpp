/*
 * Copyright (c) 2026 the translog authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "translog/common.hpp"

namespace translog {

/// Session-level confusion counts and the derived precision/recall/F1.
/// Degenerate denominators (no positive predictions, no positive labels)
/// yield 0 with an explicit flag instead of failing mid-evaluation.
struct EvalReport {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    double threshold = 0.5;
    bool degenerate_precision = false, degenerate_recall = false, degenerate_f1 = false;

    std::int64_t total() const { return tp + fp + fn + tn; }

    nlohmann::json to_json() const {
        return {{"tp", tp},
                {"fp", fp},
                {"fn", fn},
                {"tn", tn},
                {"precision", precision},
                {"recall", recall},
                {"f1", f1},
                {"threshold", threshold},
                {"degenerate_precision", degenerate_precision},
                {"degenerate_recall", degenerate_recall},
                {"degenerate_f1", degenerate_f1}};
    }
};

/// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R).
inline EvalReport report_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                     std::int64_t tn, double threshold = 0.5) {
    EvalReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.tn = tn;
    r.threshold = threshold;
    if (tp + fp > 0) {
        r.precision = double(tp) / double(tp + fp);
    } else {
        r.degenerate_precision = true;
    }
    if (tp + fn > 0) {
        r.recall = double(tp) / double(tp + fn);
    } else {
        r.degenerate_recall = true;
    }
    if (r.precision + r.recall > 0.0) {
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    } else {
        r.degenerate_f1 = true;
    }
    return r;
}

inline EvalReport evaluate(const std::vector<float>& probs,
                           const std::vector<std::uint8_t>& labels, double threshold = 0.5) {
    if (probs.size() != labels.size())
        throw DataError("evaluate: " + std::to_string(probs.size()) + " probabilities vs " +
                        std::to_string(labels.size()) + " labels");
    if (probs.empty()) throw DataError("evaluate: empty input");
    if (!(threshold > 0.0) || !(threshold < 1.0))
        throw ConfigError("evaluate: threshold must be in (0,1)");
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pred = probs[i] >= threshold;
        const bool truth = labels[i] != 0;
        if (pred && truth)
            ++tp;
        else if (pred && !truth)
            ++fp;
        else if (!pred && truth)
            ++fn;
        else
            ++tn;
    }
    return report_from_counts(tp, fp, fn, tn, threshold);
}

inline EvalReport evaluate(const std::vector<float>& probs, const std::vector<float>& labels,
                           double threshold = 0.5) {
    std::vector<std::uint8_t> b(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) b[i] = labels[i] != 0.0f ? 1 : 0;
    return evaluate(probs, b, threshold);
}

}  // namespace translog

/* Copyright 2026 The Cascaded Non-Local Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <limits>

#include <json.hpp>

#include "cnl/data.hpp"

namespace cnl {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes),
      counts_(static_cast<std::size_t>(std::max(num_classes, 0)) *
                  static_cast<std::size_t>(std::max(num_classes, 0)),
              0) {
  require(num_classes >= 1, "confusion matrix needs at least one class");
}

void ConfusionMatrix::accumulate(const std::vector<int>& predictions,
                                 const std::vector<int>& labels) {
  require(predictions.size() == labels.size(),
          "predictions and labels differ in length");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < classes_, "label out of range");
    require(predictions[i] >= 0 && predictions[i] < classes_,
            "prediction out of range");
  }
  const auto k = static_cast<std::size_t>(classes_);
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++counts_[static_cast<std::size_t>(labels[i]) * k +
              static_cast<std::size_t>(predictions[i])];
  total_ += labels.size();
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  require(other.classes_ == classes_, "class counts differ");
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
  total_ += other.total_;
}

std::uint64_t ConfusionMatrix::count(int truth, int predicted) const {
  require(truth >= 0 && truth < classes_ && predicted >= 0 &&
              predicted < classes_,
          "class id out of range");
  return counts_[static_cast<std::size_t>(truth) *
                     static_cast<std::size_t>(classes_) +
                 static_cast<std::size_t>(predicted)];
}

SegmentationMetrics ConfusionMatrix::finalize() const {
  const auto k = static_cast<std::size_t>(classes_);
  SegmentationMetrics m;
  m.per_class_iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  if (total_ == 0) return m;

  std::vector<std::uint64_t> rows(k, 0), cols(k, 0);
  std::uint64_t trace = 0;
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t p = 0; p < k; ++p) {
      rows[t] += counts_[t * k + p];
      cols[p] += counts_[t * k + p];
      if (t == p) trace += counts_[t * k + p];
    }
  m.oa = static_cast<double>(trace) / static_cast<double>(total_);
  double acc_sum = 0.0, iou_sum = 0.0;
  std::size_t acc_n = 0, iou_n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(counts_[c * k + c]);
    if (rows[c] > 0) {
      acc_sum += tp / static_cast<double>(rows[c]);
      ++acc_n;
    }
    const std::uint64_t uni = rows[c] + cols[c] - counts_[c * k + c];
    if (uni > 0) {
      m.per_class_iou[c] = tp / static_cast<double>(uni);
      iou_sum += m.per_class_iou[c];
      ++iou_n;
    }
  }
  m.macc = acc_n ? acc_sum / static_cast<double>(acc_n) : 0.0;
  m.miou = iou_n ? iou_sum / static_cast<double>(iou_n) : 0.0;
  return m;
}

std::string metrics_json(const SegmentationMetrics& metrics) {
  nlohmann::ordered_json j;
  j["oa"] = metrics.oa;
  j["macc"] = metrics.macc;
  j["miou"] = metrics.miou;
  j["per_class_iou"] = nlohmann::json::array();
  for (double v : metrics.per_class_iou) {
    if (std::isnan(v))
      j["per_class_iou"].push_back(nullptr);
    else
      j["per_class_iou"].push_back(v);
  }
  return j.dump();
}

}  // namespace cnl

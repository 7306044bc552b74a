#pragma once

#include <string>
#include <string_view>

#include "tmdc/classifier/classifier.hpp"

namespace tmdc {

/// One row per sample: sample_id,true_label,predicted_label,loss_0..,posterior_0..
/// Eliminated labels leave their loss and posterior cells empty.
std::string eval_rows_csv(const EvalReport& report);

/// Accuracy, per-class accuracy, mean losses, config echo, seed and run id.
std::string eval_summary_json(const EvalReport& report, std::string_view run_id);

/// First 12 hex digits of SHA-256 over the material.
std::string make_run_id(std::string_view material);

}  // namespace tmdc

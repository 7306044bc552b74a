#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tmdc {

/// One accuracy measurement emitted by an evaluation stage.
struct MetricRow {
  std::string model;
  std::string eval_set;
  std::string attack;  // "clean" for unperturbed data
  std::string kind;    // attack kind, empty for clean
  double accuracy = 0.0;

  bool operator==(const MetricRow&) const = default;
};

inline constexpr const char* kAutoAttackLiteNote =
    "AutoAttack-lite: multi-restart step-halving PGD stand-in, not the full AutoAttack ensemble";

std::string metrics_to_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> metrics_from_csv(std::string_view text);

struct Summary {
  std::vector<MetricRow> rows;
  std::vector<std::string> notes;  // per row, empty or kAutoAttackLiteNote

  bool operator==(const Summary&) const = default;
};

std::string summary_to_csv(const Summary& summary);
std::string summary_to_json(const Summary& summary);
Summary summary_from_json(std::string_view text);

/// Wide table: one row per model, one column per evaluated attack.
std::string comparison_csv(const Summary& summary);

/// Collates every metrics/*.csv of a run into report/summary.{csv,json} and
/// report/comparison.csv. Throws Error if the run manifest is missing.
Summary emit_report(const std::filesystem::path& run_dir);

}  // namespace tmdc

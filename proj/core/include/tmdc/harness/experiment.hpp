#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include "tmdc/harness/config.hpp"

namespace tmdc {

/// A pipeline stage failed (CLI exit code 2). The partial manifest is on disk.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

inline constexpr int kManifestVersion = 1;

using LogFn = std::function<void(std::string_view)>;

/// Runs one named stage, reading earlier stages' outputs from the run
/// directory, and updates run_manifest.json atomically.
void run_stage(const ExperimentConfig& config, std::string_view stage, const LogFn& log = {});

/// Runs every configured stage in pipeline order; returns the run directory.
std::filesystem::path run_experiment(const ExperimentConfig& config, const LogFn& log = {});

/// Run-directory layout shared by the stages.
namespace run_paths {
std::filesystem::path manifest(const std::filesystem::path& dir);
std::filesystem::path dataset(const std::filesystem::path& dir, std::string_view split);
std::filesystem::path model(const std::filesystem::path& dir, std::string_view name);
std::filesystem::path attack(const std::filesystem::path& dir, std::string_view set_name);
std::filesystem::path metrics(const std::filesystem::path& dir, std::string_view stage);
std::filesystem::path tm_dir(const std::filesystem::path& dir);
}  // namespace run_paths

}  // namespace tmdc

#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace spdlog {
class logger;
}

namespace halbach::cli {

/// Output directory of one CLI invocation. Files written through it are
/// listed in manifest.json with size and SHA-256; run.log receives the log
/// with timings and is the only file whose contents vary between reruns.
class RunContext {
 public:
  RunContext(std::filesystem::path out_dir, std::string subcommand, std::optional<std::uint64_t> seed);
  ~RunContext();

  RunContext(const RunContext&) = delete;
  RunContext& operator=(const RunContext&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path(const std::string& relative) const { return dir_ / relative; }

  void write_text(const std::string& relative, std::string_view contents);
  void write_json(const std::string& relative, const nlohmann::json& j);
  /// Records a file that was written directly by a library routine.
  void add(const std::string& relative);
  /// Records the checksum of an input file in the manifest.
  void add_input(const std::string& role, const std::filesystem::path& file);

  /// Writes manifest.json. Safe to call once; later calls do nothing.
  void finish();

 private:
  std::filesystem::path dir_;
  std::string subcommand_;
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> files_;
  nlohmann::json inputs_ = nlohmann::json::object();
  std::shared_ptr<spdlog::logger> previous_;
  bool finished_ = false;
};

/// Logs the elapsed wall time of a stage on destruction.
class StageTimer {
 public:
  explicit StageTimer(std::string stage);
  ~StageTimer();
  double elapsed() const;

 private:
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace halbach::cli

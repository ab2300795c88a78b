#include "run_context.hpp"

#include "halbach/persistence.hpp"

#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>

namespace halbach::cli {

namespace fs = std::filesystem;

RunContext::RunContext(fs::path out_dir, std::string subcommand, std::optional<std::uint64_t> seed)
    : dir_(std::move(out_dir)), subcommand_(std::move(subcommand)), seed_(seed) {
  fs::create_directories(dir_);
  previous_ = spdlog::default_logger();
  auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
  console->set_level(previous_->level());
  auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir_ / "run.log").string(), true);
  file->set_level(spdlog::level::debug);
  auto logger = std::make_shared<spdlog::logger>("halbach", spdlog::sinks_init_list{console, file});
  logger->set_level(spdlog::level::debug);
  logger->flush_on(spdlog::level::info);
  logger->set_pattern("[%Y-%m-%d %H:%M:%S.%e] [%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::info("halbach {} started{}", subcommand_, seed_ ? " with seed " + std::to_string(*seed_) : std::string());
}

RunContext::~RunContext() {
  spdlog::default_logger()->flush();
  if (previous_) spdlog::set_default_logger(previous_);
}

void RunContext::write_text(const std::string& relative, std::string_view contents) {
  write_file(path(relative), contents);
  add(relative);
}

void RunContext::write_json(const std::string& relative, const nlohmann::json& j) {
  halbach::write_json(path(relative), j);
  add(relative);
}

void RunContext::add(const std::string& relative) {
  if (std::find(files_.begin(), files_.end(), relative) == files_.end()) files_.push_back(relative);
}

void RunContext::add_input(const std::string& role, const fs::path& file) { inputs_[role] = sha256_file(file); }

void RunContext::finish() {
  if (finished_) return;
  finished_ = true;
  std::vector<std::string> sorted = files_;
  std::sort(sorted.begin(), sorted.end());
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : sorted) {
    list.push_back({{"path", f}, {"bytes", fs::file_size(path(f))}, {"sha256", sha256_file(path(f))}});
  }
  nlohmann::json manifest{{"tool", "halbach"},
                          {"subcommand", subcommand_},
                          {"seed", seed_ ? nlohmann::json(*seed_) : nlohmann::json(nullptr)},
                          {"inputs", inputs_},
                          {"files", list},
                          {"unchecked", {"run.log"}}};
  halbach::write_json(path("manifest.json"), manifest);
  spdlog::info("wrote {} files to {}", sorted.size() + 1, dir_.string());
}

StageTimer::StageTimer(std::string stage) : stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}

StageTimer::~StageTimer() { spdlog::info("timing: {} took {:.3f} s", stage_, elapsed()); }

double StageTimer::elapsed() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

}  // namespace halbach::cli

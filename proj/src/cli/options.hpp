#pragma once

// Every subcommand declares its settings once as keys. Each key becomes a
// `--long-flag` and a JSON config field of the same name (dashes become
// underscores). The effective configuration is the --config file with the
// flags actually given on the command line laid over it.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace cape::cli {

enum class KeyType { Count, Integer, Real, Text, Flag, CountList, TextList, Json };

struct KeySpec {
  std::string name;  // JSON spelling, e.g. "eta_gamma"
  KeyType type = KeyType::Text;
  std::string help;
};

class KeySet {
 public:
  explicit KeySet(CLI::App& app) : app_(&app) {}

  void add(const KeySpec& key);
  /// Keys accepted in a config file but never used (echoed provenance).
  void allow_informational(std::vector<std::string> names) { informational_ = std::move(names); }
  /// Keys accepted only from a config file, passed through untouched.
  void allow_passthrough(std::vector<std::string> names) { passthrough_ = std::move(names); }

  /// Reads --config when given, overlays the flags that were set, and
  /// rejects keys that are neither declared nor allowed.
  nlohmann::json merged() const;

 private:
  struct Entry {
    KeySpec spec;
    CLI::Option* option = nullptr;
    std::string text;
    bool flag = false;
  };
  CLI::App* app_;
  std::vector<std::unique_ptr<Entry>> entries_;
  std::vector<std::string> informational_;
  std::vector<std::string> passthrough_;
  std::string config_path_;
  bool config_added_ = false;
};

std::string flag_name(const std::string& key);

// Typed reads from a merged config; ConfigError on a wrong type.
std::optional<std::string> get_text(const nlohmann::json& cfg, const std::string& key);
std::optional<double> get_real(const nlohmann::json& cfg, const std::string& key);
std::optional<std::size_t> get_count(const nlohmann::json& cfg, const std::string& key);
std::optional<std::uint64_t> get_seed(const nlohmann::json& cfg, const std::string& key);
bool get_flag(const nlohmann::json& cfg, const std::string& key);

/// Default output directory: $CAPE_OUT_DIR, else "cape-out".
std::string default_out_dir();

}  // namespace cape::cli

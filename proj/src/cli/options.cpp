#include "options.hpp"

#include <algorithm>
#include <cstdlib>

#include "cape/csv.hpp"
#include "cape/errors.hpp"

namespace cape::cli {

namespace {

using nlohmann::json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& f : csv::split_line(text))
    if (!f.empty()) out.push_back(f);
  return out;
}

json convert(const KeySpec& key, const std::string& text) {
  const std::string where = "--" + flag_name(key.name) + " '" + text + "'";
  switch (key.type) {
    case KeyType::Count: {
      const auto v = csv::parse_integer(text);
      if (!v || *v < 0) throw ConfigError(where + ": expected a non-negative integer");
      return static_cast<std::size_t>(*v);
    }
    case KeyType::Integer: {
      const auto v = csv::parse_integer(text);
      if (!v) {
        // Seeds may exceed the signed range.
        try {
          std::size_t pos = 0;
          const unsigned long long u = std::stoull(text, &pos);
          if (pos == text.size()) return static_cast<std::uint64_t>(u);
        } catch (const std::exception&) {
        }
        throw ConfigError(where + ": expected an integer");
      }
      return *v;
    }
    case KeyType::Real: {
      const auto v = csv::parse_double(text);
      if (!v) throw ConfigError(where + ": expected a number");
      return *v;
    }
    case KeyType::Text: return text;
    case KeyType::Flag: return true;
    case KeyType::CountList: {
      json arr = json::array();
      for (const auto& f : split_list(text)) {
        const auto v = csv::parse_integer(f);
        if (!v || *v < 0) throw ConfigError(where + ": expected comma-separated non-negative integers");
        arr.push_back(static_cast<std::size_t>(*v));
      }
      return arr;
    }
    case KeyType::TextList: return split_list(text);
    case KeyType::Json: {
      try {
        return json::parse(text);
      } catch (const json::exception&) {
        return text;  // shorthand strings are interpreted by the command
      }
    }
  }
  return text;
}

}  // namespace

std::string flag_name(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

void KeySet::add(const KeySpec& key) {
  if (!config_added_) {
    app_->add_option("--config", config_path_, "JSON config file; flags given on the command line override it");
    config_added_ = true;
  }
  auto e = std::make_unique<Entry>();
  e->spec = key;
  const std::string flag = "--" + flag_name(key.name);
  if (key.type == KeyType::Flag) {
    e->option = app_->add_flag(flag, e->flag, key.help);
  } else {
    e->option = app_->add_option(flag, e->text, key.help);
  }
  entries_.push_back(std::move(e));
}

json KeySet::merged() const {
  json cfg = json::object();
  if (!config_path_.empty()) {
    const std::string text = csv::read_text_file(config_path_);
    try {
      cfg = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(config_path_ + ": invalid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw ConfigError(config_path_ + ": config must be a JSON object");
  }
  for (const auto& [key, value] : cfg.items()) {
    const bool declared = std::any_of(entries_.begin(), entries_.end(),
                                      [&](const auto& e) { return e->spec.name == key; });
    const bool info = std::find(informational_.begin(), informational_.end(), key) != informational_.end();
    const bool pass = std::find(passthrough_.begin(), passthrough_.end(), key) != passthrough_.end();
    if (!declared && !info && !pass) throw ConfigError("unknown config key '" + key + "'");
  }
  for (const auto& name : informational_) cfg.erase(name);
  for (const auto& e : entries_) {
    if (e->option->count() == 0) continue;
    cfg[e->spec.name] = convert(e->spec, e->text);
  }
  return cfg;
}

std::optional<std::string> get_text(const json& cfg, const std::string& key) {
  if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
  if (!cfg.at(key).is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return cfg.at(key).get<std::string>();
}

std::optional<double> get_real(const json& cfg, const std::string& key) {
  if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
  if (!cfg.at(key).is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return cfg.at(key).get<double>();
}

std::optional<std::size_t> get_count(const json& cfg, const std::string& key) {
  if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
  const auto& v = cfg.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::optional<std::uint64_t> get_seed(const json& cfg, const std::string& key) {
  if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
  const auto& v = cfg.at(key);
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return v.is_number_unsigned() ? v.get<std::uint64_t>() : static_cast<std::uint64_t>(v.get<long long>());
}

bool get_flag(const json& cfg, const std::string& key) {
  if (!cfg.contains(key) || cfg.at(key).is_null()) return false;
  if (!cfg.at(key).is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
  return cfg.at(key).get<bool>();
}

std::string default_out_dir() {
  const char* env = std::getenv("CAPE_OUT_DIR");
  return env != nullptr && *env != '\0' ? std::string(env) : std::string("cape-out");
}

}  // namespace cape::cli

#pragma once

// JSON configuration files for CLI11. Top-level keys set options of the main
// command; an object keyed by a subcommand name sets that subcommand's
// options. Command-line flags override file values.

#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace dbdiag::cli {

class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool defaultAlso, bool, std::string) const override {
    return to_json(app, defaultAlso).dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

  static nlohmann::json to_json(const CLI::App* app, bool defaultAlso) {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      std::vector<std::string> values = opt->results();
      if (values.empty() && defaultAlso && !opt->get_default_str().empty()) {
        values = {opt->get_default_str()};
      }
      if (values.empty()) continue;
      if (opt->get_type_size() == 0) {
        j[name] = opt->as<bool>();
      } else if (values.size() == 1) {
        j[name] = scalar(values.front());
      } else {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : values) arr.push_back(scalar(v));
        j[name] = arr;
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      if (sub->parsed()) j[sub->get_name()] = to_json(sub, defaultAlso);
    }
    return j;
  }

 private:
  static nlohmann::json scalar(const std::string& v) {
    // Keep numbers and booleans typed; everything else stays a string.
    if (v == "true" || v == "false") return v == "true";
    if (!v.empty()) {
      try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) {
          if (v.find_first_of(".eE") == std::string::npos) {
            const long long i = std::stoll(v);
            return i;
          }
          return d;
        }
      } catch (const std::exception&) {
      }
    }
    return v;
  }

  static std::string text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const nlohmann::json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        collect(value, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(text(v));
      } else {
        item.inputs.push_back(text(value));
      }
      items.push_back(std::move(item));
    }
  }
};

}  // namespace dbdiag::cli

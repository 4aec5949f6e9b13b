// Copyright 2026 The biaslens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "biaslens/common.hpp"

namespace biaslens {

/// Stage manifest embedded in (or written next to) every output file.
/// Holds only what determines the output bytes: no paths, no clocks.
struct StageManifest {
  std::string stage;
  nlohmann::json params = nlohmann::json::object();
  std::map<std::string, std::string> inputs;  // role -> content digest
  nlohmann::json upstream = nlohmann::json::array();

  nlohmann::json to_json() const {
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"stage", stage},
            {"params", params},
            {"inputs", inputs},
            {"upstream", upstream}};
  }
};

inline std::string sidecar_path(const std::string& path) { return path + ".manifest.json"; }

/// Manifest of an input file: embedded under "manifest" for JSON documents,
/// otherwise read from the sidecar when present.
inline nlohmann::json manifest_of(const std::string& path, const nlohmann::json* doc = nullptr) {
  if (doc != nullptr && doc->is_object() && doc->contains("manifest")) return (*doc)["manifest"];
  if (std::filesystem::exists(sidecar_path(path))) {
    try {
      return nlohmann::json::parse(read_file(sidecar_path(path)));
    } catch (const nlohmann::json::exception&) {
      return nullptr;
    }
  }
  return nullptr;
}

inline std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Run-level manifest (`--manifest-out`): stage manifests plus wall-clock
/// timestamps. Kept apart from the outputs so reruns stay byte-identical.
struct RunManifest {
  std::string command;
  std::string started_at;
  std::string finished_at;
  nlohmann::json global = nlohmann::json::object();
  nlohmann::json stages = nlohmann::json::array();

  nlohmann::json to_json() const {
    return {{"tool", kToolName},   {"version", kToolVersion}, {"command", command},
            {"started_at", started_at}, {"finished_at", finished_at}, {"global", global},
            {"stages", stages}};
  }
};

/// Serialized JSON with a trailing newline; key order is sorted so the
/// bytes are a pure function of the content.
inline std::string dump_json(const nlohmann::json& j) { return j.dump(1) + "\n"; }

inline nlohmann::json parse_json_file(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("malformed JSON in " + path + ": " + e.what());
  }
}

}  // namespace biaslens

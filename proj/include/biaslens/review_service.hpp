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

// Local review service: one report, one decisions file.
//
//   GET  /report?min_phi=x
//   GET  /clusters/{id}
//   POST /decisions
//   GET  /decisions
//   GET  /weights/preview?mode=balance|decorrelate
//
// Handlers are plain member functions returning (status, body) so they can
// be exercised without a socket; `make_server` wires them to httplib.

#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "biaslens/common.hpp"
#include "biaslens/manifest.hpp"
#include "biaslens/mitigator.hpp"
#include "biaslens/pipeline.hpp"

namespace biaslens {

struct Response {
  int status = 200;
  nlohmann::json body;
};

inline constexpr std::size_t kMaxSampleCaptions = 20;

namespace detail {

inline Response error_response(int status, const std::string& msg) { return {status, {{"error", msg}}}; }

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::size_t> parse_index(const std::string& s) {
  std::size_t v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty()) return std::nullopt;
  return v;
}

/// Writes to a sibling temp file, then renames over the target.
inline void write_atomically(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  write_file(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("could not replace " + path + ": " + ec.message());
}

}  // namespace detail

class ReviewSession {
 public:
  ReviewSession(ReportDocument report, std::string decisions_path)
      : report_(std::move(report)), decisions_path_(std::move(decisions_path)) {
    indicators_ = report_.indicators();
    if (!decisions_path_.empty() && std::filesystem::exists(decisions_path_) &&
        std::filesystem::file_size(decisions_path_) > 0) {
      for (auto& d : load_decisions(decisions_path_)) {
        validate_roles(d);
        if (!report_.correlations.find(d.f, d.g))
          throw InputError("decisions file references pair (" + std::to_string(d.f) + ", " + std::to_string(d.g) +
                           ") which is not in the report");
        decisions_.push_back(std::move(d));
      }
    }
  }

  const ReportDocument& report() const { return report_; }

  Response get_report(const std::optional<std::string>& min_phi_arg) const {
    double min_phi = 0.0;
    if (min_phi_arg) {
      const auto v = detail::parse_number(*min_phi_arg);
      if (!v) return detail::error_response(400, "min_phi must be a number, got '" + *min_phi_arg + "'");
      if (*v < 0.0) return detail::error_response(400, "min_phi must be >= 0");
      min_phi = *v;
    }
    std::shared_lock lock(mu_);
    nlohmann::json pairs = nlohmann::json::array();
    for (auto k : report_.correlations.retained) {
      const auto& e = report_.correlations.entries[k];
      if (std::abs(*e.phi) < min_phi) continue;
      nlohmann::json row = entry_to_json(e);
      row["label_f"] = report_.feature(e.f)->label;
      row["label_f'"] = report_.feature(e.g)->label;
      const auto* d = find_decision(e.f, e.g);
      row["verdict"] = d ? to_string(d->verdict) : "undecided";
      pairs.push_back(std::move(row));
    }
    return {200,
            {{"min_phi", min_phi},
             {"N", report_.record_ids.size()},
             {"F", report_.features.size()},
             {"phi_threshold", report_.correlations.phi_threshold},
             {"alpha", report_.correlations.alpha},
             {"pairs", pairs}}};
  }

  Response get_cluster(const std::string& id_arg) const {
    const auto id = detail::parse_index(id_arg);
    const FeatureInfo* f = id ? report_.feature(*id) : nullptr;
    if (!f) return detail::error_response(404, "unknown cluster '" + id_arg + "'");
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < f->records.size() && i < kMaxSampleCaptions; ++i)
      samples.push_back({{"id", report_.record_ids[f->records[i]]}, {"caption", report_.captions[f->records[i]]}});
    return {200,
            {{"id", f->id},
             {"label", f->label},
             {"members", f->members},
             {"support", f->records.size()},
             {"sample_captions", samples}}};
  }

  Response get_decisions() const {
    std::shared_lock lock(mu_);
    return {200, to_json(decisions_)};
  }

  Response post_decision(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      return detail::error_response(400, std::string("malformed JSON: ") + e.what());
    }
    SelectionDecision d;
    try {
      d = decision_from_json(j);
    } catch (const InputError& e) {
      return detail::error_response(400, e.what());
    }
    if (!report_.correlations.find(d.f, d.g))
      return detail::error_response(404, "pair (" + std::to_string(d.f) + ", " + std::to_string(d.g) +
                                             ") is not in the report");
    try {
      validate_roles(d);
    } catch (const InputError& e) {
      return detail::error_response(422, e.what());
    }
    if (d.timestamp.empty()) d.timestamp = utc_now_iso8601();

    std::unique_lock lock(mu_);
    if (d.verdict == Verdict::kSpurious) {
      for (const auto& other : decisions_) {
        if (other.verdict == Verdict::kSpurious && other.pair() != d.pair()) {
          Response r = detail::error_response(
              409, "another spurious pair is already active: (" + std::to_string(other.f) + ", " +
                       std::to_string(other.g) + ")");
          r.body["existing"] = to_json(other);
          return r;
        }
      }
    }
    std::vector<SelectionDecision> next = decisions_;
    bool replaced = false;
    for (auto& other : next)
      if (other.pair() == d.pair()) {
        other = d;
        replaced = true;
      }
    if (!replaced) next.push_back(d);
    if (!decisions_path_.empty()) {
      try {
        detail::write_atomically(decisions_path_, dump_json(to_json(next)));
      } catch (const Error& e) {
        return detail::error_response(500, e.what());
      }
    }
    decisions_ = std::move(next);
    return {200, to_json(d)};
  }

  Response weights_preview(const std::optional<std::string>& mode_arg) const {
    WeightMode mode = WeightMode::kBalance;
    if (mode_arg) {
      try {
        mode = parse_weight_mode(*mode_arg);
      } catch (const InputError& e) {
        return detail::error_response(400, e.what());
      }
    }
    std::shared_lock lock(mu_);
    const SelectionDecision* active = nullptr;
    for (const auto& d : decisions_)
      if (d.verdict == Verdict::kSpurious) active = &d;
    if (!active) return detail::error_response(409, "no active spurious decision");
    const std::size_t t = *active->target_feature, s = *active->spurious_feature;
    Weights w;
    try {
      w = compute_weights(indicators_, t, s, mode);
    } catch (const InfeasibleConfig& e) {
      return detail::error_response(422, e.what());
    }
    const std::vector<double> norm = mean_normalized(w.per_record);
    const auto predicted = weighted_phi(indicators_, norm, t, s);
    nlohmann::json cells = nlohmann::json::array();
    for (int y = 0; y < 2; ++y)
      for (int sp = 0; sp < 2; ++sp)
        cells.push_back({{"y", y}, {"s", sp}, {"count", w.group_counts[y][sp]}, {"weight", w.cell_weights[y][sp]}});
    const auto* e = report_.correlations.find(t, s);
    return {200,
            {{"mode", to_string(mode)},
             {"target_feature", t},
             {"spurious_feature", s},
             {"cells", cells},
             {"phi", e && e->phi ? nlohmann::json(*e->phi) : nlohmann::json()},
             {"predicted_weighted_phi", predicted ? nlohmann::json(*predicted) : nlohmann::json()}}};
  }

 private:
  const SelectionDecision* find_decision(std::size_t a, std::size_t b) const {
    const std::pair key{std::min(a, b), std::max(a, b)};
    for (const auto& d : decisions_)
      if (d.pair() == key) return &d;
    return nullptr;
  }

  ReportDocument report_;
  IndicatorMatrix indicators_;
  std::string decisions_path_;
  std::vector<SelectionDecision> decisions_;
  mutable std::shared_mutex mu_;
};

inline void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline std::optional<std::string> query_param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

/// Routes bound to `session`, which must outlive the server.
inline std::unique_ptr<httplib::Server> make_server(ReviewSession& session, const std::string& ui_dir = "") {
  auto srv = std::make_unique<httplib::Server>();
  srv->Get("/report", [&session](const httplib::Request& req, httplib::Response& res) {
    send(res, session.get_report(query_param(req, "min_phi")));
  });
  srv->Get(R"(/clusters/([^/]+))", [&session](const httplib::Request& req, httplib::Response& res) {
    send(res, session.get_cluster(req.matches[1].str()));
  });
  srv->Get("/decisions", [&session](const httplib::Request&, httplib::Response& res) {
    send(res, session.get_decisions());
  });
  srv->Post("/decisions", [&session](const httplib::Request& req, httplib::Response& res) {
    send(res, session.post_decision(req.body));
  });
  srv->Get("/weights/preview", [&session](const httplib::Request& req, httplib::Response& res) {
    send(res, session.weights_preview(query_param(req, "mode")));
  });
  if (!ui_dir.empty()) {
    if (!srv->set_mount_point("/", ui_dir)) throw InputError("UI directory not found: " + ui_dir);
  } else {
    srv->Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("biaslens review service\n"
                      "GET /report?min_phi=x\nGET /clusters/{id}\nPOST /decisions\nGET /decisions\n"
                      "GET /weights/preview?mode=balance|decorrelate\n",
                      "text/plain");
    });
  }
  return srv;
}

}  // namespace biaslens

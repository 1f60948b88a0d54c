#pragma once

// Local HTTP JSON API over labeling sessions.
//
//   GET  /session/{id}/points   [{id, x, y, text, label?, provenance?, cluster}]
//   POST /session/{id}/bulk     {polygon: [[x, y], ...], label} -> {affected, seq}
//   POST /session/{id}/single   {id, label}                     -> {affected, seq}
//   POST /session/{id}/relabel  {from, to}                      -> {affected, seq}
//   POST /session/{id}/undo                                     -> {reverted: action}
//   GET  /session/{id}/export   labeled corpus as JSON lines; summary in X-Label-Summary
//   GET  /session/{id}/stats    {gold, bulk, single, unlabeled, total, actions}
//   GET  /sessions              [id, ...]
//
// Errors are {code, message}. Mutations on one session are serialized by its
// mutex; every mutation is on disk before the response is sent.

#include <httplib.h>

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "ilab/label_session.hpp"

namespace ilab {

class LabelService {
 public:
  LabelService() { routes(); }
  ~LabelService() { stop(); }
  LabelService(const LabelService&) = delete;
  LabelService& operator=(const LabelService&) = delete;

  void add_session(LabelSession session) {
    std::lock_guard lk(registry_mu_);
    const std::string id = session.id();
    if (sessions_.count(id)) throw Error(Errc::invalid_argument, "duplicate session id " + id);
    sessions_.emplace(id, std::make_unique<Slot>(std::move(session)));
  }

  // Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::unavailable, "cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  // Serves on the calling thread until stop().
  void run(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port))
      throw Error(Errc::unavailable, "cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  // Runs `fn` on a session under its lock; used by tests and the CLI.
  template <class Fn>
  auto with_session(const std::string& id, Fn&& fn) {
    auto& slot = find(id);
    std::lock_guard lk(slot.mu);
    return fn(slot.session);
  }

 private:
  struct Slot {
    explicit Slot(LabelSession s) : session(std::move(s)) {}
    std::mutex mu;
    LabelSession session;
  };

  static int status_for(Errc c) {
    switch (c) {
      case Errc::not_found: return 404;
      case Errc::empty_log: return 409;
      case Errc::io_error: return 500;
      default: return 400;
    }
  }

  static void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::ordered_json{{"code", code}, {"message", message}}.dump(), "application/json");
  }

  static void send_json(httplib::Response& res, const nlohmann::ordered_json& j) {
    res.set_content(j.dump(), "application/json");
  }

  Slot& find(const std::string& id) {
    std::lock_guard lk(registry_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(Errc::not_found, "no session '" + id + "'");
    return *it->second;
  }

  // Wraps a per-session handler with lookup, locking and error mapping.
  template <class Fn>
  httplib::Server::Handler session_handler(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        auto& slot = find(req.matches[1]);
        std::lock_guard lk(slot.mu);
        fn(slot.session, req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), errc_name(e.code()), e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "parse_error", std::string("bad request body: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  static nlohmann::json body_of(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    return nlohmann::json::parse(req.body);
  }

  static std::string label_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string())
      throw Error(Errc::invalid_argument, std::string("missing string field '") + key + "'");
    return j.at(key).get<std::string>();
  }

  static nlohmann::ordered_json mutation_reply(const LabelSession& s, std::size_t affected) {
    nlohmann::ordered_json j;
    j["affected"] = affected;
    j["seq"] = s.log().empty() ? 0 : s.log().back().seq;
    j["stats"] = summary_to_json(s.summary());
    return j;
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lk(registry_mu_);
      auto ids = nlohmann::ordered_json::array();
      for (const auto& [id, slot] : sessions_) ids.push_back(id);
      send_json(res, ids);
    });

    server_.Get(R"(/session/([^/]+)/points)",
                session_handler([](LabelSession& s, const httplib::Request&, httplib::Response& res) {
                  auto pts = nlohmann::ordered_json::array();
                  const auto& asg = s.assignments();
                  for (const auto& r : s.records()) {
                    nlohmann::ordered_json p;
                    const auto row = static_cast<std::size_t>(r.id);
                    p["id"] = r.id;
                    p["x"] = s.coords()(row, 0);
                    p["y"] = s.coords()(row, 1);
                    p["text"] = r.text;
                    if (auto it = asg.find(r.id); it != asg.end()) {
                      p["label"] = it->second.label;
                      p["provenance"] = std::string(provenance_name(it->second.provenance));
                    }
                    if (s.clusters().empty() || s.clusters()[row] < 0) p["cluster"] = nullptr;
                    else p["cluster"] = s.clusters()[row];
                    pts.push_back(std::move(p));
                  }
                  send_json(res, pts);
                }));

    server_.Post(R"(/session/([^/]+)/bulk)",
                 session_handler([](LabelSession& s, const httplib::Request& req, httplib::Response& res) {
                   const auto j = body_of(req);
                   if (!j.contains("polygon") || !j.at("polygon").is_array())
                     throw Error(Errc::invalid_argument, "missing 'polygon'");
                   Polygon poly;
                   for (const auto& v : j.at("polygon")) {
                     if (!v.is_array() || v.size() != 2) throw Error(Errc::invalid_argument, "polygon vertices must be [x, y]");
                     poly.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
                   }
                   const auto n = s.apply_bulk(poly, label_field(j, "label"));
                   send_json(res, mutation_reply(s, n));
                 }));

    server_.Post(R"(/session/([^/]+)/single)",
                 session_handler([](LabelSession& s, const httplib::Request& req, httplib::Response& res) {
                   const auto j = body_of(req);
                   if (!j.contains("id") || !j.at("id").is_number_integer())
                     throw Error(Errc::invalid_argument, "missing integer 'id'");
                   const auto n = s.apply_single(j.at("id").get<RecordId>(), label_field(j, "label"));
                   send_json(res, mutation_reply(s, n));
                 }));

    server_.Post(R"(/session/([^/]+)/relabel)",
                 session_handler([](LabelSession& s, const httplib::Request& req, httplib::Response& res) {
                   const auto j = body_of(req);
                   const auto n = s.relabel(label_field(j, "from"), label_field(j, "to"));
                   send_json(res, mutation_reply(s, n));
                 }));

    server_.Post(R"(/session/([^/]+)/undo)",
                 session_handler([](LabelSession& s, const httplib::Request&, httplib::Response& res) {
                   const auto reverted = s.undo();
                   nlohmann::ordered_json j;
                   j["reverted"] = action_to_json(reverted);
                   j["stats"] = summary_to_json(s.summary());
                   send_json(res, j);
                 }));

    server_.Get(R"(/session/([^/]+)/export)",
                session_handler([](LabelSession& s, const httplib::Request&, httplib::Response& res) {
                  const auto summary = s.summary();
                  if (s.dir()) s.export_labeled((*s.dir() / "export.jsonl").string());
                  res.set_header("X-Label-Summary", summary_to_json(summary).dump());
                  res.set_content(s.export_jsonl(), "application/x-ndjson");
                }));

    server_.Get(R"(/session/([^/]+)/stats)",
                session_handler([](LabelSession& s, const httplib::Request&, httplib::Response& res) {
                  const auto sum = s.summary();
                  auto j = summary_to_json(sum);
                  j["total"] = sum.total();
                  j["actions"] = s.log().size();
                  send_json(res, j);
                }));

    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_error(res, res.status, "not_found", "no such route");
    });
  }

  httplib::Server server_;
  std::thread thread_;
  std::mutex registry_mu_;
  std::map<std::string, std::unique_ptr<Slot>> sessions_;
};

}  // namespace ilab

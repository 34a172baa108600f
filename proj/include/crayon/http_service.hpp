#pragma once

#include "crayon/service.hpp"

#include <httplib.h>

#include <string>

namespace crayon {

inline constexpr const char* kFingerprintHeader = "X-Config-Fingerprint";

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::validation:
    case ErrorCode::invalid_argument:
    case ErrorCode::codec: return 400;
    case ErrorCode::invalid_state:
    case ErrorCode::hash_mismatch: return 409;
    case ErrorCode::selector: return 502;
    case ErrorCode::behind_camera:
    case ErrorCode::invalid_depth:
    case ErrorCode::insufficient_support:
    case ErrorCode::degenerate:
    case ErrorCode::no_graspable_region:
    case ErrorCode::malformed_action:
    case ErrorCode::non_convergence:
    case ErrorCode::divergence: return 422;
    case ErrorCode::io: return 500;
  }
  return 500;
}

namespace detail {

inline Json parse_body(const httplib::Request& req) {
  try {
    return req.body.empty() ? Json::object() : Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::validation, std::string("request body is not valid json: ") + e.what());
  }
}

template <typename T>
T body_field(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::validation, std::string("invalid field: ") + key);
  }
}

}  // namespace detail

/// Routes the session API and the selector hook onto `server`. Session
/// responses embed the config fingerprint; every response also carries it
/// as a header, since the selector reply schema admits no extra keys.
inline void mount_service(httplib::Server& server, Service& service) {
  const std::string fp = service.fingerprint();
  const auto reply = [fp](httplib::Response& res, int status, Json body, bool embed = true) {
    if (embed && body.is_object()) body["config_fingerprint"] = fp;
    res.status = status;
    res.set_header(kFingerprintHeader, fp);
    res.set_content(body.dump(), "application/json");
  };
  const auto guarded = [reply](auto handler) {
    return [reply, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const Error& e) {
        reply(res, http_status(e.code()), error_json(e));
      } catch (const std::exception& e) {
        reply(res, 500, error_json(Error(ErrorCode::io, e.what())));
      }
    };
  };

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Expose-Headers", kFingerprintHeader}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/health", guarded([&, reply](const httplib::Request&, httplib::Response& res) {
               reply(res, 200, {{"status", "ok"}, {"config", service.config().to_json()}});
             }));

  server.Post("/session", guarded([&, reply](const httplib::Request& req, httplib::Response& res) {
                const Json b = detail::parse_body(req);
                const SceneKind kind = [&] {
                  try {
                    return scene_kind_from_string(detail::body_field<std::string>(b, "kind", "drawer"));
                  } catch (const Error& e) {
                    throw Error(ErrorCode::validation, e.what());
                  }
                }();
                const auto seed = detail::body_field<std::uint64_t>(b, "seed", 0);
                const std::string id = service.create_session(kind, seed);
                reply(res, 201, {{"session", id}, {"frame", to_json(service.frame(id))}});
              }));

  server.Get(R"(/session/([^/]+)/frame)", guarded([&, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, to_json(service.frame(req.matches[1])));
             }));

  server.Post(R"(/session/([^/]+)/prompt)",
              guarded([&, reply](const httplib::Request& req, httplib::Response& res) {
                const Json b = detail::parse_body(req);
                const PromptRecord record = prompt_record_from_json(detail::field(b, "prompt"));
                PrimitiveKind primitive;
                MotionSense sense;
                try {
                  primitive = primitive_from_string(detail::body_field<std::string>(b, "primitive", "pull"));
                  sense = motion_sense_from_string(detail::body_field<std::string>(
                      b, "sense", primitive == PrimitiveKind::push ? "close" : "open"));
                } catch (const Error& e) {
                  throw Error(ErrorCode::validation, e.what());
                }
                reply(res, 200, to_json(service.submit_prompt(req.matches[1], record, primitive, sense)));
              }));

  server.Post(R"(/session/([^/]+)/execute)",
              guarded([&, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, 200, to_json(service.execute(req.matches[1])));
              }));

  server.Get(R"(/session/([^/]+)/history)",
             guarded([&, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, to_json(service.history(req.matches[1])));
             }));

  server.Post("/selector", guarded([&, reply](const httplib::Request& req, httplib::Response& res) {
                const SelectorRequest sr = selector_request_from_json(detail::parse_body(req));
                reply(res, 200, to_json(service.select(sr)), false);
              }));
}

}  // namespace crayon

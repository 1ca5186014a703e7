#pragma once

#include "lightsq/session.hpp"

#include <httplib.h>

namespace lightsq {

namespace detail {

inline void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void reply_error(httplib::Response& res, int status, const std::string& what) { reply(res, status, Json{{"error", what}}); }

template <typename Body>
void guarded(httplib::Response& res, Body&& body) {
  try {
    body();
  } catch (const SessionBusy& e) {
    reply_error(res, 409, e.what());
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::UnknownPrimitive: reply_error(res, 404, e.what()); break;
      case ErrorCode::DegenerateRegion: reply_error(res, 422, e.what()); break;
      case ErrorCode::InvalidArgument:
      case ErrorCode::MalformedFile: reply_error(res, 400, e.what()); break;
      default: reply_error(res, 500, e.what()); break;
    }
  } catch (const std::exception& e) {
    reply_error(res, 500, e.what());
  }
}

}  // namespace detail

/// Registers the viewer endpoints on server. The session must outlive it.
inline void mount(httplib::Server& server, Session& session) {
  server.Get("/abstraction", [&](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] { detail::reply(res, 200, to_json(session.current())); });
  });
  server.Get(R"(/mesh/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const std::string text = req.matches[1];
      int id = 0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
      if (ec != std::errc() || ptr != text.data() + text.size()) throw Error(ErrorCode::UnknownPrimitive, "no primitive with id " + text);
      detail::reply(res, 200, to_json(session.mesh(id)));
    });
  });
  server.Get("/reference-mesh", [&](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] { detail::reply(res, 200, to_json(session.reference_mesh())); });
  });
  server.Get("/metrics", [&](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] { detail::reply(res, 200, to_json(session.metrics())); });
  });
  server.Post("/refine", [&](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      int id = 0, splits = 0;
      try {
        const Json body = Json::parse(req.body);
        id = body.at("id").get<int>();
        splits = body.at("splits").get<int>();
      } catch (const Json::exception& e) {
        throw Error(ErrorCode::MalformedFile, std::string("bad refine body: ") + e.what());
      }
      if (splits < 1) throw Error(ErrorCode::InvalidArgument, "splits must be >= 1");
      detail::reply(res, 200, to_json(session.refine(id, splits)));
    });
  });
  server.Post("/undo", [&](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] {
      if (!session.undo()) return detail::reply_error(res, 409, "nothing to undo");
      detail::reply(res, 200, to_json(session.current()));
    });
  });
}

}  // namespace lightsq

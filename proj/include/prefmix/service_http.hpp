#pragma once
// HTTP routes for PreferenceService on a cpp-httplib server.
// Requires httplib.h on the include path.

#include <string>

#include "prefmix/service.hpp"

#include <httplib.h>

namespace prefmix {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename Handler>
void guarded(httplib::Response& res, Handler&& handler) {
    try {
        send_json(res, 200, handler());
    } catch (const Error& e) {
        const ApiError err = to_api_error(e);
        send_json(res, err.status, err.to_json());
    } catch (const json::exception& e) {
        send_json(res, 400, ApiError{"parse_error", e.what(), "", 400}.to_json());
    } catch (const std::exception& e) {
        send_json(res, 500, ApiError{"internal", e.what(), "", 500}.to_json());
    }
}

inline json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
}

} // namespace detail

inline void mount_routes(httplib::Server& server, PreferenceService& service) {
    using detail::guarded;
    using detail::parse_body;

    server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            service.authorize(req.get_header_value("Authorization"));
            return service.create_session(parse_body(req));
        });
    });
    server.Post(R"(/sessions/([^/]+)/responses)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            service.authorize(req.get_header_value("Authorization"));
            return service.submit_response(req.matches[1], parse_body(req));
        });
    });
    server.Get(R"(/sessions/([^/]+)/profile)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { return service.get_profile(req.matches[1]); });
    });
    server.Post("/rerank", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { return service.rerank(parse_body(req)); });
    });
    server.Get(R"(/bank/pairs/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { return service.get_bank_pair(req.matches[1]); });
    });
    server.Get("/healthz", [&service](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { return service.healthz(); });
    });
}

} // namespace prefmix

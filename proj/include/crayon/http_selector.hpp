#pragma once

#include "crayon/auto_prompter.hpp"

#include <httplib.h>

#include <chrono>
#include <string>

namespace crayon {

/// Sends selector requests to a POST /selector endpoint. Timeouts, transport
/// failures and non-200 replies raise selector errors; nothing falls back.
class HttpSelectorClient final : public SelectorClient {
 public:
  HttpSelectorClient(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(5))
      : base_url_(std::move(base_url)), timeout_(timeout) {}

  SelectorChoice choose(const SelectorRequest& request) override {
    httplib::Client cli(base_url_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    const auto res = cli.Post("/selector", to_json(request).dump(), "application/json");
    if (!res) throw Error(ErrorCode::selector, "selector request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorCode::selector, "selector replied with status " + std::to_string(res->status));
    return parse_selector_reply(res->body, request.want_move);
  }

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

}  // namespace crayon

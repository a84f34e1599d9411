#pragma once

#include <string>
#include <thread>

#include "httplib.h"
#include "taskmode/util.hpp"

namespace taskmode::testsupport {

// Scripted chat-completion endpoint bound to an ephemeral localhost port.
// Tests supply the handler; the server runs until destruction.
struct MockEndpoint {
  explicit MockEndpoint(httplib::Server::Handler handler) {
    server.Post("/v1/chat/completions", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockEndpoint() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  std::string base_url() const {
    return "http://127.0.0.1:" + std::to_string(port);
  }

  httplib::Server server;
  int port = 0;
  std::thread thread;
};

inline std::string completion_body(const std::string& text) {
  json j;
  j["choices"] = json::array({json{{"message", json{{"content", text}}}}});
  return j.dump();
}

inline std::string request_content(const httplib::Request& req) {
  return json::parse(req.body).at("messages").at(0).at("content")
      .get<std::string>();
}

inline bool is_discriminative(const std::string& content) {
  return content.rfind("Please analyze", 0) == 0;
}

}  // namespace taskmode::testsupport

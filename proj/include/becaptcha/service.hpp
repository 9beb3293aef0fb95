#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "becaptcha/bundle.hpp"

namespace becaptcha {

struct HttpReply {
  int status = 200;
  std::string body;
};

// Endpoint bodies, independent of the transport so they can be tested directly.
HttpReply handle_verify(const ModelBundle& bundle, std::string_view body);
HttpReply handle_synth(const ModelBundle& bundle, std::string_view method, std::string_view seed);
HttpReply handle_health(const ModelBundle& bundle, std::string_view hash);

/// POST /verify, GET /synth, GET /health over a bundle that stays fixed for
/// the lifetime of the server. Requests share nothing mutable.
class Server {
 public:
  explicit Server(ModelBundle bundle);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws BindError.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace becaptcha

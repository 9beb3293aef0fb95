#include "becaptcha/service.hpp"

#include <charconv>
#include <mutex>

#include <httplib.h>

#include "becaptcha/session_io.hpp"

namespace becaptcha {

using nlohmann::json;

namespace {

HttpReply error_reply(int status, Errc code, std::string_view detail) {
  return {status, json{{"error", to_string(code)}, {"detail", detail}}.dump()};
}

int status_for(Errc code) {
  switch (code) {
    case Errc::ModelMissing: return 422;
    default: return 400;
  }
}

}  // namespace

HttpReply handle_verify(const ModelBundle& bundle, std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    return error_reply(400, Errc::ParseError, e.what());
  }
  if (!j.is_object()) return error_reply(400, Errc::ParseError, "body must be a gesture object");
  // The label is ignored and metadata is optional for live requests.
  j["label"] = "unknown";
  if (!j.contains("meta")) j["meta"] = json::object();
  auto& meta = j["meta"];
  if (!meta.is_object()) return error_reply(400, Errc::ParseError, "meta must be an object");
  for (const char* key : {"device_model", "captured_at"}) {
    if (!meta.contains(key)) meta[key] = "";
  }
  if (!meta.contains("orientation")) meta["orientation"] = "portrait";
  if (!meta.contains("source")) meta["source"] = "recorded";
  if (!meta.contains("subject_id") || meta["subject_id"] == "") meta["subject_id"] = "anonymous";
  if (!j.contains("accel")) j["accel"] = nullptr;

  try {
    const GestureSample g = gesture_from_json(j);
    return {200, to_json(verify(bundle, g)).dump()};
  } catch (const Error& e) {
    if (e.code() == Errc::EmptyGesture || e.code() == Errc::DegenerateGesture) {
      return {200, to_json(rejected_verdict(bundle, e.what())).dump()};
    }
    return error_reply(status_for(e.code()), e.code(), e.what());
  }
}

HttpReply handle_synth(const ModelBundle& bundle, std::string_view method, std::string_view seed) {
  std::uint64_t s = 0;
  const auto [end, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), s);
  if (seed.empty() || ec != std::errc() || end != seed.data() + seed.size()) {
    return error_reply(400, Errc::InvalidArgument, "seed must be a non-negative integer");
  }
  try {
    const BotMethod m = parse_bot_method(method);
    if (m == BotMethod::Handcrafted) {
      HandcraftedOptions opts;
      opts.with_accel = bundle.priors.has_accel;
      return {200, to_json(synth_handcrafted(bundle.priors, s, opts)).dump()};
    }
    if (!bundle.touch_gan) {
      return error_reply(404, Errc::ModelMissing, "bundle has no GAN generator");
    }
    const GanModel* accel = bundle.accel_gan ? &*bundle.accel_gan : nullptr;
    return {200, to_json(synth_gan(*bundle.touch_gan, accel, bundle.priors, s)).dump()};
  } catch (const Error& e) {
    return error_reply(status_for(e.code()), e.code(), e.what());
  }
}

HttpReply handle_health(const ModelBundle& bundle, std::string_view hash) {
  return {200, json{{"status", "ok"},
                    {"version", kVersion},
                    {"bundle_hash", hash},
                    {"feature_mode", to_string(bundle.feature_mode)},
                    {"gan", bundle.touch_gan.has_value()}}
                   .dump()};
}

struct Server::Impl {
  ModelBundle bundle;
  std::string hash;
  httplib::Server http;
  std::mutex mu;
  bool listening = false;
  bool stopped = false;
};

Server::Server(ModelBundle bundle) : impl_(std::make_unique<Impl>()) {
  impl_->bundle = std::move(bundle);
  impl_->hash = bundle_hash(impl_->bundle);
  const Impl* state = impl_.get();
  // httplib's default adds SO_REUSEPORT, which lets a second server bind a taken port
  impl_->http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });

  const auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, "application/json");
  };
  impl_->http.Post("/verify", [state, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_verify(state->bundle, req.body));
  });
  impl_->http.Get("/synth", [state, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_synth(state->bundle, req.get_param_value("method"),
                           req.get_param_value("seed")));
  });
  impl_->http.Get("/health", [state, send](const httplib::Request&, httplib::Response& res) {
    send(res, handle_health(state->bundle, state->hash));
  });
  impl_->http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->http.bind_to_any_port(host)
                              : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    throw Error(Errc::BindError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void Server::listen() {
  {
    std::lock_guard lock(impl_->mu);
    if (impl_->stopped) return;
    impl_->listening = true;
  }
  impl_->http.listen_after_bind();
}

void Server::stop() {
  if (!impl_) return;
  bool listening = false;
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopped = true;
    listening = impl_->listening;
  }
  // httplib ignores stop() until the accept loop is running
  if (listening) impl_->http.wait_until_ready();
  impl_->http.stop();
}

}  // namespace becaptcha

#include "teacar/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iterator>
#include <set>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "teacar/digest.hpp"
#include "teacar/error.hpp"
#include "teacar/recorder.hpp"

namespace teacar::gateway {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using json = nlohmann::json;

std::string_view to_string(DriveMode m) {
  return m == DriveMode::manual ? "manual" : "autonomous";
}

DriveMode drive_mode_from_string(std::string_view s) {
  if (s == "manual") return DriveMode::manual;
  if (s == "autonomous") return DriveMode::autonomous;
  throw ValidationError("mode must be \"manual\" or \"autonomous\"");
}

// ---------------------------------------------------------------------------
// Schema

Inbound parse_inbound(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw FormatError("message is not valid JSON");
  }
  if (!j.is_object()) throw FormatError("message must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) throw FormatError("message needs a string \"type\"");
  const std::string type = j["type"].get<std::string>();
  try {
    if (type == "teleop") {
      TeleopIn t;
      for (const auto& a : j.at("axes")) {
        if (!a.is_number()) throw FormatError("teleop axes must be numbers");
        const double v = a.get<double>();
        if (!(std::abs(v) <= 1.0)) throw FormatError("teleop axes must lie in [-1, 1]");
        t.axes.push_back(v);
      }
      if (j.contains("buttons")) {
        for (const auto& b : j["buttons"]) {
          const int v = b.is_boolean() ? static_cast<int>(b.get<bool>()) : b.get<int>();
          if (v != 0 && v != 1) throw FormatError("teleop buttons must be 0 or 1");
          t.buttons.push_back(v);
        }
      }
      return t;
    }
    if (type == "mode") {
      try {
        return ModeIn{drive_mode_from_string(j.at("value").get<std::string>())};
      } catch (const ValidationError& e) {
        throw FormatError(e.what());
      }
    }
    if (type == "record") {
      const auto& v = j.at("value");
      if (v.is_boolean()) return RecordIn{v.get<bool>()};
      const auto s = v.get<std::string>();
      if (s == "start") return RecordIn{true};
      if (s == "stop") return RecordIn{false};
      throw FormatError("record value must be true/false or \"start\"/\"stop\"");
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed \"" + type + "\" message: " + e.what());
  }
  if (type == "telemetry" || type == "frame" || type == "status") {
    throw FormatError("\"" + type + "\" messages are sent by the server only");
  }
  throw FormatError("unknown message type \"" + type + "\"");
}

std::string telemetry_json(const Telemetry& t) {
  nlohmann::ordered_json j;
  j["type"] = "telemetry";
  j["t"] = t.t_ns;
  j["pose"] = {{"x", t.x}, {"y", t.y}, {"heading", t.heading}};
  j["speed"] = t.speed;
  j["steering"] = t.steering;
  j["throttle"] = t.throttle;
  j["battery_v"] = t.battery_v;
  j["rails"] = {{"enabled", t.rails_enabled}, {"tripped", t.rails_tripped}};
  j["lap"] = t.lap;
  j["latency_ms"] = t.latency_ms;
  j["pwm"] = {{"servo_us", t.servo_us}, {"motor_us", t.motor_us}};
  j["mode"] = to_string(t.mode);
  j["recording"] = t.recording;
  return j.dump();
}

std::string frame_json(const ImageMsg& image) {
  const auto ppm = recorder::encode_ppm(image.data());
  nlohmann::ordered_json j;
  j["type"] = "frame";
  j["t"] = image.header.stamp.nanos;
  j["ppm_b64"] = base64_encode(ppm);
  return j.dump();
}

std::string status_json(DriveMode mode, bool recording, std::optional<std::string> error) {
  nlohmann::ordered_json j;
  j["type"] = "status";
  j["mode"] = to_string(mode);
  j["recording"] = recording;
  if (error) j["error"] = *error;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Hub

Hub::Hub(Bus& bus, Topic<JoyMsg> joy_topic, std::vector<actuation::Actuator*> actuators,
         std::string joystick_source, std::vector<std::string> autonomous_sources)
    : bus_(bus),
      joy_topic_(std::move(joy_topic)),
      actuators_(std::move(actuators)),
      joystick_source_(std::move(joystick_source)),
      autonomous_sources_(std::move(autonomous_sources)) {
  set_mode(DriveMode::manual);
}

void Hub::set_mode(DriveMode mode) {
  std::lock_guard lock(mutex_);
  mode_ = mode;
  std::set<std::string> muted;
  if (mode == DriveMode::autonomous) {
    muted.insert(joystick_source_);
  } else {
    muted.insert(autonomous_sources_.begin(), autonomous_sources_.end());
  }
  for (auto* a : actuators_) a->set_muted_sources(muted);
}

DriveMode Hub::mode() const {
  std::lock_guard lock(mutex_);
  return mode_;
}

bool Hub::recording() const {
  std::lock_guard lock(mutex_);
  return recording_;
}

void Hub::set_record_hook(RecordHook hook) {
  std::lock_guard lock(mutex_);
  record_hook_ = std::move(hook);
}

Hub::Reply Hub::handle(std::string_view text) {
  Reply reply;
  try {
    const Inbound in = parse_inbound(text);
    if (const auto* t = std::get_if<TeleopIn>(&in)) {
      JoyMsg joy;
      joy.header.stamp = bus_.now();
      joy.axes = t->axes;
      joy.buttons = t->buttons;
      bus_.publish(joy_topic_, std::move(joy));
      ++teleop_count_;
    } else if (const auto* m = std::get_if<ModeIn>(&in)) {
      set_mode(m->mode);
      reply.broadcast = status_json(mode(), recording());
    } else if (const auto* r = std::get_if<RecordIn>(&in)) {
      RecordHook hook;
      {
        std::lock_guard lock(mutex_);
        hook = record_hook_;
      }
      if (!hook) throw StateError("recording is not available on this server");
      const bool state = hook(r->enable);
      {
        std::lock_guard lock(mutex_);
        recording_ = state;
      }
      reply.broadcast = status_json(mode(), state);
    }
  } catch (const Error& e) {
    ++error_count_;
    reply.to_sender = status_json(mode(), recording(), std::string(e.what()));
  } catch (const std::exception& e) {
    ++error_count_;
    reply.to_sender = status_json(mode(), recording(), std::string("internal error: ") + e.what());
  }
  return reply;
}

// ---------------------------------------------------------------------------
// Server

namespace {

std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

class WsSession;

}  // namespace

struct Server::Impl : std::enable_shared_from_this<Server::Impl> {
  Impl(Hub& h, ServerOptions o) : hub(h), options(std::move(o)), acceptor(ioc), ticker(ioc) {}

  Hub& hub;
  ServerOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::steady_timer ticker;
  std::thread thread;
  std::uint16_t bound_port = 0;
  bool running = false;

  mutable std::mutex mutex;  // guards the hand-over fields below
  std::string telemetry;
  std::uint64_t telemetry_seq = 0;
  std::shared_ptr<const std::string> frame;
  std::uint64_t frame_seq = 0;
  std::atomic<std::size_t> client_count{0};

  // I/O thread only.
  std::vector<std::weak_ptr<WsSession>> sessions;
  std::chrono::steady_clock::time_point next_telemetry{};

  void accept();
  void tick();
  void broadcast(const std::string& text);
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::shared_ptr<Server::Impl> server)
      : ws_(std::move(socket)), server_(std::move(server)) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      ++self->server_->client_count;
      self->read();
    });
  }

  void send(std::shared_ptr<const std::string> text) {
    if (!open_) return;
    queue_.push_back(std::move(text));
    if (!writing_) write_next();
  }

  void close() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

  bool open() const { return open_; }
  std::size_t queued() const { return queue_.size(); }
  std::chrono::steady_clock::time_point last_frame{};
  std::uint64_t frame_seq = 0;

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      const Hub::Reply r = self->server_->hub.handle(text);
      if (r.to_sender) self->send(std::make_shared<const std::string>(*r.to_sender));
      if (r.broadcast) self->server_->broadcast(*r.broadcast);
      self->read();
    });
  }

  void write_next() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->queue_.pop_front();
                      if (ec) {
                        self->closed();
                        return;
                      }
                      if (self->queue_.empty()) {
                        self->writing_ = false;
                      } else {
                        self->write_next();
                      }
                    });
  }

  void closed() {
    if (open_) --server_->client_count;
    open_ = false;
    queue_.clear();
    writing_ = false;
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Server::Impl> server_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool writing_ = false;
  bool open_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, std::shared_ptr<Server::Impl> server)
      : stream_(std::move(socket)), server_(std::move(server)) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (!ec) self->dispatch();
                     });
  }

 private:
  void dispatch() {
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      auto ws = std::make_shared<WsSession>(stream_.release_socket(), server_);
      server_->sessions.push_back(ws);
      ws->run(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(false);
    res->result(http::status::not_found);
    res->set(http::field::content_type, "text/plain");
    res->body() = "not found\n";
    if (req_.method() == http::verb::get && server_->options.static_dir) {
      std::string target(req_.target());
      if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
      if (target.empty() || target.back() == '/') target += "index.html";
      if (target.find("..") == std::string::npos) {
        const auto path = *server_->options.static_dir / target.substr(1);
        std::ifstream in(path, std::ios::binary);
        if (in) {
          res->result(http::status::ok);
          res->set(http::field::content_type, std::string(mime_type(path)));
          res->body().assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
      }
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ec;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<Server::Impl> server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

void Server::Impl::accept() {
  acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpSession>(std::move(socket), self)->run();
    self->accept();
  });
}

void Server::Impl::broadcast(const std::string& text) {
  auto msg = std::make_shared<const std::string>(text);
  for (auto& w : sessions) {
    if (auto s = w.lock()) s->send(msg);
  }
}

void Server::Impl::tick() {
  const auto now = std::chrono::steady_clock::now();
  std::erase_if(sessions, [](const std::weak_ptr<WsSession>& w) {
    auto s = w.lock();
    return !s;
  });

  std::shared_ptr<const std::string> telemetry_msg;
  std::shared_ptr<const std::string> frame_msg;
  std::uint64_t fseq = 0;
  {
    std::lock_guard lock(mutex);
    if (now >= next_telemetry && telemetry_seq > 0) {
      telemetry_msg = std::make_shared<const std::string>(telemetry);
      next_telemetry = now + options.telemetry_period;
    }
    frame_msg = frame;
    fseq = frame_seq;
  }
  for (auto& w : sessions) {
    auto s = w.lock();
    if (!s || !s->open()) continue;
    if (telemetry_msg) s->send(telemetry_msg);
    // Frames are dropped rather than queued behind a slow client.
    if (frame_msg && fseq != s->frame_seq && now - s->last_frame >= options.frame_interval &&
        s->queued() < 2) {
      s->send(frame_msg);
      s->frame_seq = fseq;
      s->last_frame = now;
    }
  }
  ticker.expires_after(std::chrono::milliseconds(5));
  ticker.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (!ec) self->tick();
  });
}

Server::Server(Hub& hub, ServerOptions options)
    : impl_(std::make_shared<Impl>(hub, std::move(options))) {}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->running) return;
  try {
    const tcp::endpoint ep(asio::ip::make_address(impl_->options.address), impl_->options.port);
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen();
    impl_->bound_port = impl_->acceptor.local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    throw ConfigError("cannot listen on " + impl_->options.address + ":" +
                      std::to_string(impl_->options.port) + ": " + e.what());
  }
  impl_->running = true;
  impl_->accept();
  impl_->tick();
  impl_->thread = std::thread([impl = impl_] { impl->ioc.run(); });
}

void Server::stop() {
  if (!impl_->running) return;
  impl_->running = false;
  asio::post(impl_->ioc, [impl = impl_] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    impl->ticker.cancel();
    for (auto& w : impl->sessions) {
      if (auto s = w.lock()) s->close();
    }
    impl->ioc.stop();
  });
  if (impl_->thread.joinable()) impl_->thread.join();
  // Run the aborted completions so sessions release their references.
  impl_->ioc.restart();
  impl_->ioc.poll();
  impl_->sessions.clear();
}

std::uint16_t Server::port() const { return impl_->bound_port; }

std::size_t Server::clients() const { return impl_->client_count.load(); }

void Server::update_telemetry(const Telemetry& t) {
  std::string text = telemetry_json(t);
  std::lock_guard lock(impl_->mutex);
  impl_->telemetry = std::move(text);
  ++impl_->telemetry_seq;
}

void Server::update_frame(const ImageMsg& image) {
  if (clients() == 0) return;
  auto text = std::make_shared<const std::string>(frame_json(image));
  std::lock_guard lock(impl_->mutex);
  impl_->frame = std::move(text);
  ++impl_->frame_seq;
}

}  // namespace teacar::gateway

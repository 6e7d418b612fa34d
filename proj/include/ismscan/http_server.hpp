#pragma once

// HTTP control surface and WebSocket stream for an AcquisitionService.
//
//   GET  /profiles      profile list
//   GET  /status        session status
//   POST /session       start a session (201, 409 while one runs)
//   POST /session/stop  stop the running session
//   GET  /spectrum      current analysis snapshot
//   GET  /export.csv    analysis CSV
//   GET  /scenes        shipped environment files
//   GET  /stream        WebSocket: {"type":"frame",...} and {"type":"status",...}
//
// One thread per connection; stop() shuts every socket down so blocked
// reads and writes return.

#include <sys/socket.h>

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "ismscan/error.hpp"
#include "ismscan/service.hpp"

namespace ismscan {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
using tcp = boost::asio::ip::tcp;

class HttpServer {
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

public:
  // Binds immediately; port 0 picks an ephemeral port.
  HttpServer(AcquisitionService& service, const std::string& host, unsigned short port)
      : service_(service), acceptor_(ioc_) {
    boost::system::error_code ec;
    const auto address = net::ip::make_address(host, ec);
    if (ec) throw ConfigError("invalid listen address '" + host + "'");
    const tcp::endpoint endpoint(address, port);
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec)
      throw ConfigError("cannot bind " + host + ":" + std::to_string(port) + ": " + ec.message());
  }

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  ~HttpServer() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(acceptor_.native_handle(), SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    {
      std::lock_guard lock(mutex_);
      for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    std::list<Worker> threads;
    {
      std::lock_guard lock(mutex_);
      threads.swap(threads_);
    }
    for (auto& w : threads)
      if (w.thread.joinable()) w.thread.join();
    boost::system::error_code ec;
    acceptor_.close(ec);
  }

  // Interval between status messages on an idle stream.
  std::chrono::milliseconds status_interval{1000};

private:
  void accept_loop() {
    while (!stopping_) {
      tcp::socket socket(ioc_);
      boost::system::error_code ec;
      acceptor_.accept(socket, ec);
      if (stopping_) break;
      if (ec) continue;
      std::lock_guard lock(mutex_);
      reap_finished();
      open_fds_.insert(socket.native_handle());
      auto done = std::make_shared<std::atomic<bool>>(false);
      threads_.push_back(Worker{std::thread([this, done, s = std::move(socket)]() mutable {
                                  serve(std::move(s));
                                  done->store(true);
                                }),
                                done});
    }
  }

  // Caller holds mutex_.
  void reap_finished() {
    for (auto it = threads_.begin(); it != threads_.end();) {
      if (it->done->load()) {
        it->thread.join();
        it = threads_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void serve(tcp::socket socket) {
    const int fd = socket.native_handle();
    try {
      beast::flat_buffer buffer;
      for (;;) {
        http::request<http::string_body> req;
        boost::system::error_code ec;
        http::read(socket, buffer, req, ec);
        if (ec) break;
        if (websocket::is_upgrade(req)) {
          if (req.target() == "/stream") stream(socket, std::move(req));
          break;
        }
        auto res = handle(req);
        http::write(socket, res, ec);
        if (ec || !res.keep_alive()) break;
      }
    } catch (const std::exception&) {
      // connection-level failure; drop the client
    }
    {
      std::lock_guard lock(mutex_);
      open_fds_.erase(fd);
    }
    boost::system::error_code ec;
    socket.shutdown(tcp::socket::shutdown_both, ec);
    socket.close(ec);
  }

  // Reads and writes run on a private io_context so a close frame from the
  // client is answered while messages are still being pushed.
  void stream(tcp::socket& socket, http::request<http::string_body> req) {
    using Message = Subscription::Message;
    net::io_context ioc;
    const auto protocol = socket.local_endpoint().protocol();
    websocket::stream<tcp::socket> ws(tcp::socket(ioc, protocol, socket.release()));
    boost::system::error_code ec;
    ws.accept(req, ec);
    if (!ec) {
      ws.text(true);
      auto sub = service_.subscribe();
      std::deque<Message> outbox;
      bool writing = false;
      bool closing = false;
      bool finished = false;
      websocket::close_reason why(websocket::close_code::going_away);
      beast::flat_buffer inbound;
      net::steady_timer tick(ioc);
      auto last_status = std::chrono::steady_clock::now();

      const auto finish = [&] {
        finished = true;
        tick.cancel();
        boost::system::error_code ignored;
        ws.next_layer().cancel(ignored);
      };
      std::function<void()> pump = [&] {
        if (writing || finished) return;
        if (!outbox.empty()) {
          writing = true;
          auto m = std::move(outbox.front());
          outbox.pop_front();
          ws.async_write(net::buffer(*m), [&, m](boost::system::error_code e, std::size_t) {
            writing = false;
            if (e) return finish();
            pump();
          });
        } else if (closing) {
          writing = true;
          ws.async_close(why, [&](boost::system::error_code) { finish(); });
        }
      };
      std::function<void()> read_next = [&] {
        ws.async_read(inbound, [&](boost::system::error_code e, std::size_t) {
          if (e) return finish();
          inbound.clear();
          read_next();
        });
      };
      std::function<void()> on_tick = [&] {
        if (finished) return;
        bool idle = true;
        while (auto m = sub->pop(std::chrono::milliseconds(0))) {
          outbox.push_back(std::move(*m));
          idle = false;
        }
        if (!closing && sub->dropped()) {
          closing = true;
          why = websocket::close_reason(websocket::close_code::policy_error,
                                        "subscriber queue overflow");
        } else if (!closing && stopping_) {
          closing = true;
        }
        const auto now = std::chrono::steady_clock::now();
        if (!closing && idle && now - last_status >= status_interval) {
          outbox.push_back(std::make_shared<const std::string>(status_message(service_.status())));
          last_status = now;
        }
        pump();
        if (closing) return;
        tick.expires_after(std::chrono::milliseconds(10));
        tick.async_wait([&](boost::system::error_code e) {
          if (!e) on_tick();
        });
      };

      outbox.push_back(std::make_shared<const std::string>(status_message(service_.status())));
      read_next();
      on_tick();
      ioc.run();
      sub->close();
    }
    // Hand the descriptor back so serve() closes it after deregistering it.
    boost::system::error_code ignored;
    const auto fd = ws.next_layer().release(ignored);
    if (!ignored) socket.assign(protocol, fd, ignored);
  }

  static http::response<http::string_body> reply(const http::request<http::string_body>& req,
                                                 http::status code, std::string body,
                                                 std::string_view type = "application/json") {
    http::response<http::string_body> res{code, req.version()};
    res.set(http::field::server, "ismscan");
    res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  }

  static http::response<http::string_body> error_reply(const http::request<http::string_body>& req,
                                                       http::status code, const std::string& what) {
    return reply(req, code, nlohmann::json{{"error", what}}.dump());
  }

  http::response<http::string_body> handle(const http::request<http::string_body>& req) {
    const std::string target(req.target());
    const std::string path = target.substr(0, target.find('?'));
    const auto method = req.method();
    auto only = [&](http::verb v) { return method == v; };

    try {
      if (path == "/profiles") {
        if (!only(http::verb::get)) return error_reply(req, http::status::method_not_allowed, "GET only");
        nlohmann::json list = nlohmann::json::array();
        for (const auto& p : builtin_profiles()) list.push_back(to_json(p));
        return reply(req, http::status::ok, list.dump());
      }
      if (path == "/status") {
        if (!only(http::verb::get)) return error_reply(req, http::status::method_not_allowed, "GET only");
        return reply(req, http::status::ok, to_json(service_.status()).dump());
      }
      if (path == "/session") {
        if (!only(http::verb::post)) return error_reply(req, http::status::method_not_allowed, "POST only");
        nlohmann::json body;
        try {
          body = nlohmann::json::parse(req.body());
        } catch (const nlohmann::json::parse_error& e) {
          return error_reply(req, http::status::bad_request, e.what());
        }
        service_.start(session_config_from_json(body));
        return reply(req, http::status::created, to_json(service_.status()).dump());
      }
      if (path == "/session/stop") {
        if (!only(http::verb::post)) return error_reply(req, http::status::method_not_allowed, "POST only");
        service_.stop();
        return reply(req, http::status::ok, to_json(service_.status()).dump());
      }
      if (path == "/spectrum") {
        if (!only(http::verb::get)) return error_reply(req, http::status::method_not_allowed, "GET only");
        auto s = service_.spectrum();
        if (!s) return error_reply(req, http::status::not_found, "no frames analysed yet");
        return reply(req, http::status::ok, to_json(*s).dump());
      }
      if (path == "/export.csv") {
        if (!only(http::verb::get)) return error_reply(req, http::status::method_not_allowed, "GET only");
        auto s = service_.spectrum();
        if (!s) return error_reply(req, http::status::not_found, "no frames analysed yet");
        auto res = reply(req, http::status::ok, export_csv(*s), "text/csv");
        res.set(http::field::content_disposition, "attachment; filename=\"spectrum.csv\"");
        res.prepare_payload();
        return res;
      }
      if (path == "/scenes") {
        if (!only(http::verb::get)) return error_reply(req, http::status::method_not_allowed, "GET only");
        return reply(req, http::status::ok, service_.scenes().dump());
      }
      return error_reply(req, http::status::not_found, "no route for " + path);
    } catch (const ConflictError& e) {
      return error_reply(req, http::status::conflict, e.what());
    } catch (const Error& e) {
      return error_reply(req, http::status::bad_request, e.what());
    }
  }

  AcquisitionService& service_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mutex_;
  std::set<int> open_fds_;
  std::list<Worker> threads_;
};

}  // namespace ismscan

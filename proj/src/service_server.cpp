#include <atomic>
#include <csignal>
#include <chrono>
#include <deque>
#include <iostream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "predsim/service.hpp"

namespace predsim {

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

// Timer granularity for advancing channels; ticks and injected delays are
// resolved to within this.
constexpr auto kPump = std::chrono::milliseconds(1);

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::string id, const ChannelConfig& cfg)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        channel_(std::move(id), cfg),
        start_(std::chrono::steady_clock::now()) {}

  void run() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
  }

 private:
  double now_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

  void on_accept(beast::error_code ec) {
    if (ec) return;
    do_read();
    schedule();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      timer_.cancel();
      return;
    }
    channel_.handle_message(now_ms(), beast::buffers_to_string(buffer_.data()));
    buffer_.consume(buffer_.size());
    pump();
    do_read();
  }

  void schedule() {
    if (closed_) return;
    timer_.expires_after(kPump);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closed_) return;
      self->channel_.advance(self->now_ms());
      self->pump();
      self->schedule();
    });
  }

  // One write in flight at a time; anything else waits in the channel's
  // bounded outbox.
  void pump() {
    if (writing_ || closed_) return;
    auto msg = channel_.pop_outbox();
    if (!msg) return;
    writing_ = true;
    current_ = std::move(*msg);
    ws_.async_write(net::buffer(current_), beast::bind_front_handler(&Connection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      closed_ = true;
      timer_.cancel();
      return;
    }
    pump();
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  beast::flat_buffer buffer_;
  SessionChannel channel_;
  std::chrono::steady_clock::time_point start_;
  std::string current_;
  bool writing_{false};
  bool closed_{false};
};

}  // namespace

struct WsServer::Impl {
  std::string host;
  std::uint16_t port;
  ChannelConfig channel;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;
  std::atomic<std::uint64_t> next_id{1};
  std::optional<net::executor_work_guard<net::io_context::executor_type>> guard;

  void do_accept() {
    // Each connection gets its own strand so a session runs sequentially.
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(std::move(socket), "s" + std::to_string(next_id++), channel)->run();
      do_accept();
    });
  }
};

WsServer::WsServer(std::string host, std::uint16_t port, ChannelConfig channel) : impl_(std::make_unique<Impl>()) {
  impl_->host = std::move(host);
  impl_->port = port;
  impl_->channel = std::move(channel);
}

WsServer::~WsServer() { stop(); }

std::uint16_t WsServer::start(unsigned threads) {
  const tcp::endpoint ep(net::ip::make_address(impl_->host), impl_->port);
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen(net::socket_base::max_listen_connections);
  impl_->guard.emplace(net::make_work_guard(impl_->ioc));
  impl_->do_accept();
  for (unsigned i = 0; i < std::max(1u, threads); ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  return impl_->acceptor.local_endpoint().port();
}

void WsServer::wait() {
  for (auto& t : impl_->threads) {
    if (t.joinable()) t.join();
  }
}

void WsServer::wait_for_signal() {
  net::signal_set signals(impl_->ioc, SIGINT, SIGTERM);
  signals.async_wait([this](beast::error_code, int) {
    impl_->guard.reset();
    impl_->ioc.stop();
  });
  wait();
}

void WsServer::stop() {
  if (!impl_) return;
  impl_->guard.reset();
  impl_->ioc.stop();
  wait();
}

}  // namespace predsim

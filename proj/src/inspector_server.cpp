#include <atomic>
#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include "octobatch/inspector.hpp"

namespace octobatch {

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;

class MessageLog {
 public:
  explicit MessageLog(const std::optional<std::filesystem::path>& path) {
    if (path) {
      out_.open(*path, std::ios::app);
      if (!out_) throw std::runtime_error("cannot open record file " + path->string());
    }
  }
  void append(const std::string& client, std::string_view text) {
    if (!out_.is_open()) return;
    std::string line(text);
    for (auto& c : line) {
      if (c == '\n' || c == '\r') c = ' ';
    }
    std::lock_guard lock(mutex_);
    out_ << client << '\t' << line << '\n';
    out_.flush();
  }

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

// One WebSocket connection and its session. All handlers run on the
// connection's strand, so message handling and frame pacing never overlap.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::string id, MessageLog& log)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), session_(id), id_(std::move(id)), log_(log) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    read();
  }

  void read() { ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      timer_.cancel();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    log_.append(id_, text);
    const int fps_before = session_.fps();
    for (const auto& reply : session_.handle(text)) send(reply.dump());
    update_pacer(fps_before != session_.fps());
    read();
  }

  // Frame deadlines are absolute (base + k * period), so pacing does not
  // drift however long individual frames take.
  void update_pacer(bool speed_changed) {
    if (!session_.running()) {
      if (pacing_) {
        pacing_ = false;
        ++generation_;
        timer_.cancel();
      }
      return;
    }
    if (pacing_ && !speed_changed) return;
    pacing_ = true;
    ++generation_;
    base_ = Clock::now();
    ticks_ = 0;
    arm();
  }

  Clock::duration period() const {
    return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / session_.fps()));
  }

  void arm() {
    timer_.expires_at(base_ + period() * static_cast<long>(ticks_ + 1));
    timer_.async_wait(
        [self = shared_from_this(), gen = generation_](beast::error_code ec) { self->on_timer(ec, gen); });
  }

  void on_timer(beast::error_code ec, std::uint64_t gen) {
    if (ec || gen != generation_ || closed_ || !session_.running()) return;
    // Catch up on missed deadlines, but never more than a few frames at once.
    const auto due = static_cast<std::uint64_t>((Clock::now() - base_) / period());
    int budget = 4;
    do {
      ++ticks_;
      for (const auto& ev : session_.tick()) send(ev.dump());
    } while (ticks_ < due && --budget > 0);
    if (ticks_ < due) {
      base_ = Clock::now();
      ticks_ = 0;
    }
    arm();
  }

  void send(std::string text) {
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write();
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), beast::bind_front_handler(&Connection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      timer_.cancel();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  Session session_;
  std::string id_;
  MessageLog& log_;
  bool pacing_ = false;
  bool closed_ = false;
  std::uint64_t generation_ = 0;
  Clock::time_point base_{};
  std::uint64_t ticks_ = 0;
};

}  // namespace

struct InspectorServer::Impl {
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  MessageLog log;
  std::thread thread;
  std::uint64_t next_id = 0;

  explicit Impl(const ServerOptions& options) : log(options.record_path) {
    try {
      const tcp::endpoint endpoint(net::ip::make_address(options.address), options.port);
      acceptor.open(endpoint.protocol());
      acceptor.set_option(net::socket_base::reuse_address(true));
      acceptor.bind(endpoint);
      acceptor.listen(net::socket_base::max_listen_connections);
    } catch (const boost::system::system_error& e) {
      throw BindError("cannot bind " + options.address + ":" + std::to_string(options.port) + ": " + e.what());
    }
    accept();
  }

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(std::move(socket), "c" + std::to_string(++next_id), log)->start();
      accept();
    });
  }
};

InspectorServer::InspectorServer(ServerOptions options) : impl_(std::make_unique<Impl>(options)) {}

InspectorServer::~InspectorServer() { stop(); }

unsigned short InspectorServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void InspectorServer::run() { impl_->ioc.run(); }

void InspectorServer::start() {
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void InspectorServer::stop() {
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::vector<std::string> replay_over_websocket(const std::string& host, unsigned short port,
                                               const std::vector<std::string>& messages) {
  std::size_t expected = 0;
  for (const auto& m : messages) {
    const auto j = nlohmann::json::parse(m, nullptr, false);
    if (j.is_object() && j.value("type", "") == "export_manifest") ++expected;
  }
  if (expected == 0) throw std::invalid_argument("message log needs at least one export_manifest to end the replay");

  net::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  net::connect(ws.next_layer(), resolver.resolve(host, std::to_string(port)));
  ws.handshake(host + ":" + std::to_string(port), "/");
  ws.text(true);
  for (const auto& m : messages) ws.write(net::buffer(m));

  std::vector<std::string> received;
  std::size_t manifests = 0;
  while (manifests < expected) {
    beast::flat_buffer buffer;
    ws.read(buffer);
    received.push_back(beast::buffers_to_string(buffer.data()));
    const auto j = nlohmann::json::parse(received.back(), nullptr, false);
    if (j.is_object() && j.value("type", "") == "manifest") ++manifests;
  }
  beast::error_code ec;
  ws.close(websocket::close_code::normal, ec);
  return received;
}

}  // namespace octobatch

#include "ncd/scorers/remote.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>

#include "ncd/core/error.hpp"

namespace ncd {
namespace {

using Kind = RemoteScorerError::Kind;

void send_all(int fd, std::string_view data, const std::string& id) {
  while (!data.empty()) {
    auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw RemoteScorerError(Kind::transport, id, std::string("send failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw ConfigError("endpoint must be host:port, got '" + text + "'");
  Endpoint e;
  if (colon > 0) e.host = text.substr(0, colon);
  try {
    e.port = std::stoi(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in endpoint '" + text + "'");
  }
  if (e.port <= 0 || e.port > 65535) throw ConfigError("port out of range in endpoint '" + text + "'");
  return e;
}

std::string Endpoint::to_string() const { return host + ":" + std::to_string(port); }

RemoteSession::RemoteSession(const Endpoint& endpoint, std::chrono::milliseconds timeout) : timeout_(timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  auto port = std::to_string(endpoint.port);
  if (int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &result); rc != 0) {
    throw RemoteScorerError(Kind::transport, "", "cannot resolve " + endpoint.to_string() + ": " + gai_strerror(rc));
  }
  for (auto* ai = result; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(result);
  if (fd_ < 0) throw RemoteScorerError(Kind::transport, "", "cannot connect to " + endpoint.to_string());
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

RemoteSession::~RemoteSession() {
  if (fd_ >= 0) ::close(fd_);
}

std::string RemoteSession::read_line(const std::string& id) {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw RemoteScorerError(Kind::timeout, id, "timed out waiting for scorer reply");
    pollfd p{fd_, POLLIN, 0};
    int ready = ::poll(&p, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready == 0) throw RemoteScorerError(Kind::timeout, id, "timed out waiting for scorer reply");
    char chunk[65536];
    auto n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw RemoteScorerError(Kind::transport, id, "scorer connection closed");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string RemoteSession::exchange(const std::string& line, const std::string& request_id) {
  send_all(fd_, line, request_id);
  return read_line(request_id);
}

wire::Response RemoteSession::call(const wire::Request& request) {
  auto line = exchange(wire::encode(request), request.id);
  try {
    return wire::decode_response(line);
  } catch (const DataError& e) {
    throw RemoteScorerError(Kind::malformed_reply, request.id, e.what());
  }
}

RemoteScorer::RemoteScorer(Endpoint endpoint, std::size_t vocab_size, std::chrono::milliseconds timeout,
                           double tolerance)
    : endpoint_(std::move(endpoint)), vocab_size_(vocab_size), timeout_(timeout), tolerance_(tolerance) {}

std::string RemoteScorer::next_id() const { return "r" + std::to_string(counter_.fetch_add(1)); }

wire::Response RemoteScorer::round_trip(const wire::Request& request) const {
  std::unique_ptr<RemoteSession> session;
  {
    std::lock_guard lock(pool_mutex_);
    if (!idle_.empty()) {
      session = std::move(idle_.back());
      idle_.pop_back();
    }
  }
  if (!session) session = std::make_unique<RemoteSession>(endpoint_, timeout_);
  // a session that threw is dropped rather than returned to the pool
  auto response = session->call(request);
  {
    std::lock_guard lock(pool_mutex_);
    idle_.push_back(std::move(session));
  }
  if (response.id != request.id) {
    throw RemoteScorerError(Kind::malformed_reply, request.id,
                            "reply id '" + response.id + "' does not match request id");
  }
  if (response.error) throw RemoteScorerError(Kind::server, request.id, "scorer error: " + *response.error);
  return response;
}

LogProbVector RemoteScorer::next_token_logprobs(const Condition& condition, std::span<const TokenId> prefix) const {
  auto request = wire::make_request(next_id(), wire::Op::next, condition, prefix);
  auto response = round_trip(request);
  if (!response.logprobs || response.logprobs->size() != vocab_size_) {
    throw RemoteScorerError(Kind::malformed_reply, request.id, "reply must carry exactly |V| log-probabilities");
  }
  LogProbVector out = Eigen::Map<const Eigen::VectorXd>(response.logprobs->data(),
                                                        static_cast<Eigen::Index>(response.logprobs->size()));
  if (!is_normalized(out, tolerance_)) {
    throw RemoteScorerError(Kind::normalization, request.id, "remote distribution is not normalized");
  }
  return out;
}

double RemoteScorer::sequence_logprob(const Condition& condition, std::span<const TokenId> framed) const {
  auto request = wire::make_request(next_id(), wire::Op::seq, condition, framed);
  auto response = round_trip(request);
  if (!response.logprob) throw RemoteScorerError(Kind::malformed_reply, request.id, "reply lacks logprob");
  if (*response.logprob > tolerance_) {
    throw RemoteScorerError(Kind::normalization, request.id, "sequence log-probability above zero");
  }
  return *response.logprob;
}

ScorerServer::ScorerServer(const Scorer* direct, const Scorer* channel, const Scorer* lm)
    : direct_(direct), channel_(channel), lm_(lm) {}

ScorerServer::~ScorerServer() { stop(); }

int ScorerServer::start(int port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("cannot listen on port " + std::to_string(port) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  return ntohs(addr.sin_port);
}

void ScorerServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    int ready = ::poll(&p, 1, 100);
    if (ready <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(workers_mutex_);
    connections_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void ScorerServer::serve_connection(int fd) {
  std::string buffer;
  char chunk[65536];
  while (running_) {
    pollfd p{fd, POLLIN, 0};
    int ready = ::poll(&p, 1, 100);
    if (ready < 0 && errno != EINTR) break;
    if (ready <= 0) continue;
    auto n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto reply = wire::answer_line(line, direct_, channel_, lm_);
      try {
        send_all(fd, reply, "");
      } catch (const RemoteScorerError&) {
        return;
      }
    }
  }
}

void ScorerServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mutex_);
    for (int fd : connections_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  for (int fd : connections_) ::close(fd);
  connections_.clear();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

void ScorerServer::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

}  // namespace ncd

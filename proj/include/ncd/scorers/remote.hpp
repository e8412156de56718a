#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ncd/scorers/scorer.hpp"
#include "ncd/scorers/wire.hpp"

namespace ncd {

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 0;

  /// "host:port" or ":port".
  static Endpoint parse(const std::string& text);
  std::string to_string() const;
};

/// One TCP connection speaking the line protocol. Requests are strictly
/// sequential: one in flight at a time.
class RemoteSession {
 public:
  RemoteSession(const Endpoint& endpoint, std::chrono::milliseconds timeout);
  ~RemoteSession();
  RemoteSession(const RemoteSession&) = delete;
  RemoteSession& operator=(const RemoteSession&) = delete;

  /// Sends a request and waits for the matching response.
  wire::Response call(const wire::Request& request);

  /// Raw line exchange, used by protocol tests.
  std::string exchange(const std::string& line, const std::string& request_id);

 private:
  std::string read_line(const std::string& request_id);

  int fd_ = -1;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
};

/// Scorer backed by a remote process. Keeps a small pool of sessions so it
/// can be called from several workers at once.
class RemoteScorer final : public Scorer {
 public:
  RemoteScorer(Endpoint endpoint, std::size_t vocab_size,
               std::chrono::milliseconds timeout = std::chrono::milliseconds(10000), double tolerance = 1e-4);

  std::size_t vocab_size() const override { return vocab_size_; }
  LogProbVector next_token_logprobs(const Condition& condition, std::span<const TokenId> prefix) const override;
  double sequence_logprob(const Condition& condition, std::span<const TokenId> framed) const override;

 private:
  wire::Response round_trip(const wire::Request& request) const;
  std::string next_id() const;

  Endpoint endpoint_;
  std::size_t vocab_size_;
  std::chrono::milliseconds timeout_;
  double tolerance_;
  mutable std::mutex pool_mutex_;
  mutable std::vector<std::unique_ptr<RemoteSession>> idle_;
  mutable std::atomic<std::uint64_t> counter_{0};
};

/// TCP server answering the scorer protocol from local scorers. Each
/// connection is served by its own thread, requests in order.
class ScorerServer {
 public:
  ScorerServer(const Scorer* direct, const Scorer* channel, const Scorer* lm);
  ~ScorerServer();
  ScorerServer(const ScorerServer&) = delete;
  ScorerServer& operator=(const ScorerServer&) = delete;

  /// Binds 127.0.0.1:port (0 picks a free port) and starts accepting in a
  /// background thread. Returns the bound port.
  int start(int port = 0);
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();

 private:
  void accept_loop();
  void serve_connection(int fd);

  const Scorer* direct_;
  const Scorer* channel_;
  const Scorer* lm_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> connections_;
};

}  // namespace ncd

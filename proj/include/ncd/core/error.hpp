#pragma once

#include <stdexcept>
#include <string>

namespace ncd {

/// Invalid configuration: bad spec values, guard violations, empty inputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (dataset lines, model files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while obtaining scores from a scorer.
class ScorerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Remote scorer errors carry the id of the request that failed.
class RemoteScorerError : public ScorerError {
 public:
  enum class Kind { transport, timeout, malformed_reply, normalization, server };

  RemoteScorerError(Kind kind, std::string request_id, const std::string& what)
      : ScorerError(what), kind_(kind), request_id_(std::move(request_id)) {}

  Kind kind() const { return kind_; }
  const std::string& request_id() const { return request_id_; }
  bool retriable() const { return kind_ == Kind::transport || kind_ == Kind::timeout; }

 private:
  Kind kind_;
  std::string request_id_;
};

}  // namespace ncd

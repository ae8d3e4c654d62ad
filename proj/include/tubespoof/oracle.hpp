#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "tubespoof/asi.hpp"
#include "tubespoof/signal.hpp"

namespace tubespoof {

/// Black-box identification model: audio in, label and scores out.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual const std::vector<std::string>& labels() const = 0;
  virtual Identification identify(const AudioBuffer& buf) = 0;
};

class SurrogateOracle final : public Oracle {
 public:
  explicit SurrogateOracle(const SpeakerModel& model) : model_(model) {}

  const std::vector<std::string>& labels() const override { return model_.labels(); }
  Identification identify(const AudioBuffer& buf) override { return model_.identify(buf); }
  const SpeakerModel& model() const noexcept { return model_; }

 private:
  const SpeakerModel& model_;
};

inline constexpr const char* kAdapterProtocol = "asi-adapter/1";

/// Client for an external model speaking newline-delimited JSON on its
/// stdin/stdout. Calls are serialized; open one client per parallel stream.
class AdapterClient final : public Oracle {
 public:
  explicit AdapterClient(const std::string& command_line,
                         std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~AdapterClient() override;

  AdapterClient(const AdapterClient&) = delete;
  AdapterClient& operator=(const AdapterClient&) = delete;

  const std::vector<std::string>& labels() const override { return labels_; }
  Identification identify(const AudioBuffer& buf) override;

  /// Sends every request before reading; responses may arrive in any order.
  std::vector<Identification> identify_batch(std::span<const AudioBuffer> bufs);

 private:
  using Clock = std::chrono::steady_clock;

  void send_all(const std::string& data, Clock::time_point deadline);
  std::string read_line(Clock::time_point deadline);
  bool pump(Clock::time_point deadline, bool want_write);
  void shutdown() noexcept;

  std::mutex mu_;
  int pid_ = -1;
  int fd_ = -1;
  std::chrono::milliseconds timeout_;
  std::string inbox_;
  std::vector<std::string> labels_;
  std::uint64_t next_id_ = 1;
};

/// Builds an Identification from raw scores, renormalizing them to sum 1.
Identification make_identification(std::vector<std::string> labels, std::vector<double> scores);

}  // namespace tubespoof

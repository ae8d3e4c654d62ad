#include "tubespoof/oracle.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <thread>

#include "json.hpp"
#include "tubespoof/error.hpp"

namespace tubespoof {

using nlohmann::json;

Identification make_identification(std::vector<std::string> labels, std::vector<double> scores) {
  require(labels.size() == scores.size() && !labels.empty(), "scores must align with labels",
          ErrorCode::Protocol);
  double sum = 0.0;
  for (double s : scores) {
    require(std::isfinite(s) && s >= 0.0, "scores must be finite and non-negative",
            ErrorCode::Protocol);
    sum += s;
  }
  require(sum > 0.0, "scores sum to zero", ErrorCode::Protocol);
  Identification id;
  std::size_t best = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] /= sum;
    if (scores[i] > scores[best] || (scores[i] == scores[best] && labels[i] < labels[best])) best = i;
  }
  id.label = labels[best];
  id.labels = std::move(labels);
  id.scores = std::move(scores);
  return id;
}

namespace {

[[noreturn]] void adapter_gone() {
  fail(ErrorCode::Timeout, "adapter terminated before responding");
}

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return static_cast<int>(std::max<long long>(0, left.count()));
}

bool is_comment_or_blank(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

}  // namespace

AdapterClient::AdapterClient(const std::string& command_line, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  require(!command_line.empty(), "adapter command line is empty");
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    fail(ErrorCode::Io, std::string("socketpair failed: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    fail(ErrorCode::Io, std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_line.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  pid_ = pid;
  fd_ = sv[0];

  try {
    const auto deadline = Clock::now() + timeout_;
    std::string line;
    do {
      line = read_line(deadline);
    } while (is_comment_or_blank(line));
    json hello;
    try {
      hello = json::parse(line);
    } catch (const json::exception&) {
      fail(ErrorCode::Protocol, "malformed adapter handshake");
    }
    if (!hello.is_object() || hello.value("protocol", "") != kAdapterProtocol ||
        !hello.contains("labels") || !hello["labels"].is_array() || hello["labels"].empty()) {
      fail(ErrorCode::Protocol, "adapter handshake must announce asi-adapter/1 and a label list");
    }
    std::set<std::string> uniq;
    for (const auto& l : hello["labels"]) {
      if (!l.is_string()) fail(ErrorCode::Protocol, "adapter labels must be strings");
      if (!uniq.insert(l.get<std::string>()).second) {
        fail(ErrorCode::Protocol, "adapter announced a duplicate label");
      }
    }
    labels_.assign(uniq.begin(), uniq.end());
  } catch (...) {
    shutdown();
    throw;
  }
}

AdapterClient::~AdapterClient() { shutdown(); }

void AdapterClient::shutdown() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    ::kill(pid_, SIGTERM);
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

// Waits for readability (and writability when asked); drains readable data
// into the inbox. Returns true when the socket accepts writes.
bool AdapterClient::pump(Clock::time_point deadline, bool want_write) {
  pollfd p{fd_, static_cast<short>(POLLIN | (want_write ? POLLOUT : 0)), 0};
  int rc;
  do {
    rc = ::poll(&p, 1, remaining_ms(deadline));
  } while (rc < 0 && errno == EINTR);
  if (rc < 0) fail(ErrorCode::Io, std::string("poll failed: ") + std::strerror(errno));
  if (rc == 0) fail(ErrorCode::Timeout, "adapter timed out");
  if (p.revents & POLLIN) {
    char buf[65536];
    const ssize_t n = ::read(fd_, buf, sizeof buf);
    if (n == 0) adapter_gone();
    if (n < 0 && errno != EINTR && errno != EAGAIN) adapter_gone();
    if (n > 0) inbox_.append(buf, static_cast<std::size_t>(n));
  } else if (p.revents & (POLLHUP | POLLERR)) {
    adapter_gone();
  }
  return want_write && (p.revents & POLLOUT);
}

void AdapterClient::send_all(const std::string& data, Clock::time_point deadline) {
  std::size_t off = 0;
  while (off < data.size()) {
    if (!pump(deadline, true)) continue;
    const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL | MSG_DONTWAIT);
    if (n < 0) {
      if (errno == EAGAIN || errno == EINTR) continue;
      adapter_gone();
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string AdapterClient::read_line(Clock::time_point deadline) {
  for (;;) {
    if (auto nl = inbox_.find('\n'); nl != std::string::npos) {
      std::string line = inbox_.substr(0, nl);
      inbox_.erase(0, nl + 1);
      return line;
    }
    pump(deadline, false);
  }
}

Identification AdapterClient::identify(const AudioBuffer& buf) {
  return identify_batch(std::span<const AudioBuffer>(&buf, 1)).front();
}

std::vector<Identification> AdapterClient::identify_batch(std::span<const AudioBuffer> bufs) {
  std::lock_guard lock(mu_);
  require(fd_ >= 0, "adapter connection is closed", ErrorCode::Protocol);

  std::map<std::uint64_t, std::size_t> pending;
  auto deadline = Clock::now() + timeout_;
  for (std::size_t i = 0; i < bufs.size(); ++i) {
    const auto& b = bufs[i];
    require(!b.empty(), "cannot query the adapter with an empty buffer");
    for (double v : b.samples()) require(std::isfinite(v), "adapter samples must be finite");
    const std::uint64_t id = next_id_++;
    json req = {{"id", id}, {"sample_rate", b.sample_rate()}, {"samples", b.data()}};
    send_all(req.dump() + "\n", deadline);
    pending.emplace(id, i);
  }

  std::vector<Identification> out(bufs.size());
  while (!pending.empty()) {
    const std::string line = read_line(deadline);
    if (is_comment_or_blank(line)) continue;
    json resp;
    try {
      resp = json::parse(line);
    } catch (const json::exception&) {
      fail(ErrorCode::Protocol, "malformed adapter response");
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_unsigned() ||
        !resp.contains("scores") || !resp["scores"].is_object()) {
      fail(ErrorCode::Protocol, "malformed adapter response: need id and scores");
    }
    const auto id = resp["id"].get<std::uint64_t>();
    auto it = pending.find(id);
    if (it == pending.end()) fail(ErrorCode::Protocol, "non-matching response id " + std::to_string(id));

    std::vector<double> scores(labels_.size(), 0.0);
    for (const auto& [label, value] : resp["scores"].items()) {
      auto pos = std::lower_bound(labels_.begin(), labels_.end(), label);
      if (pos == labels_.end() || *pos != label) {
        fail(ErrorCode::Protocol, "adapter scored an unannounced label: " + label);
      }
      if (!value.is_number()) fail(ErrorCode::Protocol, "adapter scores must be numbers");
      scores[static_cast<std::size_t>(pos - labels_.begin())] = value.get<double>();
    }
    out[it->second] = make_identification(labels_, std::move(scores));
    pending.erase(it);
    deadline = Clock::now() + timeout_;
  }
  return out;
}

}  // namespace tubespoof

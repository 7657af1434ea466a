#pragma once

// Client for external predictor servers speaking newline-delimited JSON, either
// over the stdio of a spawned subprocess or over TCP.
//
//   -> {"type":"hello","protocol":1}
//   <- {"type":"hello_ack","protocol":1,"name":...}
//   -> {"type":"predict","request_id":N,"classes":K,"context":{"x":..,"y":..},"query":{"x":..}}
//   <- {"type":"proba","request_id":N,"p":[[...],...]}   or
//   <- {"type":"error","request_id":N,"message":...}

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <pthread.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "predictor.hpp"

namespace tabal {

inline constexpr int kProtocolVersion = 1;

/// A bidirectional line channel with a read timeout.
class LineTransport {
public:
    virtual ~LineTransport() = default;
    virtual void write_line(const std::string& line) = 0;
    virtual std::string read_line(std::chrono::milliseconds timeout) = 0;
};

namespace detail {

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() { reset(); }

    int get() const { return fd_; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

/// Writes everything with SIGPIPE blocked, so a dead peer shows up as EPIPE.
inline void write_all(int fd, const std::string& data) {
    sigset_t block, old;
    sigemptyset(&block);
    sigaddset(&block, SIGPIPE);
    pthread_sigmask(SIG_BLOCK, &block, &old);
    std::size_t off = 0;
    int err = 0;
    while (off < data.size()) {
        const auto n = ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            err = errno;
            break;
        }
        off += static_cast<std::size_t>(n);
    }
    if (err == EPIPE) {
        // Consume the pending SIGPIPE before unblocking.
        const timespec zero{0, 0};
        sigtimedwait(&block, nullptr, &zero);
    }
    pthread_sigmask(SIG_SETMASK, &old, nullptr);
    if (err != 0) throw ProtocolError(std::string("write to predictor failed: ") + std::strerror(err));
}

/// Buffered line reader over a file descriptor.
class LineReader {
public:
    std::string read_line(int fd, std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) throw ProtocolError("timed out waiting for predictor response");
            pollfd pfd{fd, POLLIN, 0};
            const int r = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
            if (r < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
            }
            if (r == 0) continue;
            char chunk[65536];
            const auto n = ::read(fd, chunk, sizeof chunk);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(std::string("read from predictor failed: ") + std::strerror(errno));
            }
            if (n == 0) throw ProtocolError("predictor closed the connection");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

private:
    std::string buffer_;
};

}  // namespace detail

/// Spawns `argv` and talks to it through its stdin/stdout. Stderr is inherited.
class SubprocessTransport : public LineTransport {
public:
    explicit SubprocessTransport(const std::vector<std::string>& argv) {
        if (argv.empty()) throw InvalidArgument("empty predictor command");
        int to_child[2];
        int from_child[2];
        if (::pipe2(to_child, O_CLOEXEC) != 0) throw ProtocolError("pipe failed");
        if (::pipe2(from_child, O_CLOEXEC) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            throw ProtocolError("pipe failed");
        }
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);

        pid_ = ::fork();
        if (pid_ < 0) throw ProtocolError("fork failed");
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::execvp(args[0], args.data());
            _exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        in_ = detail::Fd(to_child[1]);
        out_ = detail::Fd(from_child[0]);
    }

    ~SubprocessTransport() override {
        in_.reset();
        out_.reset();
        if (pid_ > 0) {
            int status = 0;
            for (int i = 0; i < 100; ++i) {
                if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
                ::usleep(10000);
            }
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
        }
    }

    void write_line(const std::string& line) override { detail::write_all(in_.get(), line + "\n"); }
    std::string read_line(std::chrono::milliseconds timeout) override { return reader_.read_line(out_.get(), timeout); }

private:
    pid_t pid_ = -1;
    detail::Fd in_;
    detail::Fd out_;
    detail::LineReader reader_;
};

class TcpTransport : public LineTransport {
public:
    TcpTransport(const std::string& host, std::uint16_t port) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0) {
            throw ProtocolError("cannot resolve " + host + ": " + ::gai_strerror(rc));
        }
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
        for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
            detail::Fd s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
            if (s.get() < 0) continue;
            if (::connect(s.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
                sock_ = std::move(s);
                return;
            }
        }
        throw ProtocolError("cannot connect to " + host + ":" + std::to_string(port));
    }

    void write_line(const std::string& line) override { detail::write_all(sock_.get(), line + "\n"); }
    std::string read_line(std::chrono::milliseconds timeout) override { return reader_.read_line(sock_.get(), timeout); }

private:
    detail::Fd sock_;
    detail::LineReader reader_;
};

struct ExternalEndpoint {
    std::vector<std::string> command;  // non-empty: spawn subprocess
    std::string host;                  // otherwise: TCP
    std::uint16_t port = 0;
    double timeout_seconds = 300.0;
};

namespace wire {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

inline nlohmann::json hello() { return {{"type", "hello"}, {"protocol", kProtocolVersion}}; }

inline nlohmann::json predict_request(std::uint64_t request_id, std::size_t K, const Matrix& context_x,
                                      std::span<const std::size_t> context_y, const Matrix& queries) {
    return {{"type", "predict"},
            {"request_id", request_id},
            {"classes", K},
            {"context", {{"x", matrix_to_json(context_x)}, {"y", std::vector<std::size_t>(context_y.begin(), context_y.end())}}},
            {"query", {{"x", matrix_to_json(queries)}}}};
}

/// Parses a "p" array into a matrix; shape and simplex are validated separately.
inline ProbabilityMatrix parse_proba(const nlohmann::json& p) {
    if (!p.is_array()) throw ProtocolError("'p' is not an array");
    ProbabilityMatrix out;
    for (const auto& row : p) {
        if (!row.is_array()) throw ProtocolError("'p' row is not an array");
        std::vector<double> values;
        values.reserve(row.size());
        for (const auto& v : row) {
            if (!v.is_number()) throw ProtocolError("non-numeric probability");
            values.push_back(v.get<double>());
        }
        if (out.rows() > 0 && values.size() != out.cols()) throw ProtocolError("ragged probability rows");
        out.append_row(values);
    }
    return out;
}

}  // namespace wire

/// Predictor backed by an external server. One connection, strictly sequential
/// requests matched by request_id.
class ExternalPredictor : public Predictor {
public:
    ExternalPredictor(std::unique_ptr<LineTransport> transport, double timeout_seconds = 300.0)
        : transport_(std::move(transport)),
          timeout_(static_cast<long long>(timeout_seconds * 1000.0)) {
        handshake();
    }

    explicit ExternalPredictor(const ExternalEndpoint& ep)
        : ExternalPredictor(ep.command.empty()
                                ? std::unique_ptr<LineTransport>(std::make_unique<TcpTransport>(ep.host, ep.port))
                                : std::unique_ptr<LineTransport>(std::make_unique<SubprocessTransport>(ep.command)),
                            ep.timeout_seconds) {}

    std::string name() const override { return server_name_; }

    ProbabilityMatrix predict_proba(const Matrix& context_x, std::span<const std::size_t> context_y,
                                    const Matrix& queries, std::size_t K) override {
        check_predict_args(context_x, context_y, queries, K);
        const auto id = next_id_++;
        transport_->write_line(wire::predict_request(id, K, context_x, context_y, queries).dump());
        const auto msg = read_message();
        const auto type = msg.value("type", std::string{});
        const auto rid = msg.find("request_id");
        if (rid == msg.end() || !rid->is_number_unsigned() || rid->get<std::uint64_t>() != id) {
            throw ProtocolError("response request_id does not match request " + std::to_string(id));
        }
        if (type == "error") throw ProtocolError("predictor error: " + msg.value("message", std::string{"(none)"}));
        if (type != "proba" || !msg.contains("p")) throw ProtocolError("unexpected response type '" + type + "'");
        auto p = wire::parse_proba(msg.at("p"));
        validate_probabilities(p, queries.rows(), K);
        return p;
    }

private:
    nlohmann::json read_message() {
        const auto line = transport_->read_line(timeout_);
        try {
            auto j = nlohmann::json::parse(line);
            if (!j.is_object()) throw ProtocolError("response is not a JSON object");
            return j;
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("malformed response: ") + e.what());
        }
    }

    void handshake() {
        transport_->write_line(wire::hello().dump());
        const auto msg = read_message();
        if (msg.value("type", std::string{}) != "hello_ack") throw ProtocolError("expected hello_ack");
        if (!msg.contains("protocol") || !msg.at("protocol").is_number_integer() ||
            msg.at("protocol").get<int>() != kProtocolVersion) {
            throw ProtocolError("predictor protocol version mismatch");
        }
        server_name_ = msg.value("name", std::string{"external"});
    }

    std::unique_ptr<LineTransport> transport_;
    std::chrono::milliseconds timeout_;
    std::uint64_t next_id_ = 1;
    std::string server_name_;
};

}  // namespace tabal

#pragma once

// Live frame relay: one publisher per session pushes sequence-numbered PGM
// frames, any number of subscribers pull the newest frame they have not seen.
// A session keeps only its latest frame.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace diane::stream {

using Clock = std::chrono::steady_clock;
using ClockFn = std::function<Clock::time_point()>;

inline constexpr std::chrono::minutes kIdleExpiry{10};

struct Frame {
    std::uint64_t seq = 0;
    std::shared_ptr<const std::vector<std::uint8_t>> image;  // PGM bytes, shared with every subscriber
    Clock::time_point received_at;
};

class StreamError : public std::runtime_error {
public:
    enum class Kind { NoSuchSession, SessionClosed, StaleSequence, BadFrame };
    StreamError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

namespace detail {
struct Session;
}

// Pull side of a subscription. Not thread-safe; one consumer per feed.
class Feed {
public:
    enum class Status { Delivered, Ended, TimedOut };
    struct Pull {
        Status status;
        Frame frame;  // valid when Delivered
    };

    // Blocks until a frame newer than the last one delivered exists, or the session closes.
    std::optional<Frame> next();
    Pull next_for(std::chrono::milliseconds timeout);

    std::uint64_t last_delivered() const { return last_; }

private:
    friend class Relay;
    explicit Feed(std::shared_ptr<detail::Session> s) : session_(std::move(s)) {}

    std::shared_ptr<detail::Session> session_;
    std::uint64_t last_ = 0;
};

struct SessionInfo {
    std::string id;
    Clock::time_point created_at;
    std::uint64_t seq_high;
    bool live;
    bool has_latest;
};

class Relay {
public:
    explicit Relay(ClockFn clock = Clock::now, Clock::duration idle_expiry = kIdleExpiry);
    ~Relay();

    Relay(const Relay&) = delete;
    Relay& operator=(const Relay&) = delete;

    std::string create_session();
    // Returns the accepted sequence number. The payload must decode as PGM.
    std::uint64_t publish(const std::string& id, std::uint64_t seq, std::vector<std::uint8_t> pgm);
    Feed subscribe(const std::string& id);
    void close_session(const std::string& id);
    SessionInfo info(const std::string& id) const;

    // Closes sessions with no publish for the idle period and forgets sessions
    // closed for longer than that. Returns the number closed.
    std::size_t expire_idle();
    // Closes every session; later create_session calls fail with SessionClosed.
    void shutdown();

    std::size_t session_count() const;
    std::size_t retained_frames() const;

private:
    std::shared_ptr<detail::Session> find(const std::string& id) const;

    ClockFn clock_;
    Clock::duration idle_expiry_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<detail::Session>> sessions_;
    bool shut_down_ = false;
};

// Fresh 128-bit session token as 32 lowercase hex digits.
std::string new_session_id();

// multipart/x-mixed-replace framing used by the live endpoint.
inline constexpr std::string_view kBoundary = "frame";
std::string encode_part(const Frame& f);
std::string_view multipart_end();

// Incremental reader for the live multipart body.
class MultipartReader {
public:
    struct Part {
        std::uint64_t seq;
        std::vector<std::uint8_t> body;
    };

    // Appends bytes and returns every part completed by them. Throws
    // StreamError(BadFrame) on framing it cannot follow.
    std::vector<Part> feed(std::string_view bytes);
    bool finished() const { return finished_; }

private:
    std::string buffer_;
    bool finished_ = false;
};

}  // namespace diane::stream

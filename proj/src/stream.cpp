#include "diane/stream.hpp"

#include "diane/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <random>

namespace diane::stream {

namespace detail {

struct Session {
    std::string id;
    Clock::time_point created_at;
    std::mutex mutex;
    std::condition_variable cv;
    std::optional<Frame> latest;
    std::uint64_t seq_high = 0;
    bool live = true;
    Clock::time_point last_activity;  // last publish, or close time once closed
};

}  // namespace detail

namespace {

using Kind = StreamError::Kind;

[[noreturn]] void no_session(const std::string& id) {
    throw StreamError(Kind::NoSuchSession, "no stream session '" + id + "'");
}

void close_locked(detail::Session& s, Clock::time_point now) {
    if (!s.live) return;
    s.live = false;
    s.last_activity = now;
    s.cv.notify_all();
}

}  // namespace

std::optional<Frame> Feed::next() {
    for (;;) {
        auto pull = next_for(std::chrono::hours(1));
        if (pull.status == Status::Delivered) return std::move(pull.frame);
        if (pull.status == Status::Ended) return std::nullopt;
    }
}

Feed::Pull Feed::next_for(std::chrono::milliseconds timeout) {
    auto& s = *session_;
    std::unique_lock lock(s.mutex);
    const auto ready = [&] { return (s.latest && s.latest->seq > last_) || !s.live; };
    s.cv.wait_for(lock, timeout, ready);
    if (s.latest && s.latest->seq > last_) {
        last_ = s.latest->seq;
        return {Status::Delivered, *s.latest};
    }
    if (!s.live) return {Status::Ended, {}};
    return {Status::TimedOut, {}};
}

Relay::Relay(ClockFn clock, Clock::duration idle_expiry) : clock_(std::move(clock)), idle_expiry_(idle_expiry) {}

Relay::~Relay() { shutdown(); }

std::shared_ptr<detail::Session> Relay::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) no_session(id);
    return it->second;
}

std::string Relay::create_session() {
    auto s = std::make_shared<detail::Session>();
    s->created_at = s->last_activity = clock_();
    std::lock_guard lock(mutex_);
    if (shut_down_) throw StreamError(Kind::SessionClosed, "relay is shutting down");
    do {
        s->id = new_session_id();
    } while (sessions_.contains(s->id));
    sessions_.emplace(s->id, s);
    return s->id;
}

std::uint64_t Relay::publish(const std::string& id, std::uint64_t seq, std::vector<std::uint8_t> pgm) {
    try {
        imaging::decode_pgm(std::span<const std::uint8_t>(pgm));
    } catch (const imaging::PgmError& e) {
        throw StreamError(Kind::BadFrame, std::string("frame is not a PGM: ") + e.what());
    }
    const auto session = find(id);
    const auto now = clock_();
    auto image = std::make_shared<const std::vector<std::uint8_t>>(std::move(pgm));
    std::lock_guard lock(session->mutex);
    if (!session->live) throw StreamError(Kind::SessionClosed, "session '" + id + "' is closed");
    if (seq <= session->seq_high)
        throw StreamError(Kind::StaleSequence,
                          "frame " + std::to_string(seq) + " is not newer than " + std::to_string(session->seq_high));
    session->latest = Frame{seq, std::move(image), now};
    session->seq_high = seq;
    session->last_activity = now;
    session->cv.notify_all();
    return seq;
}

Feed Relay::subscribe(const std::string& id) { return Feed(find(id)); }

void Relay::close_session(const std::string& id) {
    const auto session = find(id);
    const auto now = clock_();
    std::lock_guard lock(session->mutex);
    close_locked(*session, now);
}

SessionInfo Relay::info(const std::string& id) const {
    const auto session = find(id);
    std::lock_guard lock(session->mutex);
    return {session->id, session->created_at, session->seq_high, session->live, session->latest.has_value()};
}

std::size_t Relay::expire_idle() {
    const auto now = clock_();
    std::size_t closed = 0;
    std::lock_guard lock(mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        auto& s = *it->second;
        std::lock_guard slock(s.mutex);
        const bool idle = now - s.last_activity >= idle_expiry_;
        if (s.live && idle) {
            close_locked(s, now);
            ++closed;
        } else if (!s.live && idle) {
            // feeds already holding the session keep it alive through their shared_ptr
            it = sessions_.erase(it);
            continue;
        }
        ++it;
    }
    return closed;
}

void Relay::shutdown() {
    const auto now = clock_();
    std::lock_guard lock(mutex_);
    shut_down_ = true;
    for (auto& [_, s] : sessions_) {
        std::lock_guard slock(s->mutex);
        close_locked(*s, now);
    }
}

std::size_t Relay::session_count() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

std::size_t Relay::retained_frames() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [_, s] : sessions_) {
        std::lock_guard slock(s->mutex);
        n += s->latest.has_value() ? 1 : 0;
    }
    return n;
}

std::string new_session_id() {
    static thread_local std::random_device device;
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id;
    id.reserve(32);
    for (int word = 0; word < 4; ++word) {
        const std::uint32_t v = device();
        for (int nib = 7; nib >= 0; --nib) id += kHex[(v >> (4 * nib)) & 0xF];
    }
    return id;
}

std::string encode_part(const Frame& f) {
    std::string out;
    out.reserve(f.image->size() + 128);
    out += "--";
    out += kBoundary;
    out += "\r\nContent-Type: image/x-portable-graymap\r\nX-Frame-Seq: ";
    out += std::to_string(f.seq);
    out += "\r\nContent-Length: ";
    out += std::to_string(f.image->size());
    out += "\r\n\r\n";
    out.append(f.image->begin(), f.image->end());
    out += "\r\n";
    return out;
}

std::string_view multipart_end() { return "--frame--\r\n"; }

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::uint64_t header_number(std::string_view v, const char* name) {
    std::uint64_t n = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), n);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty())
        throw StreamError(Kind::BadFrame, std::string("bad ") + name + " header");
    return n;
}

}  // namespace

std::vector<MultipartReader::Part> MultipartReader::feed(std::string_view bytes) {
    buffer_.append(bytes);
    std::vector<Part> parts;
    const std::string delimiter = "--" + std::string(kBoundary);
    for (;;) {
        if (finished_) return parts;
        std::size_t pos = 0;
        while (pos < buffer_.size() && (buffer_[pos] == '\r' || buffer_[pos] == '\n')) ++pos;
        if (buffer_.size() - pos < delimiter.size() + 2) return parts;
        if (buffer_.compare(pos, delimiter.size(), delimiter) != 0)
            throw StreamError(Kind::BadFrame, "expected multipart boundary");
        pos += delimiter.size();
        if (buffer_.compare(pos, 2, "--") == 0) {
            finished_ = true;
            buffer_.clear();
            return parts;
        }
        const auto header_end = buffer_.find("\r\n\r\n", pos);
        if (header_end == std::string::npos) return parts;

        std::optional<std::uint64_t> seq, length;
        std::string_view headers(buffer_.data() + pos, header_end - pos);
        while (!headers.empty()) {
            const auto eol = headers.find("\r\n");
            const auto line = headers.substr(0, eol);
            headers.remove_prefix(eol == std::string_view::npos ? headers.size() : eol + 2);
            if (line.empty()) continue;
            const auto colon = line.find(':');
            if (colon == std::string_view::npos) throw StreamError(Kind::BadFrame, "malformed part header");
            const auto name = trim(line.substr(0, colon));
            const auto value = trim(line.substr(colon + 1));
            if (iequals(name, "X-Frame-Seq")) seq = header_number(value, "X-Frame-Seq");
            if (iequals(name, "Content-Length")) length = header_number(value, "Content-Length");
        }
        if (!seq || !length) throw StreamError(Kind::BadFrame, "part lacks X-Frame-Seq or Content-Length");
        const auto body_start = header_end + 4;
        if (buffer_.size() < body_start + *length) return parts;
        const auto* b = reinterpret_cast<const std::uint8_t*>(buffer_.data() + body_start);
        parts.push_back({*seq, std::vector<std::uint8_t>(b, b + *length)});
        buffer_.erase(0, body_start + *length);
    }
}

}  // namespace diane::stream

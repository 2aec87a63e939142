#include "diane/stream.hpp"

#include "diane/imaging.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <set>
#include <thread>

using namespace diane;
using namespace diane::stream;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> pgm(std::uint8_t value) { return imaging::encode_pgm(imaging::GrayImage(2, 2, value)); }

StreamError::Kind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const StreamError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no StreamError";
    return StreamError::Kind::BadFrame;
}

struct FakeClock {
    Clock::time_point now{};
    ClockFn fn() {
        return [this] { return now; };
    }
};

}  // namespace

TEST(Relay, PublishSubscribeLatestOnly) {
    Relay relay;
    const auto id = relay.create_session();
    auto feed = relay.subscribe(id);
    EXPECT_EQ(feed.next_for(0ms).status, Feed::Status::TimedOut);
    relay.publish(id, 1, pgm(1));
    relay.publish(id, 2, pgm(2));
    relay.publish(id, 5, pgm(5));
    auto pull = feed.next_for(0ms);
    ASSERT_EQ(pull.status, Feed::Status::Delivered);
    EXPECT_EQ(pull.frame.seq, 5u);
    EXPECT_EQ(*pull.frame.image, pgm(5));
    EXPECT_EQ(feed.next_for(0ms).status, Feed::Status::TimedOut);
    EXPECT_EQ(relay.retained_frames(), 1u);
    EXPECT_EQ(relay.info(id).seq_high, 5u);
}

TEST(Relay, LateSubscriberGetsCurrentFrame) {
    Relay relay;
    const auto id = relay.create_session();
    relay.publish(id, 3, pgm(3));
    auto feed = relay.subscribe(id);
    EXPECT_EQ(feed.next_for(0ms).frame.seq, 3u);
}

TEST(Relay, Errors) {
    Relay relay;
    const auto id = relay.create_session();
    using K = StreamError::Kind;
    EXPECT_EQ(kind_of([&] { relay.publish("nope", 1, pgm(0)); }), K::NoSuchSession);
    EXPECT_EQ(kind_of([&] { relay.subscribe("nope"); }), K::NoSuchSession);
    EXPECT_EQ(kind_of([&] { relay.publish(id, 1, {'x'}); }), K::BadFrame);
    relay.publish(id, 4, pgm(0));
    EXPECT_EQ(kind_of([&] { relay.publish(id, 4, pgm(0)); }), K::StaleSequence);
    EXPECT_EQ(kind_of([&] { relay.publish(id, 2, pgm(0)); }), K::StaleSequence);
    relay.close_session(id);
    relay.close_session(id);
    EXPECT_EQ(kind_of([&] { relay.publish(id, 9, pgm(0)); }), K::SessionClosed);
    EXPECT_FALSE(relay.info(id).live);
}

TEST(Relay, CloseDrainsPendingFrameThenEnds) {
    Relay relay;
    const auto id = relay.create_session();
    auto feed = relay.subscribe(id);
    relay.publish(id, 1, pgm(1));
    relay.close_session(id);
    EXPECT_EQ(feed.next_for(0ms).status, Feed::Status::Delivered);
    EXPECT_EQ(feed.next_for(0ms).status, Feed::Status::Ended);
    EXPECT_FALSE(feed.next().has_value());
}

TEST(Relay, SessionsAreIsolated) {
    Relay relay;
    const auto a = relay.create_session();
    const auto b = relay.create_session();
    auto fa = relay.subscribe(a);
    auto fb = relay.subscribe(b);
    relay.publish(a, 1, pgm(10));
    EXPECT_EQ(fb.next_for(0ms).status, Feed::Status::TimedOut);
    relay.close_session(a);
    EXPECT_EQ(fa.next_for(0ms).frame.seq, 1u);
    relay.publish(b, 1, pgm(20));
    EXPECT_EQ(*fb.next_for(0ms).frame.image, pgm(20));
}

TEST(Relay, SessionIdsAreUniqueHex) {
    Relay relay;
    std::set<std::string> ids;
    for (int i = 0; i < 1000; ++i) {
        const auto id = relay.create_session();
        ASSERT_EQ(id.size(), 32u);
        ASSERT_EQ(id.find_first_not_of("0123456789abcdef"), std::string::npos);
        ids.insert(id);
    }
    EXPECT_EQ(ids.size(), 1000u);
    EXPECT_EQ(relay.session_count(), 1000u);
}

TEST(Relay, IdleExpiryWithInjectedClock) {
    FakeClock clock;
    Relay relay(clock.fn(), 10min);
    const auto quiet = relay.create_session();
    const auto busy = relay.create_session();
    auto feed = relay.subscribe(quiet);
    clock.now += 9min;
    relay.publish(busy, 1, pgm(1));
    EXPECT_EQ(relay.expire_idle(), 0u);
    clock.now += 1min;
    EXPECT_EQ(relay.expire_idle(), 1u);
    EXPECT_FALSE(relay.info(quiet).live);
    EXPECT_TRUE(relay.info(busy).live);
    EXPECT_EQ(feed.next_for(0ms).status, Feed::Status::Ended);
    clock.now += 10min;
    EXPECT_EQ(relay.expire_idle(), 1u);  // busy
    EXPECT_EQ(kind_of([&] { relay.info(quiet); }), StreamError::Kind::NoSuchSession);
    clock.now += 10min;
    relay.expire_idle();
    EXPECT_EQ(relay.session_count(), 0u);
    EXPECT_EQ(relay.retained_frames(), 0u);
}

TEST(Relay, ShutdownEndsEverything) {
    Relay relay;
    const auto id = relay.create_session();
    auto feed = relay.subscribe(id);
    relay.shutdown();
    EXPECT_EQ(feed.next_for(0ms).status, Feed::Status::Ended);
    EXPECT_EQ(kind_of([&] { relay.create_session(); }), StreamError::Kind::SessionClosed);
}

// Random single-threaded interleavings of publish, pull and close checked
// against a model of the relay: each pull yields exactly the latest frame if
// it is newer than the subscriber's last one.
TEST(RelayProperties, RandomSchedulesMatchModel) {
    for (int schedule = 0; schedule < 1200; ++schedule) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(schedule));
        Relay relay;
        const auto id = relay.create_session();
        const int subs = 1 + static_cast<int>(rng() % 4);
        std::vector<Feed> feeds;
        std::vector<std::uint64_t> last(subs, 0);
        std::vector<bool> ended(subs, false);
        for (int i = 0; i < subs; ++i) feeds.push_back(relay.subscribe(id));
        std::uint64_t seq = 0, latest = 0;
        bool live = true;
        const int steps = 5 + static_cast<int>(rng() % 60);
        for (int step = 0; step < steps; ++step) {
            const auto op = rng() % 10;
            if (op < 4) {
                const std::uint64_t next = seq + 1 + rng() % 3;
                if (live) {
                    ASSERT_EQ(relay.publish(id, next, pgm(static_cast<std::uint8_t>(next))), next);
                    seq = latest = next;
                } else {
                    ASSERT_EQ(kind_of([&] { relay.publish(id, next, pgm(0)); }), StreamError::Kind::SessionClosed);
                }
            } else if (op < 9) {
                const auto s = rng() % subs;
                const auto pull = feeds[s].next_for(0ms);
                if (latest > last[s]) {
                    ASSERT_EQ(pull.status, Feed::Status::Delivered) << schedule;
                    ASSERT_EQ(pull.frame.seq, latest);
                    ASSERT_EQ(*pull.frame.image, pgm(static_cast<std::uint8_t>(latest)));
                    ASSERT_GT(pull.frame.seq, last[s]);
                    last[s] = latest;
                } else if (!live) {
                    ASSERT_EQ(pull.status, Feed::Status::Ended);
                    ended[s] = true;
                } else {
                    ASSERT_EQ(pull.status, Feed::Status::TimedOut);
                }
                ASSERT_EQ(feeds[s].last_delivered(), last[s]);
            } else {
                relay.close_session(id);
                live = false;
            }
            ASSERT_LE(relay.retained_frames(), 1u);
        }
    }
}

TEST(RelayThreads, SubscribersSeeIncreasingSequences) {
    Relay relay;
    const auto id = relay.create_session();
    constexpr int kSubs = 4;
    constexpr std::uint64_t kFrames = 400;
    std::vector<std::vector<std::uint64_t>> seen(kSubs);
    std::vector<std::thread> threads;
    std::vector<Feed> feeds;
    for (int i = 0; i < kSubs; ++i) feeds.push_back(relay.subscribe(id));
    for (int i = 0; i < kSubs; ++i)
        threads.emplace_back([&, i] {
            while (auto f = feeds[i].next()) seen[i].push_back(f->seq);
        });
    for (std::uint64_t s = 1; s <= kFrames; ++s) {
        relay.publish(id, s, pgm(static_cast<std::uint8_t>(s)));
        if (s % 50 == 0) std::this_thread::sleep_for(1ms);
    }
    relay.close_session(id);
    for (auto& t : threads) t.join();
    for (const auto& v : seen) {
        ASSERT_FALSE(v.empty());
        EXPECT_TRUE(std::is_sorted(v.begin(), v.end()));
        EXPECT_EQ(std::adjacent_find(v.begin(), v.end()), v.end());
        EXPECT_EQ(v.back(), kFrames);
    }
}

TEST(RelayThreads, CloseUnblocksWaitingSubscriber) {
    Relay relay;
    const auto id = relay.create_session();
    auto feed = relay.subscribe(id);
    std::atomic<bool> done{false};
    std::thread t([&] {
        EXPECT_FALSE(feed.next().has_value());
        done = true;
    });
    std::this_thread::sleep_for(20ms);
    const auto start = Clock::now();
    relay.close_session(id);
    t.join();
    EXPECT_TRUE(done);
    EXPECT_LT(Clock::now() - start, 1s);
}

TEST(Multipart, PartFraming) {
    const auto img = std::make_shared<const std::vector<std::uint8_t>>(pgm(9));
    const auto part = encode_part({7, img, {}});
    EXPECT_TRUE(part.starts_with("--frame\r\nContent-Type: image/x-portable-graymap\r\nX-Frame-Seq: 7\r\n"
                                 "Content-Length: " +
                                 std::to_string(img->size()) + "\r\n\r\n"));
    EXPECT_TRUE(part.ends_with("\r\n"));
    EXPECT_EQ(multipart_end(), "--frame--\r\n");
}

TEST(Multipart, ReaderHandlesArbitraryChunking) {
    std::string body;
    std::vector<std::vector<std::uint8_t>> images;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        images.push_back(pgm(static_cast<std::uint8_t>(s * 13)));
        // payload containing the boundary text must not confuse the reader
        if (s == 5) {
            const std::string tricky = "P5\n2 2\n255\n\r\n--";
            images.back().assign(tricky.begin(), tricky.end());
        }
        body += encode_part({s, std::make_shared<const std::vector<std::uint8_t>>(images.back()), {}});
    }
    body += multipart_end();
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        MultipartReader reader;
        std::vector<MultipartReader::Part> parts;
        for (std::size_t pos = 0; pos < body.size();) {
            const std::size_t n = std::min<std::size_t>(body.size() - pos, 1 + rng() % 40);
            for (auto& p : reader.feed(std::string_view(body).substr(pos, n))) parts.push_back(std::move(p));
            pos += n;
        }
        ASSERT_TRUE(reader.finished());
        ASSERT_EQ(parts.size(), 20u);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            EXPECT_EQ(parts[i].seq, i + 1);
            EXPECT_EQ(parts[i].body, images[i]);
        }
    }
}

TEST(Multipart, ReaderRejectsGarbage) {
    MultipartReader reader;
    EXPECT_THROW(reader.feed("HTTP nonsense that is not a part at all\r\n\r\n"), StreamError);
}

#include "diane/base64.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace diane::base64;

namespace {

std::vector<std::uint8_t> bytes(std::string_view s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Base64, KnownVectors) {
    const std::pair<const char*, const char*> vectors[] = {
        {"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},         {"foo", "Zm9v"},
        {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"},
    };
    for (const auto& [plain, coded] : vectors) {
        EXPECT_EQ(encode(bytes(plain)), coded);
        EXPECT_EQ(decode(coded), bytes(plain));
    }
    EXPECT_EQ(encode(std::vector<std::uint8_t>{0xfb, 0xff}), "+/8=");
}

TEST(Base64, RoundTripRandom) {
    std::mt19937_64 rng(6);
    for (int n = 0; n < 300; ++n) {
        std::vector<std::uint8_t> data(rng() % 200);
        for (auto& b : data) b = static_cast<std::uint8_t>(rng());
        const auto text = encode(data);
        EXPECT_EQ(text.size() % 4, 0u);
        EXPECT_EQ(decode(text), data);
    }
}

TEST(Base64, WhitespaceIgnored) { EXPECT_EQ(decode(" Zm9v\r\n YmFy\t"), bytes("foobar")); }

TEST(Base64, RejectsMalformed) {
    for (const char* bad : {"Zg", "Zg=", "Z===", "Zm9", "Zm9v!", "Zh==", "Zm9=", "=Zm9", "Zg==Zg==", "Zm8=x", "Zg=a"})
        EXPECT_FALSE(decode(bad).has_value()) << bad;
}

#pragma once

// HTTP client for the patient service and the stream relay.

#include "diane/soap.hpp"
#include "diane/stream.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

namespace httplib {
class Client;
}

namespace diane::client {

inline constexpr const char* kDefaultServer = "http://127.0.0.1:8080";

struct ClientConfig {
    std::string host;
    int port = 80;
    std::chrono::seconds timeout{30};

    // Accepts http://host[:port] with an optional trailing slash.
    static ClientConfig from_url(const std::string& url, std::chrono::seconds timeout = std::chrono::seconds(30));
    std::string url() const;
};

// Connection failures, timeouts, and responses that are not what the protocol promises.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Relay refusals carrying the HTTP status (404, 409, 410, 400).
class SessionError : public std::runtime_error {
public:
    SessionError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

class Client {
public:
    explicit Client(ClientConfig config);
    ~Client();

    soap::SoapResponse call(const soap::SoapRequest& req);

    std::string create_stream();
    void publish_frame(const std::string& id, std::uint64_t seq, const std::vector<std::uint8_t>& pgm);
    void close_stream(const std::string& id);
    // Delivers every part of the live feed until the server ends it.
    void watch(const std::string& id, const std::function<void(const stream::MultipartReader::Part&)>& on_frame);

private:
    ClientConfig config_;
    std::unique_ptr<httplib::Client> http_;
};

}  // namespace diane::client

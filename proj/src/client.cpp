#include "diane/client.hpp"

#include <httplib.h>

#include <charconv>

namespace diane::client {

ClientConfig ClientConfig::from_url(const std::string& url, std::chrono::seconds timeout) {
    constexpr std::string_view scheme = "http://";
    if (!url.starts_with(scheme)) throw std::invalid_argument("server URL must start with http://: " + url);
    std::string_view rest = std::string_view(url).substr(scheme.size());
    if (rest.ends_with('/')) rest.remove_suffix(1);
    if (rest.empty() || rest.find('/') != std::string_view::npos)
        throw std::invalid_argument("server URL must be http://host[:port]: " + url);
    if (timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");

    ClientConfig c;
    c.timeout = timeout;
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos) {
        c.host = std::string(rest);
        return c;
    }
    c.host = std::string(rest.substr(0, colon));
    const auto port = rest.substr(colon + 1);
    const auto r = std::from_chars(port.data(), port.data() + port.size(), c.port);
    if (c.host.empty() || port.empty() || r.ec != std::errc() || r.ptr != port.data() + port.size() || c.port < 1 ||
        c.port > 65535)
        throw std::invalid_argument("bad host or port in server URL: " + url);
    return c;
}

std::string ClientConfig::url() const { return "http://" + host + ":" + std::to_string(port); }

Client::Client(ClientConfig config) : config_(std::move(config)), http_(std::make_unique<httplib::Client>(config_.host, config_.port)) {
    http_->set_connection_timeout(config_.timeout);
    http_->set_read_timeout(config_.timeout);
    http_->set_write_timeout(config_.timeout);
}

Client::~Client() = default;

namespace {

[[noreturn]] void transport(const std::string& what, const httplib::Error& e) {
    throw TransportError(what + ": " + httplib::to_string(e));
}

std::string first_line(const std::string& body) { return body.substr(0, body.find('\n')); }

}  // namespace

soap::SoapResponse Client::call(const soap::SoapRequest& req) {
    const auto res = http_->Post("/soap", soap::serialize_request(req), std::string(soap::kContentType));
    if (!res) transport("POST /soap to " + config_.url(), res.error());
    if (res->status != 200 && res->status != 500)
        throw TransportError("POST /soap returned HTTP " + std::to_string(res->status));
    try {
        return soap::parse_response(res->body);
    } catch (const soap::SoapError& e) {
        throw TransportError(std::string("unreadable SOAP response: ") + e.what());
    }
}

std::string Client::create_stream() {
    const auto res = http_->Post("/streams", "", "text/plain");
    if (!res) transport("POST /streams to " + config_.url(), res.error());
    if (res->status != 201) throw SessionError(res->status, first_line(res->body));
    const auto id = first_line(res->body);
    if (id.empty()) throw TransportError("POST /streams returned no session id");
    return id;
}

void Client::publish_frame(const std::string& id, std::uint64_t seq, const std::vector<std::uint8_t>& pgm) {
    httplib::Headers headers{{"X-Frame-Seq", std::to_string(seq)}};
    const auto res = http_->Post("/streams/" + id + "/frames", headers, reinterpret_cast<const char*>(pgm.data()),
                                 pgm.size(), "image/x-portable-graymap");
    if (!res) transport("POST frame to " + config_.url(), res.error());
    if (res->status != 202) throw SessionError(res->status, first_line(res->body));
}

void Client::close_stream(const std::string& id) {
    const auto res = http_->Delete("/streams/" + id);
    if (!res) transport("DELETE stream on " + config_.url(), res.error());
    if (res->status != 204) throw SessionError(res->status, first_line(res->body));
}

void Client::watch(const std::string& id,
                   const std::function<void(const stream::MultipartReader::Part&)>& on_frame) {
    stream::MultipartReader reader;
    int status = 0;
    std::string error_body;
    std::optional<std::string> framing_error;
    // a quiet feed is not a dead one
    http_->set_read_timeout(std::chrono::hours(24));
    const auto res = http_->Get(
        "/streams/" + id + "/live",
        [&](const httplib::Response& r) {
            status = r.status;
            return true;
        },
        [&](const char* data, std::size_t len) {
            if (status != 200) {
                error_body.append(data, len);
                return true;
            }
            try {
                for (const auto& part : reader.feed(std::string_view(data, len))) on_frame(part);
            } catch (const stream::StreamError& e) {
                framing_error = e.what();
                return false;
            }
            return true;
        });
    http_->set_read_timeout(config_.timeout);
    if (framing_error) throw TransportError("live feed: " + *framing_error);
    if (!res) transport("GET live feed from " + config_.url(), res.error());
    if (res->status != 200) throw SessionError(res->status, first_line(error_body.empty() ? res->body : error_body));
    if (!reader.finished()) throw TransportError("live feed ended without its closing boundary");
}

}  // namespace diane::client

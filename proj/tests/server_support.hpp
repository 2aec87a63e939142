#pragma once

#include "diane/client.hpp"
#include "diane/service.hpp"
#include "test_support.hpp"

#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace diane::testing {

// A service over a private copy of the fixture, listening on an ephemeral port.
class LiveServer {
public:
    LiveServer() {
        copy_fixture(dir / "fixture");
        service::Config config;
        config.records_path = dir / "fixture" / "records.json";
        config.gallery_dir = dir / "fixture" / "enrolled";
        config.model_path = dir / "model.bin";
        service_ = std::make_unique<service::Service>(detect::load_cascade_file(cascade_path().string()),
                                                      records::load_store(config.records_path), config);
        http_ = std::make_unique<service::HttpServer>(*service_, relay_, [this](const std::string& line) {
            std::lock_guard lock(log_mutex_);
            log_.push_back(line);
        });
        port_ = http_->bind("127.0.0.1", 0);
        if (port_ <= 0) throw std::runtime_error("could not bind a test port");
        http_->start();
    }
    ~LiveServer() { http_->stop(); }

    int port() const { return port_; }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    client::Client client() const { return client::Client(client::ClientConfig::from_url(url())); }
    service::Service& service() { return *service_; }
    stream::Relay& relay() { return relay_; }
    std::filesystem::path fixture() const { return dir / "fixture"; }

    std::vector<std::string> log() const {
        std::lock_guard lock(log_mutex_);
        return log_;
    }

    TempDir dir;

private:
    stream::Relay relay_;
    std::unique_ptr<service::Service> service_;
    std::unique_ptr<service::HttpServer> http_;
    int port_ = -1;
    mutable std::mutex log_mutex_;
    std::vector<std::string> log_;
};

}  // namespace diane::testing

#pragma once

// The running patient service: immutable model and store snapshots behind a
// single writer, SOAP dispatch, and the HTTP binding for /soap and /streams.

#include "diane/detect.hpp"
#include "diane/recognize.hpp"
#include "diane/records.hpp"
#include "diane/soap.hpp"
#include "diane/stream.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace diane::service {

struct Config {
    std::filesystem::path records_path;  // store document, rewritten on enroll
    std::filesystem::path gallery_dir;   // where enrolled images are written
    std::optional<std::filesystem::path> model_path;  // written after each training when set
    double default_threshold = recognize::kDefaultThreshold;
    int default_k_max = recognize::kDefaultKMax;
    detect::DetectParams detect_params = {};
};

struct SoapOutcome {
    int http_status;
    std::string body;
    std::string action;   // empty when the envelope did not parse
    std::string outcome;  // "ok" or the fault code
};

class Service {
public:
    Service(detect::HaarCascade cascade, records::PatientStore store, Config config,
            std::shared_ptr<const recognize::EigenModel> model = nullptr);

    soap::SoapResponse handle(const soap::SoapRequest& req);
    SoapOutcome handle_http(std::string_view body);

    soap::SoapResponse identify(const soap::IdentifyRequest& req) const;
    soap::SoapResponse get_patient(const soap::GetPatientRequest& req) const;
    soap::SoapResponse enroll(const soap::EnrollRequest& req);
    soap::SoapResponse train(const soap::TrainRequest& req);

    std::shared_ptr<const recognize::EigenModel> model() const;
    std::shared_ptr<const records::PatientStore> store() const;
    const Config& config() const { return config_; }

private:
    detect::HaarCascade cascade_;
    Config config_;

    mutable std::mutex snapshot_mutex_;  // guards the two pointers only
    std::shared_ptr<const records::PatientStore> store_;
    std::shared_ptr<const recognize::EigenModel> model_;

    std::mutex writer_mutex_;  // enroll and train run one at a time
};

using LogFn = std::function<void(const std::string&)>;
void log_to_stderr(const std::string& line);

class HttpServer {
public:
    HttpServer(Service& service, stream::Relay& relay, LogFn log = log_to_stderr);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Returns the bound port (an ephemeral one when port is 0), or -1.
    int bind(const std::string& host, int port);
    // Serves until stop(); call after bind.
    void run();
    // Runs on a background thread.
    void start();
    // Closes all stream sessions, then stops accepting and joins.
    void stop();

private:
    void routes();
    void log(const std::string& method, const std::string& path, const std::string& action,
             const std::string& outcome, int status, std::chrono::steady_clock::time_point start);

    Service& service_;
    stream::Relay& relay_;
    LogFn log_;
    std::unique_ptr<httplib::Server> http_;
    std::thread thread_;
    std::thread sweeper_;
    std::mutex sweep_mutex_;
    std::condition_variable sweep_cv_;
    bool stopping_ = false;
};

}  // namespace diane::service

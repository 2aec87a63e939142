#include "diane/service.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

namespace diane::service {

namespace fs = std::filesystem;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void replace_file(const fs::path& path, const std::function<void(const fs::path&)>& write) {
    auto tmp = path;
    tmp += ".tmp";
    write(tmp);
    fs::rename(tmp, path);
}

std::string outcome_of(const soap::SoapResponse& r) {
    if (const auto* f = std::get_if<soap::Fault>(&r)) return std::string(soap::fault_code(*f));
    return "ok";
}

}  // namespace

Service::Service(detect::HaarCascade cascade, records::PatientStore store, Config config,
                 std::shared_ptr<const recognize::EigenModel> model)
    : cascade_(std::move(cascade)),
      config_(std::move(config)),
      store_(std::make_shared<const records::PatientStore>(std::move(store))),
      model_(std::move(model)) {}

std::shared_ptr<const recognize::EigenModel> Service::model() const {
    std::lock_guard lock(snapshot_mutex_);
    return model_;
}

std::shared_ptr<const records::PatientStore> Service::store() const {
    std::lock_guard lock(snapshot_mutex_);
    return store_;
}

soap::SoapResponse Service::handle(const soap::SoapRequest& req) {
    return std::visit(overloaded{
                          [&](const soap::IdentifyRequest& r) { return identify(r); },
                          [&](const soap::EnrollRequest& r) { return enroll(r); },
                          [&](const soap::GetPatientRequest& r) { return get_patient(r); },
                          [&](const soap::TrainRequest& r) { return train(r); },
                      },
                      req);
}

SoapOutcome Service::handle_http(std::string_view body) {
    std::string action;
    soap::SoapResponse resp;
    try {
        const auto req = soap::parse_envelope(body);
        action = soap::action_name(req);
        resp = handle(req);
    } catch (const soap::SoapError& e) {
        resp = e.fault();
    } catch (const std::exception& e) {
        resp = soap::server_fault(soap::code::Internal, e.what());
    }
    const bool fault = std::holds_alternative<soap::Fault>(resp);
    return {fault ? 500 : 200, soap::serialize_response(resp), action, outcome_of(resp)};
}

soap::SoapResponse Service::identify(const soap::IdentifyRequest& req) const {
    const auto model = this->model();
    const auto store = this->store();
    return soap::handle_identify(req, {cascade_, model.get(), *store, config_.default_threshold, config_.detect_params});
}

soap::SoapResponse Service::get_patient(const soap::GetPatientRequest& req) const {
    return soap::handle_get_patient(req, *store());
}

soap::SoapResponse Service::enroll(const soap::EnrollRequest& req) {
    std::lock_guard writer(writer_mutex_);
    const auto current = store();
    if (!current->patients.contains(req.patient_id)) return soap::client_fault(soap::code::NoSuchPatient, req.patient_id);

    // A frame is reduced to its face the same way identify reduces probes; a
    // bare face crop has no detectable sub-window and is kept whole.
    const auto face = soap::primary_face(cascade_, req.image, config_.detect_params);
    const auto image = face ? imaging::crop(req.image, *face) : req.image;

    auto next = *current;
    auto& refs = next.enrollment[req.patient_id];
    fs::create_directories(config_.gallery_dir);
    fs::path target;
    for (std::size_t n = refs.size() + 1;; ++n) {
        target = config_.gallery_dir / (req.patient_id + "_" + std::to_string(n) + ".pgm");
        if (!fs::exists(target)) break;
    }
    imaging::write_pgm_file(target.string(), image);
    const auto base = fs::absolute(next.base_dir.empty() ? fs::path(".") : next.base_dir).lexically_normal();
    refs.push_back(fs::absolute(target).lexically_normal().lexically_relative(base).generic_string());
    const auto count = refs.size();

    replace_file(config_.records_path, [&](const fs::path& p) { records::save_store(next, p); });
    auto snapshot = std::make_shared<const records::PatientStore>(std::move(next));
    std::lock_guard lock(snapshot_mutex_);
    store_ = std::move(snapshot);
    return soap::EnrollResponse{req.patient_id, count};
}

soap::SoapResponse Service::train(const soap::TrainRequest& req) {
    std::lock_guard writer(writer_mutex_);
    const auto current = store();
    std::vector<recognize::LabeledImage> gallery;
    for (const auto& [id, refs] : current->enrollment)
        for (const auto& ref : refs) gallery.push_back({imaging::read_pgm_file(current->resolve(ref).string()), id});

    std::shared_ptr<const recognize::EigenModel> model;
    try {
        model = std::make_shared<const recognize::EigenModel>(
            recognize::train(gallery, req.k_max.value_or(config_.default_k_max)));
    } catch (const recognize::RecognizeError& e) {
        using K = recognize::RecognizeError::Kind;
        if (e.kind() == K::InsufficientGallery || e.kind() == K::DegenerateGallery)
            return soap::client_fault(soap::code::InsufficientGallery, e.what());
        throw;
    }
    if (config_.model_path)
        replace_file(*config_.model_path, [&](const fs::path& p) { recognize::save_model(*model, p.string()); });
    const double sum = std::accumulate(model->eigenvalues.begin(), model->eigenvalues.end(), 0.0);
    soap::TrainResponse resp{gallery.size(), model->k(), sum};
    std::lock_guard lock(snapshot_mutex_);
    model_ = std::move(model);
    return resp;
}

void log_to_stderr(const std::string& line) {
    static std::mutex m;
    std::lock_guard lock(m);
    std::cerr << line << '\n';
}

HttpServer::HttpServer(Service& service, stream::Relay& relay, LogFn log)
    : service_(service), relay_(relay), log_(std::move(log)), http_(std::make_unique<httplib::Server>()) {
    routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::log(const std::string& method, const std::string& path, const std::string& action,
                     const std::string& outcome, int status, std::chrono::steady_clock::time_point start) {
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    char latency[32];
    std::snprintf(latency, sizeof latency, "%.1f", ms);
    log_(method + " " + path + " action=" + (action.empty() ? "-" : action) + " outcome=" + outcome +
         " status=" + std::to_string(status) + " latency_ms=" + latency);
}

void HttpServer::routes() {
    using httplib::Request;
    using httplib::Response;
    using stream::StreamError;

    http_->Post("/soap", [this](const Request& req, Response& res) {
        const auto start = std::chrono::steady_clock::now();
        const auto out = service_.handle_http(req.body);
        res.status = out.http_status;
        res.set_content(out.body, std::string(soap::kContentType));
        log("POST", "/soap", out.action, out.outcome, res.status, start);
    });

    auto stream_error = [](Response& res, const StreamError& e) {
        switch (e.kind()) {
        case StreamError::Kind::NoSuchSession: res.status = 404; break;
        case StreamError::Kind::SessionClosed: res.status = 410; break;
        case StreamError::Kind::StaleSequence: res.status = 409; break;
        case StreamError::Kind::BadFrame: res.status = 400; break;
        }
        res.set_content(std::string(e.what()) + "\n", "text/plain");
        switch (e.kind()) {
        case StreamError::Kind::NoSuchSession: return std::string("NoSuchSession");
        case StreamError::Kind::SessionClosed: return std::string("SessionClosed");
        case StreamError::Kind::StaleSequence: return std::string("StaleSequence");
        case StreamError::Kind::BadFrame: return std::string("BadFrame");
        }
        return std::string();
    };

    http_->Post("/streams", [this, stream_error](const Request&, Response& res) {
        const auto start = std::chrono::steady_clock::now();
        std::string outcome = "ok";
        try {
            const auto id = relay_.create_session();
            res.status = 201;
            res.set_content(id + "\n", "text/plain");
        } catch (const StreamError& e) {
            outcome = stream_error(res, e);
        }
        log("POST", "/streams", "CreateSession", outcome, res.status, start);
    });

    http_->Post(R"(/streams/([0-9a-f]+)/frames)", [this, stream_error](const Request& req, Response& res) {
        const auto start = std::chrono::steady_clock::now();
        const std::string id = req.matches[1];
        std::string outcome = "ok";
        const auto seq_text = req.get_header_value("X-Frame-Seq");
        std::uint64_t seq = 0;
        const auto r = std::from_chars(seq_text.data(), seq_text.data() + seq_text.size(), seq);
        if (seq_text.empty() || r.ec != std::errc() || r.ptr != seq_text.data() + seq_text.size()) {
            res.status = 400;
            res.set_content("X-Frame-Seq header missing or not a number\n", "text/plain");
            outcome = "BadRequest";
        } else {
            try {
                relay_.publish(id, seq, std::vector<std::uint8_t>(req.body.begin(), req.body.end()));
                res.status = 202;
                res.set_content(std::to_string(seq) + "\n", "text/plain");
            } catch (const StreamError& e) {
                outcome = stream_error(res, e);
            }
        }
        log("POST", "/streams/" + id + "/frames", "PublishFrame", outcome, res.status, start);
    });

    http_->Get(R"(/streams/([0-9a-f]+)/live)", [this, stream_error](const Request& req, Response& res) {
        const auto start = std::chrono::steady_clock::now();
        const std::string id = req.matches[1];
        try {
            auto feed = std::make_shared<stream::Feed>(relay_.subscribe(id));
            res.status = 200;
            res.set_chunked_content_provider(
                "multipart/x-mixed-replace; boundary=" + std::string(stream::kBoundary),
                [feed](std::size_t, httplib::DataSink& sink) {
                    for (;;) {
                        auto pull = feed->next_for(std::chrono::milliseconds(200));
                        if (pull.status == stream::Feed::Status::Delivered) {
                            const auto part = stream::encode_part(pull.frame);
                            return sink.write(part.data(), part.size());
                        }
                        if (pull.status == stream::Feed::Status::Ended) {
                            const auto end = stream::multipart_end();
                            sink.write(end.data(), end.size());
                            sink.done();
                            return true;
                        }
                        if (!sink.is_writable()) return false;
                    }
                });
            log("GET", "/streams/" + id + "/live", "Subscribe", "ok", 200, start);
        } catch (const StreamError& e) {
            const auto outcome = stream_error(res, e);
            log("GET", "/streams/" + id + "/live", "Subscribe", outcome, res.status, start);
        }
    });

    http_->Delete(R"(/streams/([0-9a-f]+))", [this, stream_error](const Request& req, Response& res) {
        const auto start = std::chrono::steady_clock::now();
        const std::string id = req.matches[1];
        std::string outcome = "ok";
        try {
            relay_.close_session(id);
            res.status = 204;
        } catch (const StreamError& e) {
            outcome = stream_error(res, e);
        }
        log("DELETE", "/streams/" + id, "CloseSession", outcome, res.status, start);
    });
}

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return http_->bind_to_any_port(host);
    return http_->bind_to_port(host, port) ? port : -1;
}

void HttpServer::run() {
    sweeper_ = std::thread([this] {
        std::unique_lock lock(sweep_mutex_);
        while (!sweep_cv_.wait_for(lock, std::chrono::seconds(30), [this] { return stopping_; }))
            relay_.expire_idle();
    });
    http_->listen_after_bind();
}

void HttpServer::start() {
    thread_ = std::thread([this] { run(); });
    http_->wait_until_ready();
}

void HttpServer::stop() {
    {
        std::lock_guard lock(sweep_mutex_);
        if (stopping_) return;
        stopping_ = true;
    }
    sweep_cv_.notify_all();
    relay_.shutdown();
    http_->stop();
    if (thread_.joinable()) thread_.join();
    if (sweeper_.joinable()) sweeper_.join();
}

}  // namespace diane::service

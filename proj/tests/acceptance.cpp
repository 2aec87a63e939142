// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "diane/base64.hpp"
#include "diane/detect.hpp"
#include "diane/imaging.hpp"
#include "diane/recognize.hpp"
#include "diane/records.hpp"
#include "diane/soap.hpp"
#include "diane/stream.hpp"
#include "diane/synth.hpp"

#include "server_support.hpp"

#include <Eigen/Dense>
#include <httplib.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

using namespace diane;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

using SteadyClock = std::chrono::steady_clock;

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(SteadyClock::time_point t) {
    return std::chrono::duration<double>(SteadyClock::now() - t).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

imaging::GrayImage fixture_image(const std::string& rel) {
    return imaging::read_pgm_file((diane::testing::fixture_dir() / rel).string());
}

std::vector<recognize::LabeledImage> fixture_gallery(const records::PatientStore& store) {
    std::vector<recognize::LabeledImage> g;
    for (const auto& [id, refs] : store.enrollment)
        for (const auto& r : refs) g.push_back({imaging::read_pgm_file(store.resolve(r).string()), id});
    return g;
}

// 1
Outcome pca_oracle() {
    const auto start = SteadyClock::now();
    std::mt19937_64 rng(101);
    std::vector<recognize::LabeledImage> gallery;
    for (int i = 0; i < 5; ++i) gallery.push_back({diane::testing::random_image(rng, 8, 8), "G" + std::to_string(i)});
    const auto model = recognize::train(gallery, 16, 8, 8);

    const int d = 64, m = 5;
    Eigen::MatrixXd a(d, m);
    for (int j = 0; j < m; ++j) {
        const auto f = recognize::preprocess(gallery[j].image, 8, 8);
        for (int i = 0; i < d; ++i) a(i, j) = f[i] - model.mean[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> direct(a * a.transpose());
    double value_err = 0, vector_err = 0;
    for (std::size_t j = 0; j < model.k(); ++j) {
        const int col = d - 1 - static_cast<int>(j);
        const double lambda = direct.eigenvalues()(col);
        value_err = std::max(value_err, std::abs(model.eigenvalues[j] - lambda) / lambda);
        const Eigen::VectorXd u = direct.eigenvectors().col(col);
        double plus = 0, minus = 0;
        for (int i = 0; i < d; ++i) {
            plus = std::max(plus, std::abs(model.basis[j][i] - u(i)));
            minus = std::max(minus, std::abs(model.basis[j][i] + u(i)));
        }
        vector_err = std::max(vector_err, std::min(plus, minus));
    }
    // the direct covariance has exactly M-1 nonzero eigenvalues
    const double tail = std::abs(direct.eigenvalues()(d - 1 - m + 1)) / direct.eigenvalues()(d - 1);
    const double secs = seconds_since(start);
    const bool pass = model.k() == 4 && value_err <= 1e-8 && vector_err <= 1e-8 && tail < 1e-10 && secs < 1.0;
    return {pass, "k=" + std::to_string(model.k()) + " eigenvalue_rel_err=" + fmt("%.2e", value_err) +
                      " eigenvector_err=" + fmt("%.2e", vector_err) + " time=" + fmt("%.3fs", secs)};
}

// 2
Outcome orthonormality() {
    const auto store = records::load_store(diane::testing::fixture_dir() / "records.json");
    const auto gallery = fixture_gallery(store);
    const auto model = recognize::train(gallery);
    double worst = 0;
    for (std::size_t i = 0; i < model.k(); ++i)
        for (std::size_t j = 0; j < model.k(); ++j) {
            double dot = 0;
            for (std::size_t p = 0; p < model.dimension(); ++p) dot += model.basis[i][p] * model.basis[j][p];
            worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    return {gallery.size() == 30 && model.raster_w == 64 && worst <= 1e-9,
            "images=" + std::to_string(gallery.size()) + " k=" + std::to_string(model.k()) +
                " max_dev=" + fmt("%.2e", worst)};
}

// 3
Outcome benchmark() {
    const auto start = SteadyClock::now();
    const auto bench = synth::make_benchmark();
    int correct = 0;
    for (std::size_t leave = 0; leave < bench.gallery.size(); ++leave) {
        std::vector<recognize::LabeledImage> g;
        for (std::size_t i = 0; i < bench.gallery.size(); ++i)
            if (i != leave) g.push_back({bench.gallery[i].image, bench.gallery[i].label});
        const auto r = recognize::identify(recognize::train(g), bench.gallery[leave].image);
        if (const auto* k = std::get_if<recognize::Known>(&r); k && k->label == bench.gallery[leave].label) ++correct;
    }
    std::vector<recognize::LabeledImage> full;
    for (const auto& s : bench.gallery) full.push_back({s.image, s.label});
    const auto model = recognize::train(full);
    int rejected = 0;
    for (const auto& s : bench.impostors)
        if (std::holds_alternative<recognize::Unknown>(recognize::identify(model, s.image))) ++rejected;
    const double accuracy = static_cast<double>(correct) / static_cast<double>(bench.gallery.size());
    const double rejection = static_cast<double>(rejected) / static_cast<double>(bench.impostors.size());
    const double secs = seconds_since(start);
    return {accuracy >= 0.9 && rejection >= 0.8 && secs < 30.0,
            "seed=" + std::to_string(synth::kBenchmarkSeed) + " theta=" + fmt("%.2f", recognize::kDefaultThreshold) +
                " loo_rank1=" + std::to_string(correct) + "/" + std::to_string(bench.gallery.size()) +
                " impostors_rejected=" + std::to_string(rejected) + "/" + std::to_string(bench.impostors.size()) +
                " time=" + fmt("%.2fs", secs)};
}

// 4
Outcome integral_oracle() {
    std::mt19937_64 rng(404);
    int mismatches = 0, checks = 0;
    for (int n = 0; n < 100; ++n) {
        const auto img = diane::testing::random_image(rng, 8, 8);
        const auto ii = imaging::integral_image(img);
        for (int k = 0; k < 50; ++k) {
            const int x = static_cast<int>(rng() % 8), y = static_cast<int>(rng() % 8);
            const int w = 1 + static_cast<int>(rng() % (8 - x)), h = 1 + static_cast<int>(rng() % (8 - y));
            std::int64_t expect = 0;
            for (int yy = y; yy < y + h; ++yy)
                for (int xx = x; xx < x + w; ++xx) expect += img.at(xx, yy);
            mismatches += imaging::rect_sum(ii, imaging::Rect(x, y, w, h)) != expect;
            ++checks;
        }
    }
    return {mismatches == 0, std::to_string(checks) + " rects, " + std::to_string(mismatches) + " mismatches"};
}

// 5
Outcome localization() {
    const auto cascade = detect::load_cascade_file(diane::testing::cascade_path().string());
    const auto style = synth::make_subject(synth::kBenchmarkSeed * 1000);
    synth::Rng rng(synth::kBenchmarkSeed);
    const imaging::Rect truth(32, 32, 48, 48);
    const auto frame = synth::render_frame(128, 128, style, truth, rng, synth::kBenchmarkNoise);
    const auto found = detect::detect_faces(cascade, frame);
    const auto black = detect::detect_faces(cascade, imaging::GrayImage(128, 128, 0));
    double err = INFINITY;
    if (found.size() == 1) {
        const auto& r = found[0].rect;
        err = std::hypot(r.x() + r.w() / 2.0 - (truth.x() + truth.w() / 2.0),
                         r.y() + r.h() / 2.0 - (truth.y() + truth.h() / 2.0));
    }
    return {found.size() == 1 && err <= 2.0 && black.empty(),
            "detections=" + std::to_string(found.size()) + " center_error=" + fmt("%.2fpx", err) +
                " black_frame_detections=" + std::to_string(black.size())};
}

// 6
Outcome soap_conformance() {
    std::vector<std::string> problems;
    auto fixture = [](const std::string& name) { return slurp(diane::testing::source_path("tests/fixtures/soap/" + name)); };

    const auto request = fixture("identify_request.xml");
    const auto parsed = soap::parse_envelope(request);
    if (soap::serialize_request(parsed) != request) problems.push_back("request fixture");
    const auto fault = fixture("fault_unknown_face.xml");
    if (soap::serialize_response(soap::parse_response(fault)) != fault) problems.push_back("fault fixture");
    const auto response = fixture("identify_response_p001.xml");
    if (soap::serialize_response(soap::parse_response(response)) != response) problems.push_back("response fixture");

    std::mt19937_64 rng(66);
    int round_trips = 0;
    for (int n = 0; n < 50; ++n) {
        soap::PatientView v{"P" + std::to_string(rng() % 1000), "Name <" + std::to_string(n) + "> & co",
                            n % 2 ? "male" : "female", "1980-02-1" + std::to_string(n % 10), {}};
        for (int p = 1; p <= 4; ++p) {
            records::Page page{p, "Page " + std::to_string(p), {}};
            for (int l = static_cast<int>(rng() % 3); l > 0; --l) page.lines.push_back("line \"" + std::to_string(rng() % 99) + "\"");
            v.pages.push_back(page);
        }
        soap::SoapResponse resp;
        switch (n % 5) {
        case 0: resp = soap::IdentifyResponse{v, static_cast<double>(rng() % 1000001) / 1e6}; break;
        case 1: resp = soap::GetPatientResponse{v}; break;
        case 2: resp = soap::EnrollResponse{v.patient_id, rng() % 50}; break;
        case 3: resp = soap::TrainResponse{rng() % 50, rng() % 16, static_cast<double>(rng() % 100000) / 7.0}; break;
        default: resp = soap::client_fault(soap::code::NoSuchPatient, v.name);
        }
        round_trips += soap::parse_response(soap::serialize_response(resp)) == resp;
    }
    if (round_trips != 50) problems.push_back("round trips " + std::to_string(round_trips) + "/50");

    // malformed inputs over HTTP
    diane::testing::LiveServer server;
    httplib::Client http("127.0.0.1", server.port());
    auto env = [](const std::string& body) {
        return "<s:Envelope xmlns:s=\"http://schemas.xmlsoap.org/soap/envelope/\"><s:Body>" + body + "</s:Body></s:Envelope>";
    };
    const std::string p2 = "P2\n1 1\n255\n7\n";
    const std::string p2_b64 = base64::encode(std::vector<std::uint8_t>(p2.begin(), p2.end()));
    const std::vector<std::pair<std::string, std::string_view>> classes = {
        {"<Envelope", soap::code::XmlMalformed},
        {env("<TrainModel xmlns='urn:diane'/><TrainModel xmlns='urn:diane'/>"), soap::code::XmlMalformed},
        {env("<Reboot xmlns='urn:diane'/>"), soap::code::UnknownAction},
        {env("<GetPatient xmlns='urn:diane'/>"), soap::code::MissingParameter},
        {env("<TrainModel xmlns='urn:diane'><KMax>0</KMax></TrainModel>"), soap::code::InvalidParameter},
        {env("<IdentifyPatient xmlns='urn:diane'><Image encoding='pgm+base64'>" + p2_b64 + "</Image></IdentifyPatient>"),
         soap::code::BadImagePayload},
        {soap::serialize_request(soap::IdentifyRequest{fixture_image("probes/P001.pgm"), std::nullopt}),
         soap::code::ModelNotTrained},
        {soap::serialize_request(soap::GetPatientRequest{"P999"}), soap::code::NoSuchPatient},
    };
    int ok_classes = 0;
    for (const auto& [body, expected] : classes) {
        const auto res = http.Post("/soap", body, "text/xml");
        bool good = false;
        if (res && res->status == 500) {
            try {
                const auto r = soap::parse_response(res->body);
                const auto* f = std::get_if<soap::Fault>(&r);
                good = f && soap::fault_code(*f) == expected && f->faultstring.starts_with("diane:");
            } catch (const std::exception&) {
            }
        }
        if (good)
            ++ok_classes;
        else
            problems.push_back(std::string(expected));
    }
    server.service().train({});
    const auto nf = http.Post("/soap", soap::serialize_request(soap::IdentifyRequest{fixture_image("probes/blank.pgm"), std::nullopt}), "text/xml");
    const auto uf = http.Post(
        "/soap", soap::serialize_request(soap::IdentifyRequest{fixture_image("probes/impostors/X01.pgm"), std::nullopt}), "text/xml");
    for (const auto& [res, expected] : {std::pair{&nf, soap::code::NoFaceDetected}, std::pair{&uf, soap::code::UnknownFace}}) {
        bool good = *res && (*res)->status == 500 &&
                    soap::fault_code(std::get<soap::Fault>(soap::parse_response((*res)->body))) == expected;
        if (good)
            ++ok_classes;
        else
            problems.push_back(std::string(expected));
    }

    std::string detail = "fixtures byte-exact, " + std::to_string(round_trips) + "/50 round trips, " +
                         std::to_string(ok_classes) + "/" + std::to_string(classes.size() + 2) + " fault classes";
    for (const auto& p : problems) detail += "; failed: " + p;
    return {problems.empty(), detail};
}

// 7
Outcome end_to_end() {
    const auto start = SteadyClock::now();
    diane::testing::TempDir dir;
    diane::testing::copy_fixture(dir / "f");
    // start with an empty gallery and enroll everything over the wire
    auto store = records::load_store(dir / "f" / "records.json");
    const auto originals = store.enrollment;
    store.enrollment.clear();
    records::save_store(store, dir / "f" / "records.json");

    stream::Relay relay;
    service::Config config;
    config.records_path = dir / "f" / "records.json";
    config.gallery_dir = dir / "f" / "enrolled";
    service::Service svc(detect::load_cascade_file(diane::testing::cascade_path().string()), store, config);
    service::HttpServer http(svc, relay, [](const std::string&) {});
    const int port = http.bind("127.0.0.1", 0);
    if (port <= 0) return {false, "could not bind"};
    http.start();
    client::Client c(client::ClientConfig::from_url("http://127.0.0.1:" + std::to_string(port)));

    int enrolled = 0;
    for (const auto& [id, refs] : originals)
        for (const auto& ref : refs) {
            const auto r = c.call(soap::EnrollRequest{id, imaging::read_pgm_file(store.resolve(ref).string())});
            enrolled += std::holds_alternative<soap::EnrollResponse>(r);
        }
    const auto trained = c.call(soap::TrainRequest{});
    const auto* t = std::get_if<soap::TrainResponse>(&trained);

    const std::vector<std::string> titles = {"Biodata", "Allergies", "Immunizations", "Medications"};
    int correct = 0;
    std::string misses;
    for (const auto& [id, rec] : store.patients) {
        const auto r = c.call(soap::IdentifyRequest{fixture_image("probes/" + id + ".pgm"), std::nullopt});
        const auto* ok = std::get_if<soap::IdentifyResponse>(&r);
        bool good = ok && ok->patient.patient_id == id && ok->patient.pages.size() == 4 &&
                    ok->patient.pages == records::record_pages(rec);
        for (std::size_t p = 0; good && p < 4; ++p)
            good = ok->patient.pages[p].title == titles[p] && ok->patient.pages[p].index == static_cast<int>(p + 1);
        good = good && ok->patient.pages[0].lines.front() == rec.name;
        if (good)
            ++correct;
        else
            misses += " " + id;
    }
    http.stop();
    const double secs = seconds_since(start);
    const bool pass = enrolled == 30 && t && t->image_count == 30 && correct == 10 && secs < 60.0;
    return {pass, "enrolled=" + std::to_string(enrolled) + " trained_images=" + std::to_string(t ? t->image_count : 0) +
                      " identified=" + std::to_string(correct) + "/10" + (misses.empty() ? "" : " missed:" + misses) +
                      " time=" + fmt("%.2fs", secs)};
}

// 8
Outcome streaming() {
    auto pgm = [](std::uint64_t v) { return imaging::encode_pgm(imaging::GrayImage(2, 2, static_cast<std::uint8_t>(v))); };
    int violations = 0;
    std::size_t max_retained = 0;
    const int schedules = 1000;
    for (int schedule = 0; schedule < schedules; ++schedule) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(schedule) + 9000);
        stream::Relay relay;
        const int sessions = 1 + static_cast<int>(rng() % 3);
        std::vector<std::string> ids;
        std::vector<std::uint64_t> seq(sessions, 0);
        for (int s = 0; s < sessions; ++s) ids.push_back(relay.create_session());
        struct Sub {
            int session;
            stream::Feed feed;
            std::uint64_t last = 0;
        };
        std::vector<Sub> subs;
        for (int step = 0; step < 60; ++step) {
            const int s = static_cast<int>(rng() % sessions);
            switch (rng() % 6) {
            case 0:
            case 1:
                try {
                    seq[s] += 1 + rng() % 3;
                    relay.publish(ids[s], seq[s], pgm(seq[s]));
                } catch (const stream::StreamError&) {
                }
                break;
            case 2: subs.push_back({s, relay.subscribe(ids[s])}); break;
            case 3:
            case 4:
                if (!subs.empty()) {
                    auto& sub = subs[rng() % subs.size()];
                    const auto pull = sub.feed.next_for(0ms);
                    if (pull.status == stream::Feed::Status::Delivered) {
                        if (pull.frame.seq <= sub.last) ++violations;
                        sub.last = pull.frame.seq;
                    }
                }
                break;
            default:
                if (rng() % 4 == 0) relay.close_session(ids[s]);
            }
            if (relay.retained_frames() > static_cast<std::size_t>(sessions)) ++violations;
            max_retained = std::max(max_retained, relay.retained_frames());
        }
    }

    // late joiner
    stream::Relay relay;
    const auto id = relay.create_session();
    for (std::uint64_t s = 1; s <= 5; ++s) relay.publish(id, s, pgm(s));
    auto late = relay.subscribe(id);
    const auto first = late.next_for(0ms);
    const bool late_ok = first.status == stream::Feed::Status::Delivered && first.frame.seq == 5;

    // close unblocks a waiting subscriber
    auto waiting = relay.subscribe(id);
    waiting.next_for(0ms);
    std::atomic<bool> ended{false};
    SteadyClock::time_point closed_at;
    double unblock = INFINITY;
    std::thread t([&] {
        ended = !waiting.next().has_value();
        unblock = seconds_since(closed_at);
    });
    std::this_thread::sleep_for(50ms);
    closed_at = SteadyClock::now();
    relay.close_session(id);
    t.join();

    const bool pass = violations == 0 && late_ok && ended && unblock < 1.0;
    return {pass, std::to_string(schedules) + " schedules, " + std::to_string(violations) +
                      " violations, late_joiner_first=" + std::to_string(late_ok ? 5 : first.frame.seq) +
                      " close_unblock=" + fmt("%.3fs", unblock)};
}

// 9
Outcome persistence() {
    diane::testing::TempDir dir;
    diane::testing::copy_fixture(dir / "f");
    const auto store = records::load_store(dir / "f" / "records.json");
    records::save_store(store, dir / "f" / "a.json");
    records::save_store(records::load_store(dir / "f" / "a.json"), dir / "f" / "b.json");
    const bool store_ok = slurp(dir / "f" / "a.json") == slurp(dir / "f" / "b.json") &&
                          slurp(dir / "f" / "a.json") == slurp(dir / "f" / "records.json");

    const auto model = recognize::train(fixture_gallery(store));
    recognize::save_model(model, (dir / "a.bin").string());
    recognize::save_model(recognize::load_model((dir / "a.bin").string()), (dir / "b.bin").string());
    const auto a = slurp(dir / "a.bin");
    const bool model_ok = !a.empty() && a == slurp(dir / "b.bin");
    return {store_ok && model_ok, std::string("store ") + (store_ok ? "identical" : "differs") + ", model " +
                                      (model_ok ? "identical" : "differs") + " (" + std::to_string(a.size()) + " bytes)"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"PCA oracle equivalence", pca_oracle},
        {"basis orthonormality", orthonormality},
        {"recognition benchmark", benchmark},
        {"integral-image oracle", integral_oracle},
        {"detection localization", localization},
        {"SOAP conformance", soap_conformance},
        {"end-to-end pipeline", end_to_end},
        {"streaming semantics", streaming},
        {"persistence stability", persistence},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
                  << o.detail << ")" << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failures == 0 ? 0 : 1;
}

#include "diane/cli.hpp"

#include "diane/client.hpp"
#include "diane/detect.hpp"
#include "diane/imaging.hpp"
#include "diane/recognize.hpp"
#include "diane/service.hpp"
#include "diane/soap.hpp"
#include "diane/stream.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

namespace diane::cli {

namespace fs = std::filesystem;

namespace {

struct ClientFlags {
    std::string server = client::kDefaultServer;
    int timeout = 30;
};

void add_client_flags(CLI::App* cmd, ClientFlags& f) {
    cmd->add_option("--server", f.server, "Service base URL")->envname("DIANE_SERVER")->capture_default_str();
    cmd->add_option("--timeout", f.timeout, "Request timeout in seconds")->check(CLI::PositiveNumber)->capture_default_str();
}

client::Client connect(const ClientFlags& f) {
    return client::Client(client::ClientConfig::from_url(f.server, std::chrono::seconds(f.timeout)));
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

imaging::GrayImage read_image(const std::string& path) {
    try {
        return imaging::read_pgm_file(path);
    } catch (const std::exception& e) {
        throw std::runtime_error("cannot use " + path + " as a PGM image: " + e.what());
    }
}

std::pair<std::string, int> parse_listen(const std::string& listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos || colon == 0) throw std::invalid_argument("--listen must be host:port");
    int port = -1;
    try {
        std::size_t used = 0;
        port = std::stoi(listen.substr(colon + 1), &used);
        if (used != listen.size() - colon - 1) port = -1;
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) throw std::invalid_argument("--listen port must be 0-65535");
    return {listen.substr(0, colon), port};
}

struct ServeFlags {
    std::string records;
    std::string cascade;
    std::string gallery;
    std::string model;
    std::string listen = "127.0.0.1:8080";
    double threshold = recognize::kDefaultThreshold;
    int k = recognize::kDefaultKMax;
    bool train_on_start = false;
};

int cmd_serve(const ServeFlags& f, std::ostream& err) {
    const auto [host, port] = parse_listen(f.listen);
    auto cascade = detect::load_cascade_file(f.cascade);
    auto store = records::load_store(f.records);

    service::Config config;
    config.records_path = f.records;
    config.gallery_dir = f.gallery.empty() ? fs::path(f.records).parent_path() / "enrolled" : fs::path(f.gallery);
    if (!f.model.empty()) config.model_path = fs::path(f.model);
    config.default_threshold = f.threshold;
    config.default_k_max = f.k;

    std::shared_ptr<const recognize::EigenModel> model;
    if (!f.train_on_start && config.model_path && fs::exists(*config.model_path))
        model = std::make_shared<const recognize::EigenModel>(recognize::load_model(config.model_path->string()));

    service::Service svc(std::move(cascade), std::move(store), config, model);
    if (model) service::log_to_stderr("model loaded from " + f.model + " k=" + std::to_string(model->k()));
    if (f.train_on_start) {
        const auto resp = svc.train({f.k});
        if (const auto* fault = std::get_if<soap::Fault>(&resp)) {
            err << "diane serve: training failed: " << fault->faultstring << '\n';
            return exit_code::Transport;
        }
        const auto& t = std::get<soap::TrainResponse>(resp);
        char sum[64];
        std::snprintf(sum, sizeof sum, "%.6g", t.eigenvalue_sum);
        service::log_to_stderr("trained image_count=" + std::to_string(t.image_count) + " k=" + std::to_string(t.k) +
                               " eigenvalue_sum=" + sum);
    }

    // Signals go to the waiting thread below, not to server workers.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    stream::Relay relay;
    service::HttpServer server(svc, relay);
    const int bound = server.bind(host, port);
    if (bound < 0) {
        err << "diane serve: cannot listen on " << f.listen << '\n';
        return exit_code::Transport;
    }
    server.start();
    service::log_to_stderr("listening on http://" + host + ":" + std::to_string(bound));

    int sig = 0;
    sigwait(&signals, &sig);
    service::log_to_stderr(std::string("shutting down on ") + (sig == SIGINT ? "SIGINT" : "SIGTERM"));
    server.stop();
    return exit_code::Ok;
}

int cmd_identify(const std::string& image_path, std::optional<double> threshold, const ClientFlags& cf,
                 std::ostream& out, std::ostream& err) {
    auto image = read_image(image_path);
    auto c = connect(cf);
    const auto resp = c.call(soap::IdentifyRequest{std::move(image), threshold});
    if (const auto* known = std::get_if<soap::IdentifyResponse>(&resp)) {
        out << render_pages(known->patient.pages);
        err << "identified " << known->patient.patient_id << " similarity=" << soap::format_similarity(known->similarity)
            << '\n';
        return exit_code::Ok;
    }
    const auto& fault = std::get<soap::Fault>(resp);
    err << fault.faultstring << '\n';
    const auto code = soap::fault_code(fault);
    if (code == soap::code::UnknownFace) return exit_code::UnknownFace;
    if (code == soap::code::NoFaceDetected) return exit_code::NoFace;
    return exit_code::OtherFault;
}

int cmd_enroll(const std::string& patient_id, const std::string& image_path, const ClientFlags& cf,
               std::ostream& out, std::ostream& err) {
    auto image = read_image(image_path);
    auto c = connect(cf);
    const auto resp = c.call(soap::EnrollRequest{patient_id, std::move(image)});
    if (const auto* ok = std::get_if<soap::EnrollResponse>(&resp)) {
        out << ok->patient_id << ' ' << ok->enrollment_count << '\n';
        return exit_code::Ok;
    }
    err << std::get<soap::Fault>(resp).faultstring << '\n';
    return exit_code::Fault;
}

int cmd_train(std::optional<int> k, const ClientFlags& cf, std::ostream& out, std::ostream& err) {
    auto c = connect(cf);
    const auto resp = c.call(soap::TrainRequest{k});
    if (const auto* ok = std::get_if<soap::TrainResponse>(&resp)) {
        out << "image_count=" << ok->image_count << " k=" << ok->k << " eigenvalue_sum=" << ok->eigenvalue_sum << '\n';
        return exit_code::Ok;
    }
    err << std::get<soap::Fault>(resp).faultstring << '\n';
    return exit_code::Fault;
}

int cmd_stream_pub(const std::string& dir, double fps, const ClientFlags& cf, std::ostream& out, std::ostream& err) {
    std::vector<fs::path> files;
    if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    if (files.empty()) {
        err << "diane stream pub: " << dir << " contains no .pgm files\n";
        return exit_code::Usage;
    }
    std::sort(files.begin(), files.end());

    auto c = connect(cf);
    const auto id = c.create_stream();
    out << id << std::endl;
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(1.0 / fps));
    auto due = std::chrono::steady_clock::now();
    std::uint64_t seq = 0;
    for (const auto& f : files) {
        std::this_thread::sleep_until(due);
        c.publish_frame(id, ++seq, read_bytes(f));
        due += period;
    }
    c.close_stream(id);
    err << "published " << seq << " frames to " << id << '\n';
    return exit_code::Ok;
}

int cmd_stream_watch(const std::string& id, const std::string& out_dir, const ClientFlags& cf, std::ostream& out) {
    fs::create_directories(out_dir);
    auto c = connect(cf);
    c.watch(id, [&](const stream::MultipartReader::Part& part) {
        const auto path = fs::path(out_dir) / (std::to_string(part.seq) + ".pgm");
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(reinterpret_cast<const char*>(part.body.data()), static_cast<std::streamsize>(part.body.size()));
        if (!f) throw std::runtime_error("cannot write " + path.string());
        out << path.string() << std::endl;
    });
    return exit_code::Ok;
}

}  // namespace

std::string render_pages(const std::vector<records::Page>& pages) {
    std::string text;
    for (std::size_t i = 0; i < pages.size(); ++i) {
        if (i > 0) text += "--\n";
        for (const auto& line : pages[i].lines) text += line + "\n";
    }
    return text;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Patient identification service and client", "diane"};
    app.require_subcommand(1);

    ServeFlags sf;
    auto* serve = app.add_subcommand("serve", "Run the SOAP service and stream relay");
    serve->add_option("--records", sf.records, "Record store document")->required()->check(CLI::ExistingFile);
    serve->add_option("--cascade", sf.cascade, "Haar cascade file")->required()->check(CLI::ExistingFile);
    serve->add_option("--gallery", sf.gallery, "Directory for enrolled images (default: <records dir>/enrolled)");
    serve->add_option("--model", sf.model, "Eigen model file, loaded at start and rewritten after training");
    serve->add_option("--listen", sf.listen, "host:port, port 0 picks a free one")->capture_default_str();
    serve->add_option("--threshold", sf.threshold, "Default similarity threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    serve->add_option("--k", sf.k, "Maximum eigenfaces kept by training")->check(CLI::PositiveNumber)->capture_default_str();
    serve->add_flag("--train-on-start", sf.train_on_start, "Train from the enrolled images before serving");

    ClientFlags cf;
    std::string image, patient_id, dir, session, out_dir;
    std::optional<double> threshold;
    std::optional<int> k;
    double fps = 10;

    auto* identify = app.add_subcommand("identify", "Identify the patient in a captured frame");
    identify->add_option("image", image, "PGM frame")->required();
    identify->add_option("--threshold", threshold, "Similarity threshold for this request")->check(CLI::Range(0.0, 1.0));
    add_client_flags(identify, cf);

    auto* enroll = app.add_subcommand("enroll", "Add a face image to a patient's gallery");
    enroll->add_option("patient_id", patient_id)->required();
    enroll->add_option("image", image, "PGM face or frame")->required();
    add_client_flags(enroll, cf);

    auto* train = app.add_subcommand("train", "Retrain the eigenface model from all enrolled images");
    train->add_option("--k", k, "Maximum eigenfaces")->check(CLI::PositiveNumber);
    add_client_flags(train, cf);

    auto* stream_cmd = app.add_subcommand("stream", "Live frame relay");
    stream_cmd->require_subcommand(1);
    auto* pub = stream_cmd->add_subcommand("pub", "Publish a directory of PGM frames as a new session");
    pub->add_option("source", dir, "Directory of .pgm frames, sent in name order")->required();
    pub->add_option("--fps", fps, "Frames per second")->check(CLI::PositiveNumber)->capture_default_str();
    add_client_flags(pub, cf);
    auto* watch = stream_cmd->add_subcommand("watch", "Save a session's frames as {seq}.pgm");
    watch->add_option("session_id", session)->required();
    watch->add_option("out_dir", out_dir)->required();
    add_client_flags(watch, cf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_code::Ok : exit_code::Usage;
    }

    try {
        if (*serve) return cmd_serve(sf, err);
        if (*identify) return cmd_identify(image, threshold, cf, out, err);
        if (*enroll) return cmd_enroll(patient_id, image, cf, out, err);
        if (*train) return cmd_train(k, cf, out, err);
        if (*pub) return cmd_stream_pub(dir, fps, cf, out, err);
        if (*watch) return cmd_stream_watch(session, out_dir, cf, out);
    } catch (const client::SessionError& e) {
        err << "diane: session refused (HTTP " << e.status() << "): " << e.what() << '\n';
        return exit_code::Fault;
    } catch (const std::exception& e) {
        err << "diane: " << e.what() << '\n';
        return exit_code::Transport;
    }
    return exit_code::Usage;
}

}  // namespace diane::cli

// Writes the 10-patient fixture: record store, enrollment faces, profile
// portraits and probe frames, all from fixed seeds.

#include "diane/imaging.hpp"
#include "diane/records.hpp"
#include "diane/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace diane;

namespace {

constexpr std::uint64_t kFixtureSeed = 7000;
constexpr int kFace = 48;
constexpr int kFrameW = 160;
constexpr int kFrameH = 120;
constexpr int kProbeX = 56;
constexpr int kProbeY = 36;

struct Patient {
    const char* name;
    records::Gender gender;
    const char* born;
    std::vector<std::pair<const char*, const char*>> allergies, immunizations, medications;
};

const std::vector<Patient>& patients() {
    using records::Gender;
    static const std::vector<Patient> list = {
        {"Siti Rahmawati", Gender::Female, "1984-03-12",
         {{"Penicillin", "2009-06-02"}, {"Peanuts", "1995-11-20"}},
         {{"Hepatitis B", "1984-03-13"}, {"Tetanus booster", "2015-08-30"}},
         {{"Amoxicillin 500 mg", "2021-01-14"}}},
        {"Budi Santoso", Gender::Male, "1976-07-04", {}, {{"Influenza", "2022-10-03"}}, {{"Metformin 850 mg", "2018-05-22"}}},
        {"Dewi Lestari", Gender::Female, "1991-12-25", {{"Latex", "2013-02-11"}}, {}, {}},
        {"Agus Wijaya", Gender::Male, "1968-01-30", {}, {{"Pneumococcal", "2020-09-15"}}, {{"Amlodipine 5 mg", "2016-04-01"}, {"Atorvastatin 20 mg", "2016-04-01"}}},
        {"Rina Kusuma", Gender::Female, "2001-05-17", {{"Sulfonamides", "2019-07-08"}}, {{"HPV", "2014-03-03"}}, {}},
        {"Hendra Gunawan", Gender::Male, "1959-09-09", {}, {}, {{"Warfarin 3 mg", "2012-12-12"}}},
        {"Maya Sari", Gender::Female, "1988-08-21", {{"Shellfish", "2000-06-30"}}, {{"Measles", "1989-09-01"}}, {}},
        {"Joko Prasetyo", Gender::Male, "1995-02-14", {}, {{"Tetanus booster", "2019-02-14"}}, {{"Salbutamol inhaler", "2010-10-10"}}},
        {"Ayu Wulandari", Gender::Female, "1979-11-03", {{"Aspirin", "2004-04-04"}}, {}, {{"Levothyroxine 50 mcg", "2011-03-19"}}},
        {"Rudi Hartono", Gender::Male, "1983-06-06", {}, {{"Hepatitis A", "2008-07-07"}}, {}},
    };
    return list;
}

std::string patient_id(std::size_t i) {
    auto n = std::to_string(i + 1);
    return "P" + std::string(3 - n.size(), '0') + n;
}

std::vector<records::MedicalEntry> entries(const std::vector<std::pair<const char*, const char*>>& src) {
    std::vector<records::MedicalEntry> out;
    for (const auto& [text, date] : src) out.push_back({text, records::parse_date(date)});
    return out;
}

void write(const fs::path& root, const std::string& rel, const imaging::GrayImage& img) {
    fs::create_directories((root / rel).parent_path());
    imaging::write_pgm_file((root / rel).string(), img);
}

void generate(const fs::path& root) {
    synth::Rng rng(kFixtureSeed);
    records::PatientStore store;
    store.base_dir = root;
    const auto& list = patients();
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& p = list[i];
        const auto id = patient_id(i);
        const auto style = synth::make_subject(kFixtureSeed + i);

        records::PatientRecord rec;
        rec.patient_id = id;
        rec.name = p.name;
        rec.gender = p.gender;
        rec.birth_date = records::parse_date(p.born);
        rec.profile_image = "profiles/" + id + ".pgm";
        rec.medical = {entries(p.allergies), entries(p.immunizations), entries(p.medications)};
        write(root, rec.profile_image, synth::render_face(style, 96, rng, 2.0));

        std::vector<imaging::GrayImage> faces;
        for (int k = 1; k <= 3; ++k) {
            const auto rel = "faces/" + id + "_" + std::to_string(k) + ".pgm";
            faces.push_back(synth::render_face(style, kFace, rng, synth::kBenchmarkNoise));
            write(root, rel, faces.back());
            store.enrollment[id].push_back(rel);
        }

        // the first enrolled face, as a camera frame
        auto frame = synth::render_background(kFrameW, kFrameH, rng);
        synth::paste(frame, faces.front(), kProbeX, kProbeY);
        write(root, "probes/" + id + ".pgm", frame);
        // a new capture of the same subject
        write(root, "probes/fresh/" + id + ".pgm",
              synth::render_frame(kFrameW, kFrameH, style, {kProbeX, kProbeY, kFace, kFace}, rng, synth::kBenchmarkNoise));
        store.patients.emplace(id, std::move(rec));
    }
    for (int s = 0; s < 3; ++s) {
        const auto style = synth::make_subject(kFixtureSeed + 500 + static_cast<std::uint64_t>(s));
        write(root, "probes/impostors/X0" + std::to_string(s + 1) + ".pgm",
              synth::render_frame(kFrameW, kFrameH, style, {kProbeX, kProbeY, kFace, kFace}, rng, synth::kBenchmarkNoise));
    }
    write(root, "probes/blank.pgm", imaging::GrayImage(kFrameW, kFrameH, 0));
    records::save_store(store, root / "records.json");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Writes the synthetic patient fixture", "diane-synth"};
    std::string out = "data/fixture";
    app.add_option("out_dir", out, "Fixture directory")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    try {
        generate(out);
    } catch (const std::exception& e) {
        std::cerr << "diane-synth: " << e.what() << '\n';
        return 1;
    }
    std::cout << "wrote fixture to " << out << '\n';
    return 0;
}

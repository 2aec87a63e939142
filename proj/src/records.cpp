#include "diane/records.hpp"

#include "diane/imaging.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace diane::records {

using nlohmann::json;

namespace {

struct ListKeys {
    const char* list;
    const char* text;
    const char* date;
    std::vector<MedicalEntry> MedicalRecord::*member;
};

constexpr ListKeys kLists[] = {
    {"allergies", "substance", "noted_on", &MedicalRecord::allergies},
    {"immunizations", "vaccine", "given_on", &MedicalRecord::immunizations},
    {"medications", "drug", "prescribed_on", &MedicalRecord::medications},
};

[[noreturn]] void parse_fail(const std::string& msg) { throw StoreError(StoreError::Kind::ParseError, msg); }

void only_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) parse_fail(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            parse_fail(where + ": unknown key '" + key + "'");
    }
    for (const char* a : allowed)
        if (!obj.contains(a)) parse_fail(where + ": missing key '" + a + "'");
}

std::string text_field(const json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_string()) parse_fail(where + ": '" + key + "' must be a string");
    return v.get<std::string>();
}

void sort_entries(std::vector<MedicalEntry>& entries) {
    std::sort(entries.begin(), entries.end(), [](const MedicalEntry& a, const MedicalEntry& b) {
        if (a.date != b.date) return a.date < b.date;
        return a.text < b.text;
    });
}

bool decodes_as_pgm(const std::filesystem::path& p) {
    try {
        imaging::read_pgm_file(p.string());
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

Date today() { return Date{std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now())}; }

PatientRecord parse_record(const json& j, std::size_t index) {
    const std::string where = "patients[" + std::to_string(index) + "]";
    only_keys(j, {"patient_id", "name", "gender", "birth_date", "profile_image", "medical"}, where);
    PatientRecord r;
    r.patient_id = text_field(j, "patient_id", where);
    if (r.patient_id.empty()) parse_fail(where + ": patient_id is empty");
    r.name = text_field(j, "name", where);
    const auto gender = text_field(j, "gender", where);
    if (gender == "male")
        r.gender = Gender::Male;
    else if (gender == "female")
        r.gender = Gender::Female;
    else
        parse_fail(where + ": gender must be 'male' or 'female'");
    r.birth_date = parse_date(text_field(j, "birth_date", where));
    if (r.birth_date > today()) parse_fail(where + ": birth_date is in the future");
    r.profile_image = text_field(j, "profile_image", where);

    const auto& med = j.at("medical");
    only_keys(med, {"allergies", "immunizations", "medications"}, where + ".medical");
    for (const auto& keys : kLists) {
        const auto& list = med.at(keys.list);
        const std::string lw = where + ".medical." + keys.list;
        if (!list.is_array()) parse_fail(lw + ": expected an array");
        auto& out = r.medical.*keys.member;
        for (const auto& item : list) {
            only_keys(item, {keys.text, keys.date}, lw);
            out.push_back({text_field(item, keys.text, lw), parse_date(text_field(item, keys.date, lw))});
        }
        sort_entries(out);
    }
    return r;
}

json record_json(const PatientRecord& r) {
    json med = json::object();
    for (const auto& keys : kLists) {
        auto entries = r.medical.*keys.member;
        sort_entries(entries);
        json list = json::array();
        for (const auto& e : entries) list.push_back({{keys.text, e.text}, {keys.date, format_date(e.date)}});
        med[keys.list] = std::move(list);
    }
    return {
        {"patient_id", r.patient_id},
        {"name", r.name},
        {"gender", gender_name(r.gender)},
        {"birth_date", format_date(r.birth_date)},
        {"profile_image", r.profile_image},
        {"medical", std::move(med)},
    };
}

std::vector<std::string> entry_lines(std::vector<MedicalEntry> entries) {
    if (entries.empty()) return {"none recorded"};
    sort_entries(entries);
    std::vector<std::string> lines;
    for (const auto& e : entries) lines.push_back(e.text + " (" + format_date(e.date) + ")");
    return lines;
}

}  // namespace

std::size_t PatientStore::enrollment_count() const {
    std::size_t n = 0;
    for (const auto& [_, refs] : enrollment) n += refs.size();
    return n;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

Date parse_date(const std::string& text) {
    auto digits = [&](std::size_t from, std::size_t n) {
        for (std::size_t i = from; i < from + n; ++i)
            if (text[i] < '0' || text[i] > '9') return false;
        return true;
    };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !digits(0, 4) || !digits(5, 2) || !digits(8, 2))
        parse_fail("bad date '" + text + "', expected YYYY-MM-DD");
    const Date d{std::chrono::year{std::stoi(text.substr(0, 4))},
                 std::chrono::month{static_cast<unsigned>(std::stoi(text.substr(5, 2)))},
                 std::chrono::day{static_cast<unsigned>(std::stoi(text.substr(8, 2)))}};
    if (!d.ok()) parse_fail("invalid calendar date '" + text + "'");
    return d;
}

std::string gender_name(Gender g) { return g == Gender::Male ? "male" : "female"; }

PatientStore parse_store(const std::string& document, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        parse_fail(std::string("record document is not valid JSON: ") + e.what());
    }
    only_keys(doc, {"patients", "enrollment"}, "document");
    if (!doc.at("patients").is_array()) parse_fail("'patients' must be an array");
    if (!doc.at("enrollment").is_object()) parse_fail("'enrollment' must be an object");

    PatientStore store;
    store.base_dir = base_dir;
    std::size_t index = 0;
    for (const auto& item : doc.at("patients")) {
        auto rec = parse_record(item, index++);
        if (store.patients.contains(rec.patient_id))
            throw StoreError(StoreError::Kind::DuplicateId, "duplicate patient_id '" + rec.patient_id + "'");
        if (!decodes_as_pgm(store.resolve(rec.profile_image)))
            throw StoreError(StoreError::Kind::MissingProfileImage,
                             "profile image for '" + rec.patient_id + "' is missing or not a PGM: " + rec.profile_image);
        store.patients.emplace(rec.patient_id, std::move(rec));
    }
    for (const auto& [id, refs] : doc.at("enrollment").items()) {
        if (!store.patients.contains(id))
            throw StoreError(StoreError::Kind::DanglingEnrollment, "enrollment for unknown patient '" + id + "'");
        if (!refs.is_array()) parse_fail("enrollment['" + id + "'] must be an array");
        auto& list = store.enrollment[id];
        for (const auto& ref : refs) {
            if (!ref.is_string()) parse_fail("enrollment['" + id + "'] entries must be strings");
            const auto path = ref.get<std::string>();
            if (!decodes_as_pgm(store.resolve(path)))
                throw StoreError(StoreError::Kind::MissingEnrollmentImage,
                                 "enrollment image for '" + id + "' is missing or not a PGM: " + path);
            list.push_back(path);
        }
    }
    return store;
}

PatientStore load_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError(StoreError::Kind::IoError, "cannot open record document " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_store(ss.str(), path.parent_path());
}

std::string serialize_store(const PatientStore& store) {
    json patients = json::array();
    for (const auto& [_, rec] : store.patients) patients.push_back(record_json(rec));
    json enrollment = json::object();
    for (const auto& [id, refs] : store.enrollment) enrollment[id] = refs;
    json doc = {{"patients", std::move(patients)}, {"enrollment", std::move(enrollment)}};
    return doc.dump(2) + "\n";
}

void save_store(const PatientStore& store, const std::filesystem::path& path) {
    const auto text = serialize_store(store);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError(StoreError::Kind::IoError, "cannot write record document " + path.string());
    out << text;
    out.flush();
    if (!out) throw StoreError(StoreError::Kind::IoError, "write failed for " + path.string());
}

const PatientRecord& get_patient(const PatientStore& store, const std::string& id) {
    auto it = store.patients.find(id);
    if (it == store.patients.end()) throw StoreError(StoreError::Kind::NotFound, "no patient '" + id + "'");
    return it->second;
}

std::vector<Page> record_pages(const PatientRecord& rec) {
    return {
        {1, "Biodata", {rec.name, gender_name(rec.gender), format_date(rec.birth_date)}},
        {2, "Allergies", entry_lines(rec.medical.allergies)},
        {3, "Immunizations", entry_lines(rec.medical.immunizations)},
        {4, "Medications", entry_lines(rec.medical.medications)},
    };
}

}  // namespace diane::records

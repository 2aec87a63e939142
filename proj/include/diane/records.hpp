#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace diane::records {

using Date = std::chrono::year_month_day;

enum class Gender { Male, Female };

struct MedicalEntry {
    std::string text;  // substance, vaccine or drug
    Date date;         // noted_on, given_on or prescribed_on

    bool operator==(const MedicalEntry&) const = default;
};

struct MedicalRecord {
    std::vector<MedicalEntry> allergies;
    std::vector<MedicalEntry> immunizations;
    std::vector<MedicalEntry> medications;

    bool operator==(const MedicalRecord&) const = default;
};

struct PatientRecord {
    std::string patient_id;
    std::string name;
    Gender gender = Gender::Female;
    Date birth_date;
    std::string profile_image;  // path relative to the store document
    MedicalRecord medical;

    bool operator==(const PatientRecord&) const = default;
};

struct Page {
    int index;  // 1-based
    std::string title;
    std::vector<std::string> lines;

    bool operator==(const Page&) const = default;
};

struct PatientStore {
    std::filesystem::path base_dir;
    std::map<std::string, PatientRecord> patients;
    std::map<std::string, std::vector<std::string>> enrollment;

    std::filesystem::path resolve(const std::string& ref) const { return base_dir / ref; }
    std::size_t enrollment_count() const;

    // Record and enrollment content only; base_dir is where the files live, not what they say.
    bool operator==(const PatientStore& o) const { return patients == o.patients && enrollment == o.enrollment; }
};

class StoreError : public std::runtime_error {
public:
    enum class Kind {
        ParseError,
        DuplicateId,
        DanglingEnrollment,
        MissingProfileImage,
        MissingEnrollmentImage,
        NotFound,
        IoError,
    };
    StoreError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

std::string format_date(const Date& d);
Date parse_date(const std::string& text);  // strict YYYY-MM-DD
std::string gender_name(Gender g);

// Parses a record document; image references are checked relative to base_dir.
PatientStore parse_store(const std::string& document, const std::filesystem::path& base_dir);
PatientStore load_store(const std::filesystem::path& path);

std::string serialize_store(const PatientStore& store);
void save_store(const PatientStore& store, const std::filesystem::path& path);

const PatientRecord& get_patient(const PatientStore& store, const std::string& id);

// Biodata, allergies, immunizations, medications, in that order.
std::vector<Page> record_pages(const PatientRecord& rec);

}  // namespace diane::records

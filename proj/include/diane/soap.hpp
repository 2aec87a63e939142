#pragma once

// SOAP 1.1 envelopes for the patient service: request and response models,
// their XML forms in both directions, and the read-only handlers.

#include "diane/detect.hpp"
#include "diane/imaging.hpp"
#include "diane/recognize.hpp"
#include "diane/records.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace diane::soap {

using imaging::GrayImage;

inline constexpr std::string_view kEnvelopeNs = "http://schemas.xmlsoap.org/soap/envelope/";
inline constexpr std::string_view kServiceNs = "urn:diane";
inline constexpr std::string_view kImageEncoding = "pgm+base64";
inline constexpr std::string_view kContentType = "text/xml; charset=utf-8";

struct IdentifyRequest {
    GrayImage image;
    std::optional<double> threshold;
};

struct EnrollRequest {
    std::string patient_id;
    GrayImage image;
};

struct GetPatientRequest {
    std::string patient_id;
};

struct TrainRequest {
    std::optional<int> k_max;
};

using SoapRequest = std::variant<IdentifyRequest, EnrollRequest, GetPatientRequest, TrainRequest>;

std::string_view action_name(const SoapRequest& req);

struct PatientView {
    std::string patient_id;
    std::string name;
    std::string gender;
    std::string birth_date;
    std::vector<records::Page> pages;

    bool operator==(const PatientView&) const = default;
};

PatientView patient_view(const records::PatientRecord& rec);

struct IdentifyResponse {
    PatientView patient;
    double similarity;  // carried on the wire with 6 fractional digits

    bool operator==(const IdentifyResponse&) const = default;
};

struct GetPatientResponse {
    PatientView patient;

    bool operator==(const GetPatientResponse&) const = default;
};

struct EnrollResponse {
    std::string patient_id;
    std::size_t enrollment_count;

    bool operator==(const EnrollResponse&) const = default;
};

struct TrainResponse {
    std::size_t image_count;
    std::size_t k;
    double eigenvalue_sum;

    bool operator==(const TrainResponse&) const = default;
};

struct Fault {
    std::string faultcode;    // soap:Client or soap:Server
    std::string faultstring;  // begins with a diane:* code

    bool operator==(const Fault&) const = default;
};

using SoapResponse = std::variant<IdentifyResponse, GetPatientResponse, EnrollResponse, TrainResponse, Fault>;

// Fault codes carried at the start of faultstring.
namespace code {
inline constexpr std::string_view XmlMalformed = "diane:XmlMalformed";
inline constexpr std::string_view UnknownAction = "diane:UnknownAction";
inline constexpr std::string_view MissingParameter = "diane:MissingParameter";
inline constexpr std::string_view InvalidParameter = "diane:InvalidParameter";
inline constexpr std::string_view BadImagePayload = "diane:BadImagePayload";
inline constexpr std::string_view NoFaceDetected = "diane:NoFaceDetected";
inline constexpr std::string_view UnknownFace = "diane:UnknownFace";
inline constexpr std::string_view NoSuchPatient = "diane:NoSuchPatient";
inline constexpr std::string_view InsufficientGallery = "diane:InsufficientGallery";
inline constexpr std::string_view ModelNotTrained = "diane:ModelNotTrained";
inline constexpr std::string_view Internal = "diane:Internal";
}  // namespace code

Fault client_fault(std::string_view code, std::string_view detail = {});
Fault server_fault(std::string_view code, std::string_view detail = {});

// The diane:* code of a fault, i.e. faultstring up to the first space.
std::string_view fault_code(const Fault& f);

class SoapError : public std::runtime_error {
public:
    enum class Kind { XmlMalformed, UnknownAction, MissingParameter, InvalidParameter, BadImagePayload };
    SoapError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }
    Fault fault() const;

private:
    Kind kind_;
};

SoapRequest parse_envelope(std::string_view bytes);
std::string serialize_request(const SoapRequest& req);

std::string serialize_response(const SoapResponse& resp);
// Throws SoapError(XmlMalformed) for anything that is not a well-formed response envelope.
SoapResponse parse_response(std::string_view bytes);

std::string format_similarity(double s);

// Everything identify needs, borrowed for one call.
struct IdentifyDeps {
    const detect::HaarCascade& cascade;
    const recognize::EigenModel* model;  // null before the first training
    const records::PatientStore& store;
    double default_threshold = recognize::kDefaultThreshold;
    detect::DetectParams detect_params = {};
};

// Largest-area detection, ties broken by scan order of the grouped output.
std::optional<imaging::Rect> primary_face(const detect::HaarCascade& cascade, const GrayImage& img,
                                          const detect::DetectParams& params);

SoapResponse handle_identify(const IdentifyRequest& req, const IdentifyDeps& deps);
SoapResponse handle_get_patient(const GetPatientRequest& req, const records::PatientStore& store);

}  // namespace diane::soap

#include "diane/soap.hpp"

#include "diane/base64.hpp"
#include "diane/xml.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace diane::soap {

namespace {

using Kind = SoapError::Kind;

[[noreturn]] void fail(Kind kind, const std::string& what) { throw SoapError(kind, what); }

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string_view kind_code(Kind k) {
    switch (k) {
    case Kind::XmlMalformed: return code::XmlMalformed;
    case Kind::UnknownAction: return code::UnknownAction;
    case Kind::MissingParameter: return code::MissingParameter;
    case Kind::InvalidParameter: return code::InvalidParameter;
    case Kind::BadImagePayload: return code::BadImagePayload;
    }
    return code::Internal;
}

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <class T>
std::optional<T> parse_number(std::string_view text) {
    T v{};
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size() || text.empty()) return std::nullopt;
    return v;
}

xml::Element parse_xml(std::string_view bytes) {
    try {
        return xml::parse(bytes);
    } catch (const xml::ParseError& e) {
        fail(Kind::XmlMalformed, e.what());
    }
}

bool is(const xml::Element& el, std::string_view ns, std::string_view local) {
    return el.ns == ns && el.local == local;
}

const xml::Element& body_of(const xml::Element& root) {
    if (!is(root, kEnvelopeNs, "Envelope")) fail(Kind::XmlMalformed, "root element is not a SOAP 1.1 Envelope");
    const xml::Element* body = nullptr;
    for (std::size_t i = 0; i < root.children.size(); ++i) {
        const auto& c = root.children[i];
        if (i == 0 && is(c, kEnvelopeNs, "Header") && root.children.size() > 1) continue;
        if (is(c, kEnvelopeNs, "Body") && body == nullptr && i + 1 == root.children.size()) {
            body = &c;
            continue;
        }
        fail(Kind::XmlMalformed, "unexpected element '" + c.local + "' in Envelope");
    }
    if (body == nullptr) fail(Kind::XmlMalformed, "Envelope has no Body");
    if (body->children.size() != 1)
        fail(Kind::XmlMalformed, "Body must contain exactly one element, found " + std::to_string(body->children.size()));
    return body->children.front();
}

// Parameters of an action element: children in the service namespace, each at most once.
class Params {
public:
    Params(const xml::Element& action, std::initializer_list<std::string_view> known) {
        for (const auto& c : action.children) {
            if (c.ns != kServiceNs || std::find(known.begin(), known.end(), c.local) == known.end())
                fail(Kind::InvalidParameter, "unexpected parameter '" + c.local + "' in " + action.local);
            for (const auto* seen : seen_)
                if (seen->local == c.local) fail(Kind::InvalidParameter, "parameter '" + c.local + "' given twice");
            seen_.push_back(&c);
        }
        action_ = action.local;
    }

    const xml::Element* find(std::string_view name) const {
        for (const auto* e : seen_)
            if (e->local == name) return e;
        return nullptr;
    }

    const xml::Element& require(std::string_view name) const {
        const auto* e = find(name);
        if (e == nullptr) fail(Kind::MissingParameter, action_ + " requires <" + std::string(name) + ">");
        return *e;
    }

private:
    std::vector<const xml::Element*> seen_;
    std::string action_;
};

std::string leaf_text(const xml::Element& el) {
    if (!el.children.empty()) fail(Kind::InvalidParameter, "<" + el.local + "> must not contain elements");
    return el.text;
}

std::string trimmed(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

GrayImage image_param(const xml::Element& el) {
    const auto* enc = el.attribute("encoding");
    if (enc == nullptr || enc->value != kImageEncoding)
        fail(Kind::BadImagePayload, "<Image> needs encoding=\"" + std::string(kImageEncoding) + "\"");
    if (!el.children.empty()) fail(Kind::BadImagePayload, "<Image> must contain only base64 text");
    const auto bytes = base64::decode(el.text);
    if (!bytes) fail(Kind::BadImagePayload, "<Image> is not valid base64");
    try {
        return imaging::decode_pgm(std::span<const std::uint8_t>(*bytes));
    } catch (const imaging::PgmError& e) {
        fail(Kind::BadImagePayload, std::string("<Image> is not a PGM: ") + e.what());
    }
}

std::string id_param(const Params& p) {
    auto id = trimmed(leaf_text(p.require("PatientId")));
    if (id.empty()) fail(Kind::MissingParameter, "<PatientId> is empty");
    return id;
}

void open_envelope(std::ostringstream& out) {
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<soap:Envelope xmlns:soap=\"" << kEnvelopeNs << "\">\n"
        << "  <soap:Body>\n";
}

void close_envelope(std::ostringstream& out) { out << "  </soap:Body>\n</soap:Envelope>\n"; }

void leaf(std::ostringstream& out, std::string_view name, std::string_view text, std::string_view attrs = {}) {
    out << "      <" << name << attrs << ">" << xml::escape_text(text) << "</" << name << ">\n";
}

void patient_fields(std::ostringstream& out, const PatientView& p, const std::optional<double>& similarity) {
    leaf(out, "PatientId", p.patient_id);
    leaf(out, "Name", p.name);
    leaf(out, "Gender", p.gender);
    leaf(out, "BirthDate", p.birth_date);
    if (similarity) leaf(out, "Similarity", format_similarity(*similarity));
    out << "      <Pages>\n";
    for (const auto& page : p.pages) {
        out << "        <Page index=\"" << page.index << "\" title=\"" << xml::escape_attribute(page.title) << "\">\n";
        for (const auto& line : page.lines) out << "          <Line>" << xml::escape_text(line) << "</Line>\n";
        out << "        </Page>\n";
    }
    out << "      </Pages>\n";
}

// Response-side reading: strict about shape, everything wrong is XmlMalformed.
const xml::Element& child(const xml::Element& parent, std::size_t i, std::string_view name, bool namespaced = true) {
    if (i >= parent.children.size()) fail(Kind::XmlMalformed, "missing <" + std::string(name) + ">");
    const auto& c = parent.children[i];
    if (c.local != name || c.ns != (namespaced ? kServiceNs : std::string_view{}))
        fail(Kind::XmlMalformed, "expected <" + std::string(name) + ">, found <" + c.local + ">");
    return c;
}

void expect_children(const xml::Element& el, std::size_t n) {
    if (el.children.size() != n) fail(Kind::XmlMalformed, "<" + el.local + "> has unexpected children");
}

template <class T>
T number_in(const xml::Element& el) {
    const auto v = parse_number<T>(el.text);
    if (!v) fail(Kind::XmlMalformed, "<" + el.local + "> is not a number");
    return *v;
}

PatientView read_patient(const xml::Element& resp, bool with_similarity, double* similarity) {
    expect_children(resp, with_similarity ? 6 : 5);
    PatientView p;
    std::size_t i = 0;
    p.patient_id = child(resp, i++, "PatientId").text;
    p.name = child(resp, i++, "Name").text;
    p.gender = child(resp, i++, "Gender").text;
    p.birth_date = child(resp, i++, "BirthDate").text;
    if (with_similarity) *similarity = number_in<double>(child(resp, i++, "Similarity"));
    const auto& pages = child(resp, i, "Pages");
    for (std::size_t j = 0; j < pages.children.size(); ++j) {
        const auto& pe = child(pages, j, "Page");
        const auto* index = pe.attribute("index");
        const auto* title = pe.attribute("title");
        if (index == nullptr || title == nullptr) fail(Kind::XmlMalformed, "<Page> needs index and title");
        const auto idx = parse_number<int>(index->value);
        if (!idx || *idx < 1) fail(Kind::XmlMalformed, "<Page> index must be a positive integer");
        records::Page page{*idx, title->value, {}};
        for (std::size_t k = 0; k < pe.children.size(); ++k) page.lines.push_back(child(pe, k, "Line").text);
        p.pages.push_back(std::move(page));
    }
    return p;
}

}  // namespace

std::string_view action_name(const SoapRequest& req) {
    return std::visit(overloaded{
                          [](const IdentifyRequest&) { return std::string_view("IdentifyPatient"); },
                          [](const EnrollRequest&) { return std::string_view("EnrollFace"); },
                          [](const GetPatientRequest&) { return std::string_view("GetPatient"); },
                          [](const TrainRequest&) { return std::string_view("TrainModel"); },
                      },
                      req);
}

PatientView patient_view(const records::PatientRecord& rec) {
    return {rec.patient_id, rec.name, records::gender_name(rec.gender), records::format_date(rec.birth_date),
            records::record_pages(rec)};
}

Fault client_fault(std::string_view c, std::string_view detail) {
    std::string s(c);
    if (!detail.empty()) s.append(" ").append(detail);
    return {"soap:Client", std::move(s)};
}

Fault server_fault(std::string_view c, std::string_view detail) {
    auto f = client_fault(c, detail);
    f.faultcode = "soap:Server";
    return f;
}

std::string_view fault_code(const Fault& f) {
    std::string_view s = f.faultstring;
    return s.substr(0, s.find(' '));
}

Fault SoapError::fault() const { return client_fault(kind_code(kind_), what()); }

std::string format_similarity(double s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", s);
    return buf;
}

SoapRequest parse_envelope(std::string_view bytes) {
    const auto root = parse_xml(bytes);
    const auto& action = body_of(root);
    if (action.ns != kServiceNs)
        fail(Kind::UnknownAction, "action <" + action.local + "> is not in namespace " + std::string(kServiceNs));

    if (action.local == "IdentifyPatient") {
        const Params p(action, {"Image", "Threshold"});
        IdentifyRequest req{image_param(p.require("Image")), std::nullopt};
        if (const auto* t = p.find("Threshold")) {
            const auto v = parse_number<double>(trimmed(leaf_text(*t)));
            if (!v || !std::isfinite(*v) || *v <= 0 || *v > 1)
                fail(Kind::InvalidParameter, "<Threshold> must be a number in (0, 1]");
            req.threshold = *v;
        }
        return req;
    }
    if (action.local == "EnrollFace") {
        const Params p(action, {"PatientId", "Image"});
        auto id = id_param(p);
        return EnrollRequest{std::move(id), image_param(p.require("Image"))};
    }
    if (action.local == "GetPatient") {
        const Params p(action, {"PatientId"});
        return GetPatientRequest{id_param(p)};
    }
    if (action.local == "TrainModel") {
        const Params p(action, {"KMax"});
        TrainRequest req;
        if (const auto* k = p.find("KMax")) {
            const auto v = parse_number<int>(trimmed(leaf_text(*k)));
            if (!v || *v < 1) fail(Kind::InvalidParameter, "<KMax> must be a positive integer");
            req.k_max = *v;
        }
        return req;
    }
    fail(Kind::UnknownAction, "no action named <" + action.local + ">");
}

std::string serialize_request(const SoapRequest& req) {
    std::ostringstream out;
    open_envelope(out);
    const auto name = action_name(req);
    out << "    <" << name << " xmlns=\"" << kServiceNs << "\">\n";
    auto image = [&](const GrayImage& img) {
        leaf(out, "Image", base64::encode(imaging::encode_pgm(img)),
             " encoding=\"" + std::string(kImageEncoding) + "\"");
    };
    std::visit(overloaded{
                   [&](const IdentifyRequest& r) {
                       image(r.image);
                       if (r.threshold) leaf(out, "Threshold", shortest(*r.threshold));
                   },
                   [&](const EnrollRequest& r) {
                       leaf(out, "PatientId", r.patient_id);
                       image(r.image);
                   },
                   [&](const GetPatientRequest& r) { leaf(out, "PatientId", r.patient_id); },
                   [&](const TrainRequest& r) {
                       if (r.k_max) leaf(out, "KMax", std::to_string(*r.k_max));
                   },
               },
               req);
    out << "    </" << name << ">\n";
    close_envelope(out);
    return out.str();
}

std::string serialize_response(const SoapResponse& resp) {
    std::ostringstream out;
    open_envelope(out);
    auto open = [&](std::string_view name) { out << "    <" << name << " xmlns=\"" << kServiceNs << "\">\n"; };
    auto close = [&](std::string_view name) { out << "    </" << name << ">\n"; };
    std::visit(overloaded{
                   [&](const IdentifyResponse& r) {
                       open("IdentifyPatientResponse");
                       patient_fields(out, r.patient, r.similarity);
                       close("IdentifyPatientResponse");
                   },
                   [&](const GetPatientResponse& r) {
                       open("GetPatientResponse");
                       patient_fields(out, r.patient, std::nullopt);
                       close("GetPatientResponse");
                   },
                   [&](const EnrollResponse& r) {
                       open("EnrollFaceResponse");
                       leaf(out, "PatientId", r.patient_id);
                       leaf(out, "EnrollmentCount", std::to_string(r.enrollment_count));
                       close("EnrollFaceResponse");
                   },
                   [&](const TrainResponse& r) {
                       open("TrainModelResponse");
                       leaf(out, "ImageCount", std::to_string(r.image_count));
                       leaf(out, "K", std::to_string(r.k));
                       leaf(out, "EigenvalueSum", shortest(r.eigenvalue_sum));
                       close("TrainModelResponse");
                   },
                   [&](const Fault& f) {
                       out << "    <soap:Fault>\n";
                       out << "      <faultcode>" << xml::escape_text(f.faultcode) << "</faultcode>\n";
                       out << "      <faultstring>" << xml::escape_text(f.faultstring) << "</faultstring>\n";
                       out << "    </soap:Fault>\n";
                   },
               },
               resp);
    close_envelope(out);
    return out.str();
}

SoapResponse parse_response(std::string_view bytes) {
    const auto root = parse_xml(bytes);
    const auto& el = body_of(root);
    if (is(el, kEnvelopeNs, "Fault")) {
        expect_children(el, 2);
        return Fault{child(el, 0, "faultcode", false).text, child(el, 1, "faultstring", false).text};
    }
    if (el.ns != kServiceNs) fail(Kind::XmlMalformed, "response element <" + el.local + "> has the wrong namespace");
    if (el.local == "IdentifyPatientResponse") {
        IdentifyResponse r{};
        r.patient = read_patient(el, true, &r.similarity);
        return r;
    }
    if (el.local == "GetPatientResponse") return GetPatientResponse{read_patient(el, false, nullptr)};
    if (el.local == "EnrollFaceResponse") {
        expect_children(el, 2);
        return EnrollResponse{child(el, 0, "PatientId").text,
                              number_in<std::size_t>(child(el, 1, "EnrollmentCount"))};
    }
    if (el.local == "TrainModelResponse") {
        expect_children(el, 3);
        return TrainResponse{number_in<std::size_t>(child(el, 0, "ImageCount")),
                             number_in<std::size_t>(child(el, 1, "K")),
                             number_in<double>(child(el, 2, "EigenvalueSum"))};
    }
    fail(Kind::XmlMalformed, "unknown response element <" + el.local + ">");
}

std::optional<imaging::Rect> primary_face(const detect::HaarCascade& cascade, const GrayImage& img,
                                          const detect::DetectParams& params) {
    std::optional<imaging::Rect> best;
    for (const auto& d : detect::detect_faces(cascade, img, params))
        if (!best || d.rect.area() > best->area()) best = d.rect;
    return best;
}

SoapResponse handle_identify(const IdentifyRequest& req, const IdentifyDeps& deps) {
    if (deps.model == nullptr) return server_fault(code::ModelNotTrained, "no model has been trained yet");
    const auto face = primary_face(deps.cascade, req.image, deps.detect_params);
    if (!face) return client_fault(code::NoFaceDetected);
    const auto crop = imaging::crop(req.image, *face);
    const auto result = recognize::identify(*deps.model, crop, req.threshold.value_or(deps.default_threshold));
    if (const auto* u = std::get_if<recognize::Unknown>(&result)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "best_distance=%.6f", u->best_distance);
        return client_fault(code::UnknownFace, buf);
    }
    const auto& known = std::get<recognize::Known>(result);
    const auto it = deps.store.patients.find(known.label);
    if (it == deps.store.patients.end())
        return client_fault(code::NoSuchPatient, "model label '" + known.label + "' is not in the record store");
    return IdentifyResponse{patient_view(it->second), known.similarity};
}

SoapResponse handle_get_patient(const GetPatientRequest& req, const records::PatientStore& store) {
    const auto it = store.patients.find(req.patient_id);
    if (it == store.patients.end()) return client_fault(code::NoSuchPatient, req.patient_id);
    return GetPatientResponse{patient_view(it->second)};
}

}  // namespace diane::soap

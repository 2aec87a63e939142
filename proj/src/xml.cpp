#include "diane/xml.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>

namespace diane::xml {

const Attribute* Element::attribute(std::string_view local_name) const {
    for (const auto& a : attributes)
        if (a.ns.empty() && a.local == local_name) return &a;
    return nullptr;
}

namespace {

constexpr int kMaxDepth = 256;
constexpr std::string_view kXmlNs = "http://www.w3.org/XML/1998/namespace";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_name_start(char c) {
    const auto u = static_cast<unsigned char>(c);
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c == ':' || u >= 0x80;
}

bool is_name_char(char c) { return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.'; }

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool valid_char(std::uint32_t cp) {
    return cp == 0x9 || cp == 0xA || cp == 0xD || (cp >= 0x20 && cp <= 0xD7FF) || (cp >= 0xE000 && cp <= 0xFFFD) ||
           (cp >= 0x10000 && cp <= 0x10FFFF);
}

struct RawAttr {
    std::string qname;
    std::string value;
};

using Scope = std::map<std::string, std::string, std::less<>>;  // prefix -> uri, "" is the default namespace

class Parser {
public:
    explicit Parser(std::string_view doc) : s_(doc) {}

    Element document() {
        if (s_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
        if (starts_with("<?xml")) processing_instruction();
        misc();
        if (starts_with("<!DOCTYPE")) fail("document type declarations are not accepted");
        if (at_end() || peek() != '<') fail("expected root element");
        Scope root_scope{{"xml", std::string(kXmlNs)}};
        Element root = element(root_scope, 0);
        misc();
        if (!at_end()) fail("content after root element");
        return root;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(pos_, what); }

    bool at_end() const { return pos_ >= s_.size(); }
    char peek() const { return s_[pos_]; }
    bool starts_with(std::string_view p) const { return s_.substr(pos_, p.size()) == p; }

    void expect(std::string_view p) {
        if (!starts_with(p)) fail("expected '" + std::string(p) + "'");
        pos_ += p.size();
    }

    void skip_space() {
        while (!at_end() && is_space(peek())) ++pos_;
    }

    std::size_t find_or_fail(std::string_view needle, const char* what) {
        const auto at = s_.find(needle, pos_);
        if (at == std::string_view::npos) fail(std::string("unterminated ") + what);
        return at;
    }

    void comment() {
        expect("<!--");
        const auto end = find_or_fail("-->", "comment");
        if (s_.substr(pos_, end - pos_).find("--") != std::string_view::npos) fail("'--' inside comment");
        pos_ = end + 3;
    }

    void processing_instruction() {
        expect("<?");
        pos_ = find_or_fail("?>", "processing instruction") + 2;
    }

    // Whitespace, comments and processing instructions outside the root.
    void misc() {
        for (;;) {
            skip_space();
            if (starts_with("<!--"))
                comment();
            else if (starts_with("<?"))
                processing_instruction();
            else
                return;
        }
    }

    std::string name() {
        if (at_end() || !is_name_start(peek())) fail("expected a name");
        const auto start = pos_;
        while (!at_end() && is_name_char(peek())) ++pos_;
        return std::string(s_.substr(start, pos_ - start));
    }

    void reference(std::string& out) {
        expect("&");
        const auto end = s_.find(';', pos_);
        if (end == std::string_view::npos || end - pos_ > 12) fail("unterminated entity reference");
        const auto ref = s_.substr(pos_, end - pos_);
        pos_ = end + 1;
        if (ref == "lt") { out += '<'; return; }
        if (ref == "gt") { out += '>'; return; }
        if (ref == "amp") { out += '&'; return; }
        if (ref == "quot") { out += '"'; return; }
        if (ref == "apos") { out += '\''; return; }
        if (ref.size() < 2 || ref[0] != '#') fail("unknown entity '" + std::string(ref) + "'");
        const bool hex = ref[1] == 'x';
        const auto digits = ref.substr(hex ? 2 : 1);
        if (digits.empty()) fail("empty character reference");
        std::uint32_t cp = 0;
        for (char c : digits) {
            int d;
            if (c >= '0' && c <= '9')
                d = c - '0';
            else if (hex && c >= 'a' && c <= 'f')
                d = c - 'a' + 10;
            else if (hex && c >= 'A' && c <= 'F')
                d = c - 'A' + 10;
            else
                fail("bad character reference");
            cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(d);
            if (cp > 0x10FFFF) fail("character reference out of range");
        }
        if (!valid_char(cp)) fail("character reference to a forbidden character");
        append_utf8(out, cp);
    }

    std::string attribute_value() {
        if (at_end() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
        const char quote = peek();
        ++pos_;
        std::string out;
        for (;;) {
            if (at_end()) fail("unterminated attribute value");
            const char c = peek();
            if (c == quote) {
                ++pos_;
                return out;
            }
            if (c == '<') fail("'<' in attribute value");
            if (c == '&') {
                reference(out);
                continue;
            }
            // attribute value normalization
            out += is_space(c) ? ' ' : c;
            ++pos_;
        }
    }

    static std::pair<std::string_view, std::string_view> split(std::string_view qname) {
        const auto colon = qname.find(':');
        if (colon == std::string_view::npos) return {{}, qname};
        return {qname.substr(0, colon), qname.substr(colon + 1)};
    }

    std::string resolve(const Scope& scope, std::string_view prefix) const {
        const auto it = scope.find(prefix);
        if (it == scope.end()) {
            if (prefix.empty()) return {};
            fail("unbound namespace prefix '" + std::string(prefix) + "'");
        }
        return it->second;
    }

    Element element(const Scope& parent_scope, int depth) {
        if (depth >= kMaxDepth) fail("elements nested too deeply");
        expect("<");
        const auto qname = name();
        std::vector<RawAttr> raw;
        bool empty = false;
        for (;;) {
            const bool had_space = !at_end() && is_space(peek());
            skip_space();
            if (at_end()) fail("unterminated start tag");
            if (starts_with("/>")) {
                pos_ += 2;
                empty = true;
                break;
            }
            if (peek() == '>') {
                ++pos_;
                break;
            }
            if (!had_space) fail("expected whitespace before attribute");
            auto attr_name = name();
            skip_space();
            expect("=");
            skip_space();
            auto value = attribute_value();
            if (std::any_of(raw.begin(), raw.end(), [&](const RawAttr& a) { return a.qname == attr_name; }))
                fail("duplicate attribute '" + attr_name + "'");
            raw.push_back({std::move(attr_name), std::move(value)});
        }

        Scope scope = parent_scope;
        for (const auto& a : raw) {
            if (a.qname == "xmlns") {
                scope[""] = a.value;
            } else if (a.qname.starts_with("xmlns:")) {
                const auto prefix = a.qname.substr(6);
                if (a.value.empty()) fail("empty namespace binding for '" + prefix + "'");
                scope[prefix] = a.value;
            }
        }

        Element el;
        const auto [prefix, local] = split(qname);
        if (local.empty()) fail("empty local name");
        el.ns = resolve(scope, prefix);
        el.local = std::string(local);
        for (auto& a : raw) {
            if (a.qname == "xmlns" || a.qname.starts_with("xmlns:")) continue;
            const auto [apfx, alocal] = split(a.qname);
            std::string ans = apfx.empty() ? std::string() : resolve(scope, apfx);
            for (const auto& prev : el.attributes)
                if (prev.ns == ans && prev.local == alocal) fail("duplicate expanded attribute name");
            el.attributes.push_back({std::move(ans), std::string(alocal), std::move(a.value)});
        }
        if (empty) return el;

        for (;;) {
            if (at_end()) fail("unterminated element '" + qname + "'");
            if (starts_with("</")) {
                pos_ += 2;
                const auto close = name();
                if (close != qname) fail("mismatched end tag '" + close + "' for '" + qname + "'");
                skip_space();
                expect(">");
                return el;
            }
            if (starts_with("<!--")) {
                comment();
            } else if (starts_with("<![CDATA[")) {
                pos_ += 9;
                const auto end = find_or_fail("]]>", "CDATA section");
                el.text.append(s_.substr(pos_, end - pos_));
                pos_ = end + 3;
            } else if (starts_with("<!")) {
                fail("markup declarations are not accepted");
            } else if (starts_with("<?")) {
                processing_instruction();
            } else if (peek() == '<') {
                el.children.push_back(element(scope, depth + 1));
            } else if (peek() == '&') {
                reference(el.text);
            } else {
                if (starts_with("]]>")) fail("']]>' in character data");
                el.text += peek();
                ++pos_;
            }
        }
    }
};

std::string escape(std::string_view s, bool attribute) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += attribute ? "&quot;" : "\""; break;
        case '\r': out += "&#13;"; break;
        case '\n': out += attribute ? "&#10;" : "\n"; break;
        case '\t': out += attribute ? "&#9;" : "\t"; break;
        default: out += c;
        }
    }
    return out;
}

}  // namespace

Element parse(std::string_view doc) { return Parser(doc).document(); }

std::string escape_text(std::string_view s) { return escape(s, false); }

std::string escape_attribute(std::string_view s) { return escape(s, true); }

}  // namespace diane::xml

#pragma once

// Small namespace-aware XML reader and escaping helpers. Enough for SOAP
// envelopes: elements, attributes, character data, CDATA, comments and
// processing instructions. DTDs are rejected outright.

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diane::xml {

struct Attribute {
    std::string ns;  // empty for unprefixed attributes
    std::string local;
    std::string value;
};

struct Element {
    std::string ns;
    std::string local;
    std::vector<Attribute> attributes;  // xmlns declarations excluded
    std::vector<Element> children;
    std::string text;  // concatenated character data directly inside this element

    const Attribute* attribute(std::string_view local_name) const;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t offset, const std::string& what)
        : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

Element parse(std::string_view doc);

std::string escape_text(std::string_view s);
std::string escape_attribute(std::string_view s);

}  // namespace diane::xml

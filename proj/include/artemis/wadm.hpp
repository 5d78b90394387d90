#pragma once

// W3C Web Annotation Data Model (JSON-LD) serialization of annotation
// records.
//
// Document layout, keys emitted in this order:
//
//   @context  "http://www.w3.org/ns/anno.jsonld"
//   id        "urn:uuid:<uuid>"
//   type      "Annotation"
//   created   RFC 3339 UTC, millisecond precision
//   modified  RFC 3339 UTC, millisecond precision
//   creator   literal string
//   body      { type: TextualBody, format: application/xml, value: <artemis-body> }
//   target    { source: "urn:artemis:model:<mesh id>",
//               selector: { type: MeshFaceSelector, version: 1,
//                           faces: [...], vertices: [...] } }
//   ...       extension members, sorted by key
//
// The body XML fragment is
//
//   <artemis-body version="1">
//     <title>..</title><color r=".." g=".." b=".."/><description>..</description>
//     <schema name=".." version=".."/><field key="..">value</field>*
//   </artemis-body>
//
// written without insignificant whitespace. Face and vertex lists are
// strictly increasing.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "artemis/annotation.hpp"
#include "artemis/error.hpp"
#include "artemis/ids.hpp"
#include "artemis/time.hpp"

namespace artemis {

inline constexpr std::string_view kAnnoContext = "http://www.w3.org/ns/anno.jsonld";
inline constexpr std::string_view kModelUriPrefix = "urn:artemis:model:";
inline constexpr std::string_view kMeshFaceSelector = "MeshFaceSelector";
inline constexpr int kSelectorVersion = 1;
inline constexpr int kBodyVersion = 1;

// ---------------------------------------------------------------------------
// XML body

namespace xml {

inline void append_escaped(std::string& out, std::string_view s, bool attribute) {
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += attribute ? "&quot;" : "\""; break;
      case '\'': out += attribute ? "&apos;" : "'"; break;
      default:
        if (c < 0x20 && (attribute || (ch != '\n' && ch != '\t'))) {
          out += "&#" + std::to_string(c) + ";";
        } else {
          out += ch;
        }
    }
  }
}

struct Node {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Node> children;
  std::string text;

  const std::string* attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes) {
      if (k == key) return &v;
    }
    return nullptr;
  }
};

inline void append_utf8(std::string& out, std::uint32_t cp) {
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

// Recursive-descent parser for the element/attribute/text subset used by
// the body. No DTDs, processing instructions, or CDATA.
class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  Node parse_document() {
    skip_ws();
    Node root = parse_element();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::ValidationError, "body XML: " + what + " at offset " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\n' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }

  bool name_char(char c) const {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == ':';
  }

  std::string parse_name() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && name_char(s_[pos_])) ++pos_;
    if (pos_ == start) fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string decode(std::string_view raw) const {
    std::string out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      const std::size_t semi = raw.find(';', i);
      if (semi == std::string_view::npos) fail("unterminated entity");
      const std::string_view ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "amp") out += '&';
      else if (ent == "lt") out += '<';
      else if (ent == "gt") out += '>';
      else if (ent == "quot") out += '"';
      else if (ent == "apos") out += '\'';
      else if (ent.size() > 1 && ent[0] == '#') {
        std::uint32_t cp = 0;
        const bool hex = ent[1] == 'x' || ent[1] == 'X';
        const std::string_view digits = ent.substr(hex ? 2 : 1);
        const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
        if (digits.empty() || res.ec != std::errc() || res.ptr != digits.data() + digits.size() || cp > 0x10FFFF) {
          fail("bad character reference");
        }
        append_utf8(out, cp);
      } else {
        fail("unknown entity '&" + std::string(ent) + ";'");
      }
      i = semi;
    }
    return out;
  }

  Node parse_element() {
    expect('<');
    Node node;
    node.name = parse_name();
    for (;;) {
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated start tag");
      if (s_[pos_] == '/') {
        ++pos_;
        expect('>');
        return node;
      }
      if (s_[pos_] == '>') {
        ++pos_;
        break;
      }
      std::string key = parse_name();
      skip_ws();
      expect('=');
      skip_ws();
      if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) fail("expected quoted attribute value");
      const char quote = s_[pos_++];
      const std::size_t end = s_.find(quote, pos_);
      if (end == std::string_view::npos) fail("unterminated attribute value");
      node.attributes.emplace_back(std::move(key), decode(s_.substr(pos_, end - pos_)));
      pos_ = end + 1;
    }
    // Content: text and child elements until the matching end tag.
    std::string raw_text;
    for (;;) {
      if (pos_ >= s_.size()) fail("missing end tag for <" + node.name + ">");
      if (s_[pos_] == '<') {
        if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '/') {
          pos_ += 2;
          const std::string closing = parse_name();
          if (closing != node.name) fail("mismatched end tag </" + closing + ">");
          skip_ws();
          expect('>');
          break;
        }
        node.children.push_back(parse_element());
      } else {
        const std::size_t next = s_.find('<', pos_);
        const std::size_t end = next == std::string_view::npos ? s_.size() : next;
        raw_text.append(s_.substr(pos_, end - pos_));
        pos_ = end;
      }
    }
    node.text = decode(raw_text);
    return node;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace xml

struct BodyContent {
  std::string title;
  Color color;
  std::string description;
  std::string schema_name = "none";
  int schema_version = 1;
  FieldMap fields;

  friend bool operator==(const BodyContent&, const BodyContent&) = default;
};

inline std::string body_xml(const BodyContent& b) {
  std::string out = "<artemis-body version=\"" + std::to_string(kBodyVersion) + "\"><title>";
  xml::append_escaped(out, b.title, false);
  out += "</title><color r=\"" + std::to_string(b.color.r) + "\" g=\"" + std::to_string(b.color.g) + "\" b=\"" +
         std::to_string(b.color.b) + "\"/><description>";
  xml::append_escaped(out, b.description, false);
  out += "</description><schema name=\"";
  xml::append_escaped(out, b.schema_name, true);
  out += "\" version=\"" + std::to_string(b.schema_version) + "\"/>";
  for (const auto& [key, value] : b.fields) {
    out += "<field key=\"";
    xml::append_escaped(out, key, true);
    out += "\">";
    xml::append_escaped(out, value, false);
    out += "</field>";
  }
  out += "</artemis-body>";
  return out;
}

/// Throws ValidationError when the fragment is malformed.
inline BodyContent parse_body_xml(std::string_view text) {
  const xml::Node root = xml::Parser(text).parse_document();
  auto fail = [](const std::string& what) -> void { throw Error(ErrorCode::ValidationError, "body XML: " + what); };
  if (root.name != "artemis-body") fail("root element must be <artemis-body>");
  const std::string* version = root.attribute("version");
  if (!version || *version != std::to_string(kBodyVersion)) fail("unsupported artemis-body version");

  auto parse_uint = [&](const std::string* s, int max, const char* what) {
    int v = -1;
    if (s) {
      const auto res = std::from_chars(s->data(), s->data() + s->size(), v);
      if (res.ec != std::errc() || res.ptr != s->data() + s->size()) v = -1;
    }
    if (v < 0 || v > max) fail(std::string("bad ") + what);
    return v;
  };

  BodyContent b;
  bool seen_title = false, seen_color = false, seen_desc = false, seen_schema = false;
  for (const xml::Node& n : root.children) {
    if (n.name == "title") {
      b.title = n.text;
      seen_title = true;
    } else if (n.name == "color") {
      b.color.r = static_cast<std::uint8_t>(parse_uint(n.attribute("r"), 255, "color channel"));
      b.color.g = static_cast<std::uint8_t>(parse_uint(n.attribute("g"), 255, "color channel"));
      b.color.b = static_cast<std::uint8_t>(parse_uint(n.attribute("b"), 255, "color channel"));
      seen_color = true;
    } else if (n.name == "description") {
      b.description = n.text;
      seen_desc = true;
    } else if (n.name == "schema") {
      const std::string* name = n.attribute("name");
      if (!name || name->empty()) fail("schema element lacks a name");
      b.schema_name = *name;
      b.schema_version = parse_uint(n.attribute("version"), 1 << 30, "schema version");
      if (b.schema_version < 1) fail("bad schema version");
      seen_schema = true;
    } else if (n.name == "field") {
      const std::string* key = n.attribute("key");
      if (!key) fail("field element lacks a key");
      b.fields.emplace_back(*key, n.text);
    }
    // Unknown elements are skipped for forward compatibility.
  }
  if (!seen_title || !seen_color || !seen_desc || !seen_schema) {
    fail("missing one of <title>, <color>, <description>, <schema>");
  }
  return b;
}

// ---------------------------------------------------------------------------
// JSON-LD document

struct Violation {
  std::string path;
  std::string rule;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

inline std::string model_uri(std::string_view mesh_id) { return std::string(kModelUriPrefix) + std::string(mesh_id); }

inline std::string mesh_id_from_uri(std::string_view uri) {
  if (uri.substr(0, kModelUriPrefix.size()) == kModelUriPrefix) return std::string(uri.substr(kModelUriPrefix.size()));
  return std::string(uri);
}

inline bool is_reserved_member(std::string_view key) {
  return key == "@context" || key == "id" || key == "type" || key == "created" || key == "modified" ||
         key == "creator" || key == "body" || key == "target";
}

inline Json to_wadm(const AnnotationRecord& r) {
  Json doc;
  doc["@context"] = kAnnoContext;
  doc["id"] = "urn:uuid:" + r.id;
  doc["type"] = "Annotation";
  doc["created"] = format_rfc3339(r.created_at);
  doc["modified"] = format_rfc3339(r.modified_at);
  doc["creator"] = r.creator;
  const BodyContent body{r.title, r.color, r.description, r.schema_name, r.schema_version, r.fields};
  doc["body"] = Json{{"type", "TextualBody"}, {"format", "application/xml"}, {"value", body_xml(body)}};
  Json selector;
  selector["type"] = kMeshFaceSelector;
  selector["version"] = kSelectorVersion;
  selector["faces"] = r.roi.faces;
  selector["vertices"] = r.derived_vertices;
  doc["target"] = Json{{"source", model_uri(r.mesh_id)}, {"selector", std::move(selector)}};
  for (const auto& [key, value] : r.extensions) {
    if (!is_reserved_member(key)) doc[key] = value;
  }
  return doc;
}

namespace detail {

inline void check_index_list(const Json& doc, const char* key, const std::string& path,
                             std::vector<Violation>& out) {
  if (!doc.contains(key)) {
    out.push_back({path, "required", std::string("missing '") + key + "'"});
    return;
  }
  const Json& list = doc[key];
  if (!list.is_array()) {
    out.push_back({path, "type", "must be an array of face/vertex indices"});
    return;
  }
  if (list.empty()) {
    out.push_back({path, "non-empty", "must contain at least one index"});
    return;
  }
  bool integral = true;
  for (const Json& v : list) integral = integral && v.is_number_unsigned() && v.get<std::uint64_t>() <= 0xFFFFFFFFu;
  if (!integral) {
    out.push_back({path, "integer", "entries must be non-negative 32-bit integers"});
    return;
  }
  bool duplicate = false, unsorted = false;
  for (std::size_t i = 1; i < list.size(); ++i) {
    const auto a = list[i - 1].get<std::uint64_t>(), b = list[i].get<std::uint64_t>();
    duplicate = duplicate || a == b;
    unsorted = unsorted || a > b;
  }
  if (duplicate) out.push_back({path, "set", "duplicate index"});
  if (unsorted) out.push_back({path, "sorted", "indices must be strictly increasing"});
}

inline void check_string(const Json& obj, const char* key, std::string_view expected, const std::string& path,
                         std::vector<Violation>& out) {
  if (!obj.contains(key)) {
    out.push_back({path, "required", std::string("missing '") + key + "'"});
  } else if (!obj[key].is_string() || obj[key].get<std::string>() != expected) {
    out.push_back({path, "value", "must be \"" + std::string(expected) + "\""});
  }
}

}  // namespace detail

/// Structural check of a WADM document with a MeshFaceSelector target. An
/// empty result means the document is valid.
inline std::vector<Violation> validate_wadm(const Json& doc) {
  std::vector<Violation> v;
  if (!doc.is_object()) {
    v.push_back({"$", "type", "annotation must be a JSON object"});
    return v;
  }

  if (!doc.contains("@context")) {
    v.push_back({"$.@context", "required", "missing '@context'"});
  } else {
    const Json& ctx = doc["@context"];
    bool ok = ctx.is_string() && ctx.get<std::string>() == kAnnoContext;
    if (ctx.is_array()) {
      for (const Json& c : ctx) ok = ok || (c.is_string() && c.get<std::string>() == kAnnoContext);
    }
    if (!ok) v.push_back({"$.@context", "context", "must include " + std::string(kAnnoContext)});
  }

  detail::check_string(doc, "type", "Annotation", "$.type", v);

  if (!doc.contains("id")) {
    v.push_back({"$.id", "required", "missing 'id'"});
  } else if (!doc["id"].is_string() || doc["id"].get<std::string>().rfind("urn:uuid:", 0) != 0 ||
             !is_uuid(std::string_view(doc["id"].get_ref<const std::string&>()).substr(9))) {
    v.push_back({"$.id", "id", "must be a urn:uuid: identifier"});
  }

  std::optional<Timestamp> created, modified;
  for (const char* key : {"created", "modified"}) {
    const std::string path = std::string("$.") + key;
    if (!doc.contains(key)) {
      v.push_back({path, "required", std::string("missing '") + key + "'"});
      continue;
    }
    const auto ts = doc[key].is_string() ? parse_rfc3339(doc[key].get<std::string>()) : std::nullopt;
    if (!ts) {
      v.push_back({path, "datetime", "must be an RFC 3339 date-time"});
      continue;
    }
    (std::string_view(key) == "created" ? created : modified) = ts;
  }
  if (created && modified && *modified < *created) {
    v.push_back({"$.modified", "order", "modified precedes created"});
  }
  if (doc.contains("creator") && !doc["creator"].is_string()) {
    v.push_back({"$.creator", "type", "creator must be a string literal"});
  }

  if (!doc.contains("body")) {
    v.push_back({"$.body", "required", "missing 'body'"});
  } else if (!doc["body"].is_object()) {
    v.push_back({"$.body", "single-body", "exactly one body object is required"});
  } else {
    const Json& body = doc["body"];
    detail::check_string(body, "type", "TextualBody", "$.body.type", v);
    detail::check_string(body, "format", "application/xml", "$.body.format", v);
    if (!body.contains("value") || !body["value"].is_string()) {
      v.push_back({"$.body.value", "required", "body value must be a string"});
    } else {
      try {
        parse_body_xml(body["value"].get<std::string>());
      } catch (const Error& e) {
        v.push_back({"$.body.value", "body-xml", e.what()});
      }
    }
  }

  if (!doc.contains("target")) {
    v.push_back({"$.target", "required", "missing 'target'"});
  } else if (!doc["target"].is_object()) {
    v.push_back({"$.target", "single-target", "exactly one target object is required"});
  } else {
    const Json& target = doc["target"];
    if (!target.contains("source") || !target["source"].is_string() || target["source"].get<std::string>().empty()) {
      v.push_back({"$.target.source", "required", "target source must be a non-empty string"});
    }
    if (!target.contains("selector") || !target["selector"].is_object()) {
      v.push_back({"$.target.selector", "required", "target selector object is required"});
    } else {
      const Json& sel = target["selector"];
      detail::check_string(sel, "type", kMeshFaceSelector, "$.target.selector.type", v);
      if (!sel.contains("version") || !sel["version"].is_number_integer() ||
          sel["version"].get<long long>() != kSelectorVersion) {
        v.push_back({"$.target.selector.version", "value", "selector version must be 1"});
      }
      detail::check_index_list(sel, "faces", "$.target.selector.faces", v);
      detail::check_index_list(sel, "vertices", "$.target.selector.vertices", v);
    }
  }
  return v;
}

inline std::string describe(const std::vector<Violation>& violations) {
  std::string out;
  for (const Violation& v : violations) {
    if (!out.empty()) out += "; ";
    out += v.path + " [" + v.rule + "] " + v.message;
  }
  return out;
}

/**
 * Inverse of to_wadm. The field map is checked against the schema named in
 * the body. Throws SelectorUnsupported, ValidationError, or SchemaViolation.
 */
inline AnnotationRecord from_wadm(const Json& doc, const SchemaRegistry& registry) {
  if (doc.is_object() && doc.contains("target") && doc["target"].is_object() &&
      doc["target"].contains("selector") && doc["target"]["selector"].is_object()) {
    const Json& sel = doc["target"]["selector"];
    if (sel.contains("type") && sel["type"].is_string() && sel["type"].get<std::string>() != kMeshFaceSelector) {
      throw Error(ErrorCode::SelectorUnsupported,
                  "selector type '" + sel["type"].get<std::string>() + "' is not supported", "$.target.selector.type");
    }
  }
  const auto violations = validate_wadm(doc);
  if (!violations.empty()) throw Error(ErrorCode::ValidationError, "invalid annotation: " + describe(violations), describe(violations));

  AnnotationRecord r;
  r.id = doc["id"].get<std::string>().substr(9);
  r.created_at = *parse_rfc3339(doc["created"].get<std::string>());
  r.modified_at = *parse_rfc3339(doc["modified"].get<std::string>());
  r.creator = doc.value("creator", std::string());
  const BodyContent body = parse_body_xml(doc["body"]["value"].get<std::string>());
  r.title = body.title;
  r.color = body.color;
  r.description = body.description;
  r.schema_name = body.schema_name;
  r.schema_version = body.schema_version;
  r.fields = body.fields;
  const Json& target = doc["target"];
  r.mesh_id = mesh_id_from_uri(target["source"].get<std::string>());
  r.roi.mesh_id = r.mesh_id;
  r.roi.faces = target["selector"]["faces"].get<std::vector<std::uint32_t>>();
  r.derived_vertices = target["selector"]["vertices"].get<std::vector<std::uint32_t>>();
  for (const auto& [key, value] : doc.items()) {
    if (!is_reserved_member(key)) r.extensions[key] = value;
  }

  const auto schema = registry.find(r.schema_name, r.schema_version);
  if (!schema) {
    throw Error(ErrorCode::SchemaViolation,
                "unknown schema '" + r.schema_name + "' v" + std::to_string(r.schema_version), r.schema_name);
  }
  require_conforming(r.fields, *schema);
  return r;
}

}  // namespace artemis

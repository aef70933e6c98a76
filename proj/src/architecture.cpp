#include "cloudhealth/architecture.hpp"

#include <algorithm>
#include <json.hpp>
#include <map>

#include "json_util.hpp"

namespace cloudhealth {

using nlohmann::json;

std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::device: return "device";
    case Layer::edge: return "edge";
    case Layer::platform: return "platform";
    case Layer::application: return "application";
  }
  return "?";
}

std::string_view to_string(Protocol p) { return p == Protocol::http ? "http" : "sim"; }

std::optional<Layer> parse_layer(std::string_view s) {
  for (auto l : {Layer::device, Layer::edge, Layer::platform, Layer::application}) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "http") return Protocol::http;
  if (s == "sim") return Protocol::sim;
  return std::nullopt;
}

std::string_view to_string(ArchitectureErrorKind k) {
  switch (k) {
    case ArchitectureErrorKind::syntax_error: return "SyntaxError";
    case ArchitectureErrorKind::duplicate_component: return "DuplicateComponent";
    case ArchitectureErrorKind::dangling_parent: return "DanglingParent";
    case ArchitectureErrorKind::parent_cycle: return "ParentCycle";
    case ArchitectureErrorKind::unknown_layer: return "UnknownLayer";
    case ArchitectureErrorKind::invalid_field: return "InvalidField";
  }
  return "?";
}

ArchitectureError::ArchitectureError(ArchitectureErrorKind kind, std::string subject,
                                     const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + "(" + subject + "): " + message),
      kind_(kind),
      subject_(std::move(subject)) {}

const ComponentDescriptor* ArchitectureDescriptor::find(const std::string& id) const {
  auto it = std::find_if(components.begin(), components.end(),
                         [&](const ComponentDescriptor& c) { return c.id == id; });
  return it == components.end() ? nullptr : &*it;
}

namespace {

ComponentDescriptor component_from_json(const json& j) {
  auto bad = [](const std::string& subject) {
    return [subject](const std::string& m) {
      throw ArchitectureError(ArchitectureErrorKind::invalid_field, subject, m);
    };
  };
  if (!j.is_object()) bad("component")("component entries must be objects");

  ComponentDescriptor c;
  c.id = detail::require_string(j, "id", bad("component"));
  auto fail = bad(c.id);
  c.name = detail::optional_string(j, "name", fail).value_or(c.id);
  auto layer = detail::require_string(j, "layer", fail);
  auto l = parse_layer(layer);
  if (!l) throw ArchitectureError(ArchitectureErrorKind::unknown_layer, layer, "in component " + c.id);
  c.layer = *l;
  c.kind = detail::optional_string(j, "kind", fail).value_or("");
  if (j.contains("endpoint") && !j["endpoint"].is_null()) {
    const auto& e = j["endpoint"];
    if (!e.is_object()) fail("'endpoint' must be an object");
    Endpoint ep;
    ep.address = detail::require_string(e, "address", fail);
    auto proto = detail::optional_string(e, "protocol", fail).value_or("http");
    auto p = parse_protocol(proto);
    if (!p) fail("unknown protocol '" + proto + "'");
    ep.protocol = *p;
    c.endpoint = ep;
  }
  if (j.contains("tags")) {
    if (!j["tags"].is_array()) fail("'tags' must be an array");
    for (const auto& t : j["tags"]) {
      if (!t.is_string()) fail("tags must be strings");
      c.tags.insert(t.get<std::string>());
    }
  }
  c.parent = detail::optional_string(j, "parent", fail);
  return c;
}

}  // namespace

ArchitectureDescriptor load_architecture(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ArchitectureError(ArchitectureErrorKind::syntax_error,
                            "line " + std::to_string(detail::line_of_offset(text, e.byte)), e.what());
  }
  auto fail_doc = [](const std::string& m) {
    throw ArchitectureError(ArchitectureErrorKind::invalid_field, "document", m);
  };
  if (!doc.is_object()) fail_doc("top level must be an object");

  ArchitectureDescriptor arch;
  arch.name = detail::optional_string(doc, "name", fail_doc).value_or("");
  if (doc.contains("components")) {
    if (!doc["components"].is_array()) fail_doc("'components' must be an array");
    for (const auto& cj : doc["components"]) {
      auto c = component_from_json(cj);
      if (arch.contains(c.id)) {
        throw ArchitectureError(ArchitectureErrorKind::duplicate_component, c.id, "id declared more than once");
      }
      arch.components.push_back(std::move(c));
    }
  }

  for (const auto& c : arch.components) {
    if (c.parent && !arch.contains(*c.parent)) {
      throw ArchitectureError(ArchitectureErrorKind::dangling_parent, c.id,
                              "parent '" + *c.parent + "' does not resolve");
    }
  }
  for (const auto& c : arch.components) {
    // A chain longer than the component count must revisit a node.
    const ComponentDescriptor* cur = &c;
    std::size_t steps = 0;
    while (cur->parent) {
      cur = arch.find(*cur->parent);
      if (++steps > arch.components.size()) {
        throw ArchitectureError(ArchitectureErrorKind::parent_cycle, c.id, "parent chain loops");
      }
    }
  }
  return arch;
}

std::vector<ComponentDescriptor> query_components(const ArchitectureDescriptor& arch,
                                                  const ComponentFilter& filter) {
  std::vector<ComponentDescriptor> out;
  for (const auto& c : arch.components) {
    if (filter.layer && c.layer != *filter.layer) continue;
    if (filter.kind && c.kind != *filter.kind) continue;
    if (filter.tag && !c.tags.contains(*filter.tag)) continue;
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

std::string dump_architecture(const ArchitectureDescriptor& arch, int indent) {
  json doc;
  doc["name"] = arch.name;
  doc["components"] = json::array();
  for (const auto& c : arch.components) {
    json cj{{"id", c.id}, {"name", c.name}, {"layer", to_string(c.layer)}, {"kind", c.kind}, {"tags", c.tags}};
    if (c.endpoint) cj["endpoint"] = {{"address", c.endpoint->address}, {"protocol", to_string(c.endpoint->protocol)}};
    if (c.parent) cj["parent"] = *c.parent;
    doc["components"].push_back(std::move(cj));
  }
  return doc.dump(indent);
}

}  // namespace cloudhealth

#pragma once

// Static description of the monitored system: its components, the layer each
// lives on, and how to reach them.

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cloudhealth {

enum class Layer { device, edge, platform, application };
enum class Protocol { http, sim };

std::string_view to_string(Layer l);
std::string_view to_string(Protocol p);
std::optional<Layer> parse_layer(std::string_view s);
std::optional<Protocol> parse_protocol(std::string_view s);

struct Endpoint {
  std::string address;  // host:port
  Protocol protocol = Protocol::http;
};

struct ComponentDescriptor {
  std::string id;
  std::string name;
  Layer layer = Layer::application;
  std::string kind;
  std::optional<Endpoint> endpoint;
  std::set<std::string> tags;
  std::optional<std::string> parent;
};

struct ArchitectureDescriptor {
  std::string name;
  std::vector<ComponentDescriptor> components;

  const ComponentDescriptor* find(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id) != nullptr; }
};

struct ComponentFilter {
  std::optional<Layer> layer;
  std::optional<std::string> kind;
  std::optional<std::string> tag;
};

enum class ArchitectureErrorKind { syntax_error, duplicate_component, dangling_parent, parent_cycle, unknown_layer, invalid_field };

std::string_view to_string(ArchitectureErrorKind k);

class ArchitectureError : public std::runtime_error {
 public:
  ArchitectureError(ArchitectureErrorKind kind, std::string subject, const std::string& message);

  ArchitectureErrorKind kind() const noexcept { return kind_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ArchitectureErrorKind kind_;
  std::string subject_;
};

/// Throws ArchitectureError on malformed or inconsistent descriptors.
ArchitectureDescriptor load_architecture(std::string_view text);

/// Components matching every provided filter field, ordered by id.
std::vector<ComponentDescriptor> query_components(const ArchitectureDescriptor& arch,
                                                  const ComponentFilter& filter);

std::string dump_architecture(const ArchitectureDescriptor& arch, int indent = 2);

}  // namespace cloudhealth

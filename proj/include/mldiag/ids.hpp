#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <utility>

namespace mldiag {

// Opaque string identifier. The tag keeps component and probe ids from
// being mixed up at compile time.
template <class Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string value) : value_(std::move(value)) {}
  explicit Id(const char* value) : value_(value) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const Id&, const Id&) = default;
  friend bool operator==(const Id&, const Id&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Id& id) {
    return os << id.value_;
  }

 private:
  std::string value_;
};

struct ComponentTag {};
struct ProbeTag {};

using ComponentId = Id<ComponentTag>;
using ProbeId = Id<ProbeTag>;

}  // namespace mldiag

template <class Tag>
struct std::hash<mldiag::Id<Tag>> {
  std::size_t operator()(const mldiag::Id<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};

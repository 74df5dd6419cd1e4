#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "rpm/bytes.hpp"
#include "rpm/rng.hpp"

namespace rpm::registry {

enum class Role : std::uint8_t { MedicalProfessional = 0, Patient = 1 };

inline const char* role_name(Role r) {
  return r == Role::MedicalProfessional ? "mp" : "patient";
}

// Opaque pseudo-identity: a role tag plus 16 random bytes. Carries no
// linkable information about the real identity behind it.
struct PseudoId {
  Role role = Role::Patient;
  std::array<std::uint8_t, 16> id{};

  static constexpr std::size_t kWireSize = 17;

  Bytes to_bytes() const {
    Bytes out;
    out.reserve(kWireSize);
    out.push_back(static_cast<std::uint8_t>(role));
    out.insert(out.end(), id.begin(), id.end());
    return out;
  }

  static std::optional<PseudoId> from_bytes(std::span<const std::uint8_t> data) {
    if (data.size() != kWireSize || data[0] > 1) return std::nullopt;
    PseudoId pid;
    pid.role = static_cast<Role>(data[0]);
    std::copy(data.begin() + 1, data.end(), pid.id.begin());
    return pid;
  }

  static PseudoId mint(Role role, Rng& rng) {
    PseudoId pid;
    pid.role = role;
    rng.fill(pid.id);
    return pid;
  }

  std::string to_hex() const { return rpm::to_hex(to_bytes()); }

  auto operator<=>(const PseudoId&) const = default;
};

}  // namespace rpm::registry

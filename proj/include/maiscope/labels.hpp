#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace maiscope {

// Detector output classes. Integer codes are part of the wire formats.
enum class CellClass : std::uint8_t { kRbc = 0, kWbc = 1, kPlatelet = 2 };

inline constexpr int kCellClassCount = 3;

// Labels shown to the operator. Malaria only ever replaces RBC.
enum class FinalLabel : std::uint8_t { kRbc = 0, kWbc = 1, kPlatelet = 2, kMalaria = 3 };

constexpr std::string_view to_string(CellClass c) noexcept {
  switch (c) {
    case CellClass::kRbc: return "RBC";
    case CellClass::kWbc: return "WBC";
    case CellClass::kPlatelet: return "Platelet";
  }
  return "?";
}

constexpr std::string_view to_string(FinalLabel l) noexcept {
  switch (l) {
    case FinalLabel::kRbc: return "RBC";
    case FinalLabel::kWbc: return "WBC";
    case FinalLabel::kPlatelet: return "Platelet";
    case FinalLabel::kMalaria: return "Malaria";
  }
  return "?";
}

constexpr FinalLabel to_final_label(CellClass c) noexcept {
  return static_cast<FinalLabel>(static_cast<std::uint8_t>(c));
}

inline std::optional<CellClass> cell_class_from_code(int code) noexcept {
  if (code < 0 || code >= kCellClassCount) return std::nullopt;
  return static_cast<CellClass>(code);
}

inline std::optional<FinalLabel> final_label_from_string(std::string_view s) noexcept {
  if (s == "RBC") return FinalLabel::kRbc;
  if (s == "WBC") return FinalLabel::kWbc;
  if (s == "Platelet") return FinalLabel::kPlatelet;
  if (s == "Malaria") return FinalLabel::kMalaria;
  return std::nullopt;
}

}  // namespace maiscope

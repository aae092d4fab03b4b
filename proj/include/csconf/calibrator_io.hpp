#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "csconf/calibration.hpp"
#include "csconf/segmentation.hpp"

namespace csconf {

using AnyCalibrator = std::variant<Calibrator, SegCalibrator>;

// Versioned line-oriented text: "csconf-calibrator 1" header, then
// "<key> <values...>" lines; reals use the shortest round-trip decimal form.
std::string serialize_calibrator(const Calibrator& cal);
std::string serialize_calibrator(const SegCalibrator& cal);
AnyCalibrator parse_calibrator(const std::string& text);

void save_calibrator(const AnyCalibrator& cal, const std::filesystem::path& path);
AnyCalibrator load_calibrator(const std::filesystem::path& path);

}  // namespace csconf

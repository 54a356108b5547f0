#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "atbp/data.hpp"
#include "atbp/fit.hpp"
#include "atbp/intervals.hpp"
#include "atbp/predict.hpp"
#include "atbp/simlab.hpp"

// File formats: CSV per RFC 4180 (UTF-8, '.' decimal point) and JSON.
// Files written here start with '#' comment lines carrying the tool version,
// config hash and seed; the readers skip such lines.

namespace atbp::io {

/// Provenance stamped into every output file.
struct FileMeta {
  std::string tool_version;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// population.csv schema: area_id, unit_id, sampled, y, x_1..x_p.
/// y must be empty for non-sampled rows; an intercept is a user-supplied
/// constant column. Throws invalid_input with row/column diagnostics.
FinitePopulation read_population_csv(const std::string& path);
void write_population_csv(const FinitePopulation& pop, const std::string& path,
                          const FileMeta& meta);

/// fit.json: the interchange artifact between `fit` and `predict`/`interval`.
struct FitArtifact {
  FittedModel model;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string residuals_file;  // optional side file
};

void write_fit_json(const FitArtifact& artifact, const std::string& path);
FitArtifact read_fit_json(const std::string& path);

void write_residuals_csv(std::span<const Residual> residuals, const std::string& path,
                         const FileMeta& meta);
void write_predictions_csv(std::span<const AreaPrediction> predictions,
                           const std::string& path, const FileMeta& meta);
void write_intervals_csv(std::span<const IntervalResult> intervals,
                         const std::string& path, const FileMeta& meta);

/// StudyReport grids: prediction studies emit group x method RMSEs,
/// interval studies emit area x method CP/AL.
void write_study_csv(const StudyReport& report, const std::string& path,
                     const FileMeta& meta);
void write_study_json(const StudyReport& report, const std::string& path,
                      const FileMeta& meta);

/// 64-bit FNV-1a as 16 hex digits (config hashing).
std::string fnv1a_hex(std::string_view text);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace atbp::io

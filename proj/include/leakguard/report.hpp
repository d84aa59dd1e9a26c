#pragma once

#include <json.hpp>

#include <string>

#include "leakguard/audit.hpp"
#include "leakguard/delta_lsi.hpp"
#include "leakguard/resample.hpp"
#include "leakguard/sim.hpp"
#include "leakguard/split.hpp"

namespace leakguard {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// JSON is the canonical interchange format; HTML is derived from it. Each
// to_json is pure (no timestamps) so stored artifacts diff cleanly.
nlohmann::json plan_to_json(const SplitPlan& plan);
SplitPlan plan_from_json(const nlohmann::json& j);

nlohmann::json fit_to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);

nlohmann::json tune_to_json(const TuneResult& tune);
nlohmann::json audit_to_json(const AuditResult& audit);
nlohmann::json dlsi_to_json(const DeltaLsiResult& res);
nlohmann::json sim_grid_to_json(const SimGrid& grid);

// adds the generated_at timestamp; call at write time, never before hashing
void stamp_bundle(nlohmann::json& bundle);

// Self-contained single-file HTML for any bundle kind produced above.
// Numbers render to 4 significant decimals; byte-identical given the same
// bundle and tool version.
std::string render_html(const nlohmann::json& bundle);

nlohmann::json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace leakguard

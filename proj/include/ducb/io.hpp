#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ducb/divergence.hpp"
#include "ducb/experts.hpp"
#include "ducb/harness.hpp"
#include "ducb/policies.hpp"
#include "json.hpp"

namespace ducb {

// Matrices are nested row-major arrays. JSON has no infinity, so +inf
// (unbounded divergence) is written as null and read back as +inf.

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

/// {"type": "tabular", "probs": [[..]]} or
/// {"type": "softmax", "weights": [[..]], "bias": [..], "temperature": t, "floor": f}.
nlohmann::json expert_to_json(const Expert& expert);
Expert expert_from_json(const nlohmann::json& j);

/// {"m": [[..]], "sigma": [[..]]}.
nlohmann::json divergence_to_json(const DivergenceMatrix& div);
DivergenceMatrix divergence_from_json(const nlohmann::json& j);

/// Expert file: {"experts": [...], "contexts": [p_1..p_C] (optional)}.
struct ExpertFile {
  std::vector<Expert> experts;
  std::optional<Eigen::VectorXd> context_probs;
};

ExpertFile load_expert_file(const std::filesystem::path& path);
void save_expert_file(const std::filesystem::path& path, const ExpertFile& file);

/// Gap profile file: {"gaps": [0, d2, ..., dN]} or a bare array.
GapProfile load_gap_profile(const std::filesystem::path& path);

/// Reads a whole JSON document; IoError if unreadable, ConfigError if malformed.
nlohmann::json read_json(const std::filesystem::path& path);
/// Writes text atomically enough for our purposes; IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest text that round-trips the double (printf %.17g; nan/inf spelled out).
std::string format_double(double x);

/// Trace CSV: t,expert,arm,reward,regret[,index_0..index_{N-1}].
/// Index columns appear when `with_indices` is set; the width is the largest
/// pool seen, and missing entries are left empty.
void write_trace_csv(std::ostream& out, const EpisodeTrace& trace, bool with_indices);
std::string trace_csv(const EpisodeTrace& trace, bool with_indices);

}  // namespace ducb

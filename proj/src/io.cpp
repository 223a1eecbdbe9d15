#include "ducb/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ducb/error.hpp"

namespace ducb {

using nlohmann::json;

namespace {

json number(double x) { return std::isinf(x) && x > 0 ? json(nullptr) : json(x); }

double number_from(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("matrix must be an array of rows");
  if (j.empty()) return {};
  const std::size_t cols = j.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError("matrix rows are ragged");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number_from(j[r][c]);
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("vector must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_from(j[i]);
  return v;
}

json expert_to_json(const Expert& expert) {
  if (const TabularExpert* t = expert.tabular())
    return {{"type", "tabular"}, {"probs", matrix_to_json(t->probs)}};
  const SoftmaxExpert* s = expert.softmax();
  return {{"type", "softmax"},
          {"weights", matrix_to_json(s->weights)},
          {"bias", vector_to_json(s->bias)},
          {"temperature", s->temperature},
          {"floor", s->floor}};
}

Expert expert_from_json(const json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "tabular") return TabularExpert(matrix_from_json(j.at("probs")));
    if (type == "softmax")
      return SoftmaxExpert(matrix_from_json(j.at("weights")), vector_from_json(j.at("bias")),
                           j.value("temperature", 1.0), j.value("floor", kProbFloor));
    throw ConfigError("unknown expert type '" + type + "'");
  } catch (const json::exception& e) {
    throw ConfigError("expert: " + std::string(e.what()));
  } catch (const InputError& e) {
    throw ConfigError("expert: " + std::string(e.what()));
  }
}

json divergence_to_json(const DivergenceMatrix& div) {
  return {{"m", matrix_to_json(div.m)}, {"sigma", matrix_to_json(div.sigma)}};
}

DivergenceMatrix divergence_from_json(const json& j) {
  try {
    DivergenceMatrix d{matrix_from_json(j.at("m")), matrix_from_json(j.at("sigma"))};
    if (d.m.rows() != d.m.cols() || d.sigma.rows() != d.m.rows() || d.sigma.cols() != d.m.cols())
      throw ConfigError("divergence matrices must be square and equal in size");
    return d;
  } catch (const json::exception& e) {
    throw ConfigError("divergence matrix: " + std::string(e.what()));
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

ExpertFile load_expert_file(const std::filesystem::path& path) {
  const json j = read_json(path);
  ExpertFile file;
  try {
    const json& list = j.is_array() ? j : j.at("experts");
    for (const json& e : list) file.experts.push_back(expert_from_json(e));
    if (j.is_object() && j.contains("contexts")) file.context_probs = vector_from_json(j.at("contexts"));
  } catch (const json::exception& e) {
    throw ConfigError("expert file: " + std::string(e.what()));
  }
  if (file.experts.empty()) throw ConfigError("expert file lists no experts");
  return file;
}

void save_expert_file(const std::filesystem::path& path, const ExpertFile& file) {
  json j;
  j["experts"] = json::array();
  for (const Expert& e : file.experts) j["experts"].push_back(expert_to_json(e));
  if (file.context_probs) j["contexts"] = vector_to_json(*file.context_probs);
  write_text(path, j.dump(2) + "\n");
}

GapProfile load_gap_profile(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    GapProfile g = vector_from_json(j.is_array() ? j : j.at("gaps"));
    validate_gaps(g);
    return g;
  } catch (const json::exception& e) {
    throw ConfigError("gap profile: " + std::string(e.what()));
  } catch (const InputError& e) {
    throw ConfigError("gap profile: " + std::string(e.what()));
  }
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_trace_csv(std::ostream& out, const EpisodeTrace& trace, bool with_indices) {
  std::size_t width = 0;
  if (with_indices)
    for (const RoundRecord& r : trace.rounds) width = std::max(width, r.indices.size());
  out << "t,expert,arm,reward,regret";
  for (std::size_t k = 0; k < width; ++k) out << ",index_" << k;
  out << '\n';
  for (const RoundRecord& r : trace.rounds) {
    out << r.t << ',' << r.expert << ',' << r.arm << ',' << format_double(r.reward) << ','
        << format_double(r.regret);
    for (std::size_t k = 0; k < width; ++k) {
      out << ',';
      if (k < r.indices.size()) out << format_double(r.indices[k]);
    }
    out << '\n';
  }
}

std::string trace_csv(const EpisodeTrace& trace, bool with_indices) {
  std::ostringstream out;
  write_trace_csv(out, trace, with_indices);
  return out.str();
}

}  // namespace ducb

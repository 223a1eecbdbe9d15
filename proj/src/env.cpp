#include "ducb/env.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ducb/error.hpp"
#include "json.hpp"

namespace ducb {

namespace {

constexpr double kProbSumTol = 1e-12;

void check_prob_vector(const Eigen::VectorXd& p, const char* what) {
  if (p.size() == 0) throw InputError(std::string(what) + ": empty probability vector");
  if ((p.array() < 0.0).any() || !p.allFinite())
    throw InputError(std::string(what) + ": negative or non-finite probability");
  if (std::abs(p.sum() - 1.0) > kProbSumTol)
    throw InputError(std::string(what) + ": probabilities do not sum to 1");
}

}  // namespace

TabularEnvironment::TabularEnvironment(Eigen::VectorXd context_probs,
                                       Eigen::MatrixXd reward_means, std::uint64_t seed)
    : context_probs_(std::move(context_probs)),
      reward_means_(std::move(reward_means)),
      seed_(seed),
      context_rng_(seed, Stream::Context),
      reward_rng_(seed, Stream::Reward) {
  check_prob_vector(context_probs_, "context_probs");
  if (reward_means_.rows() != context_probs_.size() || reward_means_.cols() == 0)
    throw InputError("reward_means must be C x K with C matching context_probs");
  if (!reward_means_.allFinite() || (reward_means_.array() < 0.0).any() ||
      (reward_means_.array() > 1.0).any())
    throw InputError("reward_means entries must lie in [0, 1]");
}

std::size_t TabularEnvironment::draw_context() {
  return static_cast<std::size_t>(context_rng_.categorical(context_probs_));
}

double TabularEnvironment::sample_reward(std::size_t context_id, std::size_t arm) {
  if (context_id >= num_contexts() || arm >= num_arms())
    throw InputError("sample_reward: context or arm index out of range");
  const double mean = reward_means_(static_cast<Eigen::Index>(context_id),
                                    static_cast<Eigen::Index>(arm));
  return reward_rng_.bernoulli(mean) ? 1.0 : 0.0;
}

Context TabularEnvironment::context(std::size_t context_id) const {
  if (context_id >= num_contexts()) throw InputError("context id out of range");
  Context ctx;
  ctx.id = context_id;
  ctx.features = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(num_contexts()),
                                       static_cast<Eigen::Index>(context_id));
  return ctx;
}

double true_expert_mean(const TabularEnvironment& env, const Eigen::MatrixXd& conditional) {
  if (conditional.rows() != env.reward_means().rows() ||
      conditional.cols() != env.reward_means().cols())
    throw InputError("true_expert_mean: expert table shape does not match environment");
  const Eigen::VectorXd per_context = conditional.cwiseProduct(env.reward_means()).rowwise().sum();
  return env.context_probs().dot(per_context);
}

DatasetEnvironment::DatasetEnvironment(Eigen::MatrixXd features, std::vector<std::size_t> labels,
                                       std::size_t num_arms)
    : features_(std::move(features)), labels_(std::move(labels)), num_arms_(num_arms) {
  if (num_arms_ == 0) throw InputError("dataset: num_arms must be positive");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size())
    throw InputError("dataset: feature rows and labels differ in count");
  for (std::size_t label : labels_)
    if (label >= num_arms_) throw InputError("dataset: label outside [0, num_arms)");
  if (!features_.allFinite()) throw InputError("dataset: non-finite feature value");
}

void DatasetEnvironment::shuffle(std::uint64_t seed) {
  Rng rng(seed, Stream::Shuffle);
  const std::size_t n = labels_.size();
  std::vector<Eigen::Index> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Eigen::Index>(i);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  Eigen::MatrixXd shuffled(features_.rows(), features_.cols());
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled.row(static_cast<Eigen::Index>(i)) = features_.row(order[i]);
    labels[i] = labels_[static_cast<std::size_t>(order[i])];
  }
  features_ = std::move(shuffled);
  labels_ = std::move(labels);
  cursor_ = 0;
}

std::optional<Context> DatasetEnvironment::peek() const {
  if (cursor_ >= labels_.size()) return std::nullopt;
  Context ctx;
  ctx.id = cursor_;
  ctx.features = features_.row(static_cast<Eigen::Index>(cursor_)).transpose();
  return ctx;
}

std::optional<RoundOutcome> DatasetEnvironment::step(std::size_t arm) {
  auto ctx = peek();
  if (!ctx) return std::nullopt;
  if (arm >= num_arms_) throw InputError("dataset_step: arm out of range");
  RoundOutcome out{std::move(*ctx), arm, arm == labels_[cursor_] ? 1.0 : 0.0};
  ++cursor_;
  return out;
}

double DatasetEnvironment::reward(const Context& context, std::size_t arm) {
  if (context.id != cursor_) throw InputError("dataset reward queried for a stale context");
  auto out = step(arm);
  if (!out) throw InputError("dataset exhausted");
  return out->reward;
}

DatasetEnvironment load_dataset_csv(const std::filesystem::path& path, std::size_t num_arms) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path.string());

  std::vector<std::size_t> labels;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
      if (!numeric) break;
    }
    if (!numeric) {
      if (rows.empty() && labels.empty()) continue;  // header
      throw InputError("dataset line " + std::to_string(line_no) + ": non-numeric value");
    }
    if (values.size() < 2)
      throw InputError("dataset line " + std::to_string(line_no) + ": need label and features");
    const double label = values.front();
    if (label < 0 || label != std::floor(label))
      throw InputError("dataset line " + std::to_string(line_no) + ": label must be a nonnegative integer");
    labels.push_back(static_cast<std::size_t>(label));
    rows.emplace_back(values.begin() + 1, values.end());
    if (rows.back().size() != rows.front().size())
      throw InputError("dataset line " + std::to_string(line_no) + ": inconsistent feature dimension");
  }
  if (rows.empty()) throw InputError("dataset has no rows: " + path.string());

  Eigen::MatrixXd features(static_cast<Eigen::Index>(rows.size()),
                           static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c)
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return DatasetEnvironment(std::move(features), std::move(labels), num_arms);
}

EnvironmentSpec load_environment_spec(const std::filesystem::path& spec_path) {
  std::ifstream in(spec_path);
  if (!in) throw IoError("cannot open environment spec: " + spec_path.string());
  nlohmann::json json;
  try {
    in >> json;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("environment spec is not valid JSON: " + std::string(e.what()));
  }

  EnvironmentSpec spec;
  try {
    spec.seed = json.value("seed", std::uint64_t{0});
    if (json.contains("dataset_path")) {
      std::filesystem::path data = json.at("dataset_path").get<std::string>();
      if (data.is_relative()) data = spec_path.parent_path() / data;
      spec.dataset = std::make_shared<const DatasetEnvironment>(
          load_dataset_csv(data, json.at("num_arms").get<std::size_t>()));
      spec.shuffle = json.value("shuffle", false);
      return spec;
    }
    const auto probs = json.at("contexts").get<std::vector<double>>();
    const auto means = json.at("reward_means").get<std::vector<std::vector<double>>>();
    if (means.empty()) throw ConfigError("reward_means is empty");
    spec.context_probs = Eigen::Map<const Eigen::VectorXd>(probs.data(),
                                                           static_cast<Eigen::Index>(probs.size()));
    spec.reward_means.resize(static_cast<Eigen::Index>(means.size()),
                             static_cast<Eigen::Index>(means.front().size()));
    for (std::size_t i = 0; i < means.size(); ++i) {
      if (means[i].size() != means.front().size()) throw ConfigError("reward_means is ragged");
      for (std::size_t j = 0; j < means[i].size(); ++j)
        spec.reward_means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = means[i][j];
    }
    // Validate now so errors surface as config errors.
    TabularEnvironment check(spec.context_probs, spec.reward_means, spec.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("environment spec: " + std::string(e.what()));
  } catch (const InputError& e) {
    throw ConfigError("environment spec: " + std::string(e.what()));
  }
  return spec;
}

std::unique_ptr<Environment> instantiate(const EnvironmentSpec& spec, std::uint64_t seed) {
  if (spec.is_dataset()) {
    auto env = std::make_unique<DatasetEnvironment>(*spec.dataset);
    if (spec.shuffle) env->shuffle(seed);
    return env;
  }
  return std::make_unique<TabularEnvironment>(spec.context_probs, spec.reward_means, seed);
}

std::unique_ptr<Environment> load_environment(const std::filesystem::path& spec_path) {
  const EnvironmentSpec spec = load_environment_spec(spec_path);
  return instantiate(spec, spec.seed);
}

}  // namespace ducb

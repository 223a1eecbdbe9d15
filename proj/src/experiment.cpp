#include "ducb/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "ducb/error.hpp"
#include "ducb/io.hpp"
#include "ducb/stats.hpp"

namespace ducb {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Synthetic instance
// ---------------------------------------------------------------------------

SyntheticInstance make_synthetic_instance(const SyntheticSpec& spec) {
  const std::size_t n = spec.num_experts;
  const std::size_t k = spec.num_arms;
  const std::size_t c = spec.num_contexts;
  if (n < 2 || k < 2 || c < 1) throw InputError("synthetic instance needs N >= 2, K >= 2, C >= 1");
  if (!(spec.delta2 > 0.0 && spec.delta2 <= spec.max_gap))
    throw InputError("synthetic instance needs 0 < delta2 <= max_gap");
  const double slope = (spec.high - spec.low) * (1.0 - 1.0 / static_cast<double>(k));
  if (spec.max_gap > slope * spec.a_max + 1e-12)
    throw InputError("synthetic instance: max_gap not reachable with this a_max");

  Rng rng(spec.seed, Stream::Instance);
  std::vector<double> gaps(n);
  gaps[0] = 0.0;
  gaps[1] = spec.delta2;
  for (std::size_t i = 2; i < n; ++i) gaps[i] = rng.uniform(spec.delta2, spec.max_gap);
  // Random placement so the best expert is not favoured by index tie-breaks.
  for (std::size_t i = n - 1; i > 0; --i) std::swap(gaps[i], gaps[rng.index(i + 1)]);

  SyntheticInstance inst;
  const auto ci = static_cast<Eigen::Index>(c);
  const auto ki = static_cast<Eigen::Index>(k);
  inst.context_probs = Eigen::VectorXd::Constant(ci, 1.0 / static_cast<double>(c));
  inst.reward_means = Eigen::MatrixXd::Constant(ci, ki, spec.low);
  for (Eigen::Index x = 0; x < ci; ++x) inst.reward_means(x, x % ki) = spec.high;

  const TabularEnvironment env(inst.context_probs, inst.reward_means, spec.seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::max(0.0, spec.a_max - gaps[i] / slope);
    Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(ci, ki, (1.0 - a) / static_cast<double>(k));
    for (Eigen::Index x = 0; x < ci; ++x) probs(x, x % ki) += a;
    Expert e = TabularExpert(std::move(probs));
    inst.means.push_back(true_expert_mean(env, e));
    inst.experts.push_back(std::move(e));
  }
  const double best = *std::max_element(inst.means.begin(), inst.means.end());
  inst.gaps.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) inst.gaps(static_cast<Eigen::Index>(i)) = best - inst.means[i];
  std::sort(inst.gaps.data(), inst.gaps.data() + inst.gaps.size());
  inst.gaps(0) = 0.0;
  return inst;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() ? base / path : path;
}

const std::vector<std::string> kPolicyNames{"ducb",    "ducb-clipped",    "ducb-mom",
                                            "ucb1",    "egreedy",         "first",
                                            "batched", "batched-clipped", "batched-mom"};

}  // namespace

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  try {
    if (j.contains("policies")) {
      cfg.policies = j.at("policies").get<std::vector<std::string>>();
    } else if (j.contains("policy")) {
      cfg.policies = {j.at("policy").get<std::string>()};
    }
    if (cfg.policies.empty()) throw ConfigError("no policies configured");
    for (const std::string& p : cfg.policies)
      if (!is_known_policy(p))
        throw ConfigError("unknown policy '" + p + "'");

    if (j.contains("estimator")) {
      try {
        cfg.estimator.kind = estimator_from_string(j.at("estimator").get<std::string>());
      } catch (const InputError& e) {
        throw ConfigError(e.what());
      }
    }
    if (j.value("constants", std::string("practice")) == "analysis") {
      cfg.estimator.clipped = ClippedConfig::analysis();
      cfg.estimator.mom = MoMConfig::analysis();
    }
    cfg.estimator.clipped.c1 = j.value("c1", cfg.estimator.clipped.c1);
    cfg.estimator.mom.c2 = j.value("c2", cfg.estimator.mom.c2);
    cfg.estimator.mom.c3 = j.value("c3", cfg.estimator.mom.c3);
    cfg.update_every = j.value("update_every", cfg.update_every);
    if (cfg.update_every == 0) throw ConfigError("update_every must be >= 1");

    cfg.horizon = j.value("T", j.value("horizon", cfg.horizon));
    if (cfg.horizon == 0) throw ConfigError("T must be positive");
    cfg.seed = j.value("seed", cfg.seed);
    cfg.reps = j.value("reps", cfg.reps);
    if (cfg.reps == 0) throw ConfigError("reps must be positive");
    cfg.threads = j.value("threads", cfg.threads);

    if (j.contains("env")) cfg.env_path = resolve(base_dir, j.at("env").get<std::string>());
    if (j.contains("experts")) cfg.experts_path = resolve(base_dir, j.at("experts").get<std::string>());
    if (j.contains("synthetic")) {
      const json& s = j.at("synthetic");
      SyntheticSpec spec;
      spec.num_experts = s.value("num_experts", spec.num_experts);
      spec.num_arms = s.value("num_arms", spec.num_arms);
      spec.num_contexts = s.value("num_contexts", spec.num_contexts);
      spec.delta2 = s.value("delta2", spec.delta2);
      spec.max_gap = s.value("max_gap", spec.max_gap);
      spec.a_max = s.value("a_max", spec.a_max);
      spec.high = s.value("high", spec.high);
      spec.low = s.value("low", spec.low);
      spec.seed = s.value("seed", spec.seed);
      cfg.synthetic = spec;
    }
    if (!cfg.synthetic && !cfg.env_path) throw ConfigError("config needs either 'env' or 'synthetic'");
    if (cfg.synthetic && (cfg.env_path || cfg.experts_path))
      throw ConfigError("'synthetic' cannot be combined with 'env' or 'experts'");

    const std::string div = j.value("divergences", std::string("exact"));
    if (div == "exact") {
      cfg.divergences = DivergenceSource::Exact;
    } else if (div == "empirical") {
      cfg.divergences = DivergenceSource::Empirical;
    } else {
      throw ConfigError("divergences must be 'exact' or 'empirical'");
    }
    cfg.divergence_groups = j.value("divergence_groups", cfg.divergence_groups);
    cfg.divergence_samples = j.value("divergence_samples", cfg.divergence_samples);
    if (cfg.divergence_groups == 0) throw ConfigError("divergence_groups must be >= 1");

    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    cfg.explore_rounds = j.value("explore_rounds", cfg.explore_rounds);

    if (j.contains("batch")) {
      const json& b = j.at("batch");
      cfg.batch.experts_per_batch = b.value("experts_per_batch", cfg.batch.experts_per_batch);
      cfg.batch.batch_length_multiplier = b.value("length_multiplier", cfg.batch.batch_length_multiplier);
      cfg.batch.max_pool = b.value("max_pool", cfg.batch.max_pool);
      cfg.batch.oracle.base.epochs = b.value("epochs", cfg.batch.oracle.base.epochs);
      cfg.batch.oracle.base.learning_rate = b.value("learning_rate", cfg.batch.oracle.base.learning_rate);
      cfg.batch.oracle.bootstrap_fraction = b.value("bootstrap_fraction", cfg.batch.oracle.bootstrap_fraction);
      cfg.batch.oracle.weight_cap = b.value("weight_cap", cfg.batch.oracle.weight_cap);
      if (!(cfg.batch.batch_length_multiplier > 0.0))
        throw ConfigError("batch length_multiplier must be positive");
    }
    cfg.batch.divergence_groups = cfg.divergence_groups;

    cfg.trace_indices = j.value("trace_indices", cfg.trace_indices);
    cfg.write_traces = j.value("write_traces", cfg.write_traces);
    if (j.contains("out")) cfg.out_dir = resolve(base_dir, j.at("out").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError("run config: " + std::string(e.what()));
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_json(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Preparation
// ---------------------------------------------------------------------------

bool is_batched(const std::string& name) { return name.rfind("batched", 0) == 0; }

bool is_known_policy(const std::string& name) {
  return std::find(kPolicyNames.begin(), kPolicyNames.end(), name) != kPolicyNames.end();
}

PreparedRun prepare_run(const RunConfig& config) {
  PreparedRun run;
  const bool needs_pool = std::any_of(config.policies.begin(), config.policies.end(),
                                      [](const std::string& p) { return !is_batched(p); });

  if (config.synthetic) {
    SyntheticInstance inst = make_synthetic_instance(*config.synthetic);
    run.env.seed = config.synthetic->seed;
    run.env.context_probs = inst.context_probs;
    run.env.reward_means = inst.reward_means;
    run.pool = std::move(inst.experts);
    run.true_means = std::move(inst.means);
  } else {
    run.env = load_environment_spec(*config.env_path);
    if (config.experts_path) {
      run.pool = load_expert_file(*config.experts_path).experts;
    } else if (needs_pool) {
      throw ConfigError("fixed-pool policies need an 'experts' file");
    }
  }

  if (run.env.is_dataset()) {
    run.num_arms = run.env.dataset->num_arms();
    run.feature_dim = run.env.dataset->feature_dim();
  } else {
    run.num_arms = static_cast<std::size_t>(run.env.reward_means.cols());
    run.feature_dim = static_cast<std::size_t>(run.env.reward_means.rows());
  }

  if (run.pool.empty()) return run;
  for (const Expert& e : run.pool)
    if (e.num_arms() != run.num_arms) throw ConfigError("expert arm count does not match the environment");

  if (run.env.is_dataset()) {
    // No context distribution is known; estimate divergences from the rows.
    std::vector<Context> rows;
    const DatasetEnvironment& data = *run.env.dataset;
    rows.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      rows.push_back({i, data.features().row(static_cast<Eigen::Index>(i)).transpose()});
    run.divergences = empirical_divergences(run.pool, rows, config.divergence_groups);
    return run;
  }

  const TabularEnvironment env(run.env.context_probs, run.env.reward_means, run.env.seed);
  if (run.true_means.empty())
    for (const Expert& e : run.pool) run.true_means.push_back(true_expert_mean(env, e));

  if (config.divergences == DivergenceSource::Exact) {
    run.divergences = exact_divergences(run.pool, run.env.context_probs);
  } else {
    TabularEnvironment draw(run.env.context_probs, run.env.reward_means,
                            derive_seed(config.seed, static_cast<std::uint64_t>(Stream::Instance)));
    std::vector<Context> contexts;
    contexts.reserve(config.divergence_samples);
    for (std::size_t i = 0; i < config.divergence_samples; ++i) contexts.push_back(*draw.next_context());
    run.divergences = empirical_divergences(run.pool, contexts, config.divergence_groups);
  }
  return run;
}

std::unique_ptr<Policy> make_policy(const std::string& name, const RunConfig& config,
                                    const PreparedRun& run, std::uint64_t seed) {
  EstimatorConfig est = config.estimator;
  if (name.ends_with("-clipped")) est.kind = EstimatorKind::Clipped;
  if (name.ends_with("-mom")) est.kind = EstimatorKind::MedianOfMeans;

  if (is_batched(name))
    return std::make_unique<BatchedDUcbPolicy>(run.num_arms, run.feature_dim, est, config.batch, seed);
  if (run.pool.empty()) throw ConfigError("policy '" + name + "' needs an expert pool");
  if (name.rfind("ducb", 0) == 0) {
    if (!run.divergences) throw ConfigError("D-UCB needs divergences");
    return std::make_unique<DUcbPolicy>(run.pool, *run.divergences, est, seed, config.update_every);
  }
  if (name == "ucb1") return std::make_unique<Ucb1Policy>(run.pool);
  if (name == "egreedy") return std::make_unique<EpsilonGreedyPolicy>(run.pool, config.epsilon, seed);
  if (name == "first") return std::make_unique<FirstPolicy>(run.pool, config.explore_rounds, seed);
  throw ConfigError("unknown policy '" + name + "'");
}

std::uint64_t replication_seed(std::uint64_t run_seed, std::size_t rep) {
  return derive_seed(run_seed, rep);
}

std::uint64_t environment_seed(std::uint64_t run_seed, std::uint64_t env_seed, std::size_t rep) {
  return derive_seed(derive_seed(run_seed ^ 0x656e76ULL, env_seed), rep);
}

// ---------------------------------------------------------------------------
// Replications
// ---------------------------------------------------------------------------

std::vector<std::size_t> checkpoints(std::size_t horizon) {
  std::vector<std::size_t> out;
  for (std::size_t t = 1; t < horizon; t *= 2) out.push_back(t);
  out.push_back(horizon);
  return out;
}

namespace {

PolicySummary summarize(const std::string& name, const std::vector<EpisodeTrace>& traces) {
  PolicySummary s;
  s.name = name;
  std::size_t rounds = std::numeric_limits<std::size_t>::max();
  for (const EpisodeTrace& tr : traces) rounds = std::min(rounds, tr.rounds.size());
  if (traces.empty() || rounds == 0) return s;
  s.checkpoints = checkpoints(rounds);

  const std::size_t c = s.checkpoints.size();
  std::vector<std::vector<double>> regret(c), loss(c);
  for (const EpisodeTrace& tr : traces) {
    double cum = 0.0;
    double lost = 0.0;
    std::size_t next = 0;
    for (std::size_t t = 0; t < rounds && next < c; ++t) {
      cum += tr.rounds[t].regret;
      lost += 1.0 - tr.rounds[t].reward;
      if (t + 1 == s.checkpoints[next]) {
        regret[next].push_back(cum);
        loss[next].push_back(lost / static_cast<double>(t + 1));
        ++next;
      }
    }
    s.pulls.push_back(tr.pulls);
    s.wall_seconds += tr.wall_seconds;
    s.training_fallback = s.training_fallback || tr.training_fallback;
  }
  for (std::size_t i = 0; i < c; ++i) {
    const MeanStd r = mean_std(regret[i]);
    s.mean_regret.push_back(r.mean);
    s.std_regret.push_back(r.stddev);
    s.mean_loss.push_back(mean_std(loss[i]).mean);
  }
  s.wall_seconds /= static_cast<double>(traces.size());
  return s;
}

}  // namespace

ExperimentResult run_replications(const RunConfig& config) {
  return run_replications(config, prepare_run(config));
}

ExperimentResult run_replications(const RunConfig& config, const PreparedRun& run) {
  ExperimentResult result;
  result.policies = config.policies;
  result.traces.assign(config.policies.size(), std::vector<EpisodeTrace>(config.reps));

  const std::size_t tasks = config.policies.size() * config.reps;
  std::size_t workers = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, tasks);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t task = next++; task < tasks; task = next++) {
      const std::size_t p = task / config.reps;
      const std::size_t rep = task % config.reps;
      try {
        const std::string& name = config.policies[p];
        const std::uint64_t seed = replication_seed(config.seed, rep);
        auto env = instantiate(run.env, environment_seed(config.seed, run.env.seed, rep));
        auto policy = make_policy(name, config, run, seed);
        std::span<const double> means;
        if (!is_batched(name)) means = run.true_means;
        EpisodeTrace trace = run_episode(*env, *policy, config.horizon, seed, means, config.trace_indices);
        trace.policy = name;
        result.traces[p][rep] = std::move(trace);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  for (std::size_t p = 0; p < config.policies.size(); ++p) {
    result.summaries.push_back(summarize(config.policies[p], result.traces[p]));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

namespace {

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json numbers(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number_or_null(x));
  return out;
}

std::string plot_data(const ExperimentResult& result) {
  std::ostringstream out;
  out << "policy,t,mean_regret,std_regret,mean_loss\n";
  for (std::size_t p = 0; p < result.policies.size(); ++p) {
    const auto& traces = result.traces[p];
    if (traces.empty()) continue;
    std::size_t rounds = std::numeric_limits<std::size_t>::max();
    for (const EpisodeTrace& tr : traces) rounds = std::min(rounds, tr.rounds.size());
    const std::size_t stride = std::max<std::size_t>(1, rounds / 1000);
    std::vector<double> cum(traces.size(), 0.0), lost(traces.size(), 0.0);
    for (std::size_t t = 0; t < rounds; ++t) {
      for (std::size_t r = 0; r < traces.size(); ++r) {
        cum[r] += traces[r].rounds[t].regret;
        lost[r] += 1.0 - traces[r].rounds[t].reward;
      }
      if ((t + 1) % stride != 0 && t + 1 != rounds) continue;
      const MeanStd m = mean_std(cum);
      const double l = mean_std(lost).mean / static_cast<double>(t + 1);
      out << result.policies[p] << ',' << t + 1 << ',' << format_double(m.mean) << ','
          << format_double(m.stddev) << ',' << format_double(l) << '\n';
    }
  }
  return out.str();
}

}  // namespace

void write_artifacts(const RunConfig& config, const ExperimentResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create " + config.out_dir.string() + ": " + ec.message());

  if (config.write_traces) {
    const auto dir = config.out_dir / "traces";
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t p = 0; p < result.policies.size(); ++p)
      for (std::size_t r = 0; r < result.traces[p].size(); ++r)
        write_text(dir / (result.policies[p] + "_rep" + std::to_string(r) + ".csv"),
                   trace_csv(result.traces[p][r], config.trace_indices));
  }

  json summary;
  summary["config"] = {{"policies", config.policies},
                       {"estimator", to_string(config.estimator.kind)},
                       {"c1", config.estimator.clipped.c1},
                       {"c2", config.estimator.mom.c2},
                       {"c3", config.estimator.mom.c3},
                       {"update_every", config.update_every},
                       {"T", config.horizon},
                       {"seed", config.seed},
                       {"reps", config.reps}};
  summary["lambda_form"] = "1 + sum";
  json policies = json::object();
  for (const PolicySummary& s : result.summaries) {
    json p;
    p["checkpoints"] = s.checkpoints;
    p["mean_regret"] = numbers(s.mean_regret);
    p["std_regret"] = numbers(s.std_regret);
    p["mean_loss"] = numbers(s.mean_loss);
    p["final_mean_regret"] = s.mean_regret.empty() ? json(nullptr) : number_or_null(s.mean_regret.back());
    p["final_std_regret"] = s.std_regret.empty() ? json(nullptr) : number_or_null(s.std_regret.back());
    p["pull_counts"] = s.pulls;
    p["wall_seconds_mean"] = s.wall_seconds;
    p["training_fallback"] = s.training_fallback;
    policies[s.name] = std::move(p);
  }
  summary["policies"] = std::move(policies);
  write_text(config.out_dir / "summary.json", summary.dump(2) + "\n");
  write_text(config.out_dir / "plot_data.csv", plot_data(result));
}

}  // namespace ducb

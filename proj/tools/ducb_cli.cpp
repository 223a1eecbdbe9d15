// ducb: run D-UCB experiments and evaluate the instance-dependent terms.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ducb/divergence.hpp"
#include "ducb/error.hpp"
#include "ducb/experiment.hpp"
#include "ducb/harness.hpp"
#include "ducb/io.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t reps = 0;
  std::string out;
  std::vector<std::string> policies;
  bool quiet = false;
};

void say(const Common& c, const std::string& line) {
  if (!c.quiet) std::cerr << line << '\n';
}

int cmd_run(const Common& c) {
  ducb::RunConfig cfg = ducb::load_run_config(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.reps > 0) cfg.reps = c.reps;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (!c.policies.empty()) {
    for (const std::string& p : c.policies)
      if (!ducb::is_known_policy(p)) throw ducb::ConfigError("unknown policy '" + p + "'");
    cfg.policies = c.policies;
  }

  say(c, "preparing run");
  const ducb::PreparedRun run = ducb::prepare_run(cfg);
  const ducb::ExperimentResult result = ducb::run_replications(cfg, run);
  ducb::write_artifacts(cfg, result);

  for (const ducb::PolicySummary& s : result.summaries) {
    std::ostringstream line;
    line << s.name << ": T=" << (s.checkpoints.empty() ? 0 : s.checkpoints.back())
         << " mean regret=" << ducb::format_double(s.mean_regret.empty() ? 0.0 : s.mean_regret.back())
         << " std=" << ducb::format_double(s.std_regret.empty() ? 0.0 : s.std_regret.back())
         << " loss=" << ducb::format_double(s.mean_loss.empty() ? 0.0 : s.mean_loss.back());
    if (s.training_fallback) line << " (oracle fell back to uniform)";
    say(c, line.str());
  }
  say(c, "wrote " + cfg.out_dir.string());
  return 0;
}

int cmd_bounds(const Common& c, double horizon, double m, double sigma) {
  const json file = ducb::read_json(c.config);
  const ducb::GapProfile gaps = ducb::load_gap_profile(c.config);
  if (file.is_object()) {
    horizon = horizon > 0 ? horizon : file.value("T", 10000.0);
    m = m > 0 ? m : file.value("M", 1.0);
    sigma = sigma > 0 ? sigma : file.value("sigma", 1.0);
  }
  if (horizon <= 0) horizon = 10000.0;
  if (m <= 0) m = 1.0;
  if (sigma <= 0) sigma = 1.0;

  using ducb::BoundKind;
  auto report = [&](BoundKind kind, double div) {
    const ducb::BoundReport r = ducb::theorem_bound(gaps, horizon, div, kind);
    const double alt = ducb::corollary_delta_bound(gaps, horizon, div, kind);
    return json{{"theorem", r.value},
                {"leading_term", r.leading},
                {"sum_terms", r.sum_terms},
                {"gap_term", r.gap_sum},
                {"corollary_delta", alt},
                {"corollary_simple", ducb::corollary_simple_bound(gaps, horizon, div, kind)},
                {"min", std::min(r.value, alt)},
                {"divergence", div}};
  };
  json out;
  out["N"] = gaps.size();
  out["T"] = horizon;
  out["lambda"] = ducb::lambda_mu(gaps);
  out["lambda_form"] = "1 + sum";
  out["instance_term_ducb"] = ducb::instance_term_ducb(gaps);
  out["instance_term_ucb1"] = ducb::instance_term_ucb1(gaps);
  out["clipped"] = report(BoundKind::Clipped, m);
  out["median_of_means"] = report(BoundKind::MedianOfMeans, sigma);
  out["shape_only"] = true;
  out["universal_constant"] = 1.0;
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_lambda(const Common& c, std::size_t n, double delta2, std::size_t reps) {
  const std::size_t r = c.reps > 0 ? c.reps : reps;
  const ducb::LambdaCheck chk = ducb::lambda_expectation_check(n, delta2, r, c.seed);
  json out{{"N", n}, {"delta2", delta2}, {"replications", r}, {"seed", c.seed},
           {"mean_lambda", chk.mean}, {"ceiling", chk.ceiling}, {"within", chk.mean <= chk.ceiling}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_divergence(const Common& c, bool empirical, std::size_t samples, std::size_t groups) {
  const ducb::ExpertFile file = ducb::load_expert_file(c.config);
  Eigen::VectorXd probs;
  if (file.context_probs) {
    probs = *file.context_probs;
  } else {
    const ducb::TabularExpert* t = file.experts.front().tabular();
    if (t == nullptr) throw ducb::ConfigError("softmax experts need a 'contexts' distribution");
    probs = Eigen::VectorXd::Constant(t->probs.rows(), 1.0 / static_cast<double>(t->probs.rows()));
  }
  ducb::DivergenceMatrix d;
  if (empirical) {
    const Eigen::Index c_count = probs.size();
    const ducb::TabularEnvironment env(probs, Eigen::MatrixXd::Zero(c_count, 1), c.seed);
    ducb::TabularEnvironment draw = env;
    std::vector<ducb::Context> contexts;
    contexts.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) contexts.push_back(*draw.next_context());
    d = ducb::empirical_divergences(file.experts, contexts, groups);
  } else {
    d = ducb::exact_divergences(file.experts, probs);
  }
  std::cout << ducb::divergence_to_json(d).dump(2) << '\n';
  return 0;
}

int cmd_instance_terms(const Common& c, const std::vector<std::size_t>& sizes, double delta2,
                       std::size_t profiles) {
  const auto points = ducb::instance_term_sweep(sizes, delta2, profiles, c.seed);
  std::cout << "n,instance_term_ducb,instance_term_ucb1,ratio\n";
  for (const auto& p : points)
    std::cout << p.n << ',' << ducb::format_double(p.ducb) << ',' << ducb::format_double(p.ucb1)
              << ',' << ducb::format_double(p.ratio) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"D-UCB contextual bandits with stochastic experts"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", c.config, "input file (run config, gap profile or expert file)");
    if (config_required) opt->required();
    sub->add_option("--seed", c.seed, "seed (u64)")->each([&](const std::string&) { c.seed_set = true; });
    sub->add_option("--reps", c.reps, "replications");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--policy", c.policies, "policy names")->delimiter(',');
    sub->add_flag("--quiet", c.quiet, "no progress output");
  };

  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  add_common(run, true);

  double horizon = 0, m = 0, sigma = 0;
  auto* bounds = app.add_subcommand("bounds", "evaluate regret bound shapes for a gap profile");
  add_common(bounds, true);
  bounds->add_option("--horizon", horizon, "T");
  bounds->add_option("--m", m, "max log-divergence M");
  bounds->add_option("--sigma", sigma, "max chi-square term sigma");

  std::size_t lam_n = 100, lam_reps = 5000;
  double lam_delta2 = 0.05;
  auto* lambda = app.add_subcommand("lambda-mc", "Monte Carlo mean of lambda under uniform gaps");
  add_common(lambda, false);
  lambda->add_option("--n", lam_n, "number of experts");
  lambda->add_option("--delta2", lam_delta2, "smallest nonzero gap");
  lambda->add_option("--samples", lam_reps, "profiles (overridden by --reps)");

  bool empirical = false;
  std::size_t div_samples = 100000, div_groups = 5;
  auto* divergence = app.add_subcommand("divergence", "divergence matrices for an expert file");
  add_common(divergence, true);
  divergence->add_flag("--empirical", empirical, "estimate from sampled contexts");
  divergence->add_option("--samples", div_samples, "contexts to sample");
  divergence->add_option("--groups", div_groups, "median-of-means groups");

  std::vector<std::size_t> sizes{10, 20, 40, 80, 160, 320};
  double it_delta2 = 0.05;
  std::size_t profiles = 200;
  auto* terms = app.add_subcommand("instance-terms", "sweep both instance terms over N");
  add_common(terms, false);
  terms->add_option("--sizes", sizes, "values of N")->delimiter(',');
  terms->add_option("--delta2", it_delta2, "smallest nonzero gap");
  terms->add_option("--profiles", profiles, "profiles per N");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(c);
    if (*bounds) return cmd_bounds(c, horizon, m, sigma);
    if (*lambda) return cmd_lambda(c, lam_n, lam_delta2, lam_reps);
    if (*divergence) return cmd_divergence(c, empirical, div_samples, div_groups);
    if (*terms) return cmd_instance_terms(c, sizes, it_delta2, profiles);
  } catch (const ducb::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ducb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ducb::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}

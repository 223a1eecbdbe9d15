#include "ducb/policies.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "ducb/error.hpp"

namespace ducb {

std::size_t argmax_index(std::span<const double> values) {
  if (values.empty()) throw InputError("argmax_index: empty input");
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[best]) best = k;
  return best;
}

namespace {

std::vector<double> ucb_values(const std::vector<ExpertIndex>& idx) {
  std::vector<double> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = idx[k].ucb;
  return out;
}

void check_pool(const std::vector<Expert>& pool) {
  if (pool.empty()) throw InputError("policy: expert pool is empty");
  const std::size_t k = pool.front().num_arms();
  for (const Expert& e : pool)
    if (e.num_arms() != k) throw InputError("policy: experts disagree on the number of arms");
}

void record_reward(std::vector<std::size_t>& pulls, std::vector<double>& sums, const Sample& s) {
  if (s.expert >= pulls.size()) throw InputError("policy: sample from unknown expert");
  ++pulls[s.expert];
  sums[s.expert] += s.reward;
}

}  // namespace

// ---------------------------------------------------------------------------
// D-UCB
// ---------------------------------------------------------------------------

DUcbPolicy::DUcbPolicy(std::vector<Expert> pool, const DivergenceMatrix& divergences,
                       const EstimatorConfig& estimator, std::uint64_t seed,
                       std::size_t update_every)
    : pool_(std::move(pool)),
      estimator_(estimator),
      engine_(make_engine(estimator)),
      pulls_(pool_.size(), 0),
      update_every_(update_every == 0 ? 1 : update_every),
      rng_(seed, Stream::Policy) {
  check_pool(pool_);
  if (divergences.size() != pool_.size())
    throw InputError("D-UCB: divergence matrix size != pool size");
  for (const Expert& e : pool_) engine_->add_expert(e, log_);
  engine_->set_divergences(divergences);
}

std::string DUcbPolicy::name() const { return "ducb-" + to_string(estimator_.kind); }

Choice DUcbPolicy::init_step() {
  Choice c;
  c.expert = rng_.index(pool_.size());
  c.explored = true;
  return c;
}

Choice DUcbPolicy::ducb_step(std::size_t /*t*/) {
  if (cached_.empty() || rounds_since_update_ >= update_every_) {
    cached_ = ucb_values(engine_->indices());
    rounds_since_update_ = 0;
  }
  ++rounds_since_update_;
  Choice c;
  c.indices = cached_;
  c.expert = argmax_index(cached_);
  return c;
}

Choice DUcbPolicy::choose(std::size_t t, const Context& /*context*/) {
  return t <= 1 ? init_step() : ducb_step(t);
}

void DUcbPolicy::observe(const Sample& sample) {
  if (sample.expert >= pool_.size()) throw InputError("D-UCB: sample from unknown expert");
  log_.append(sample);
  engine_->observe(sample, pool_);
  ++pulls_[sample.expert];
}

// ---------------------------------------------------------------------------
// Batched D-UCB
// ---------------------------------------------------------------------------

std::vector<std::size_t> batch_schedule(std::size_t num_arms, std::size_t horizon,
                                        double multiplier) {
  std::vector<std::size_t> out;
  std::size_t t = 3 * num_arms + 1;
  while (t <= horizon) {
    out.push_back(t);
    const auto len = static_cast<std::size_t>(std::ceil(multiplier * std::sqrt(static_cast<double>(t))));
    t += len == 0 ? 1 : len;
  }
  return out;
}

BatchedDUcbPolicy::BatchedDUcbPolicy(std::size_t num_arms, std::size_t feature_dim,
                                     const EstimatorConfig& estimator,
                                     const BatchedConfig& batch, std::uint64_t seed)
    : num_arms_(num_arms),
      dim_(feature_dim),
      estimator_(estimator),
      batch_(batch),
      seed_(seed),
      engine_(make_engine(estimator)),
      divergences_(batch.divergence_groups),
      next_boundary_(3 * num_arms + 1) {
  if (num_arms == 0 || feature_dim == 0) throw InputError("batched D-UCB: empty arm or feature space");
  if (!(batch.batch_length_multiplier > 0.0))
    throw InputError("batched D-UCB: batch length multiplier must be positive");
  Expert first = SoftmaxExpert::uniform(num_arms, feature_dim);
  pool_.push_back(first);
  engine_->add_expert(first, log_);
  divergences_.add_expert(first);
}

std::string BatchedDUcbPolicy::name() const { return "batched-" + to_string(estimator_.kind); }

void BatchedDUcbPolicy::refresh(std::size_t t) {
  boundaries_.push_back(t);
  const std::size_t room = batch_.max_pool > pool_.size() ? batch_.max_pool - pool_.size() : 0;
  const std::size_t count = std::min(room, batch_.experts_per_batch);
  if (count > 0) {
    const std::uint64_t s = batch_seed(seed_, boundaries_.size() - 1);
    std::vector<SoftmaxExpert> fresh =
        spawn_batch_experts(log_, count, s, num_arms_, dim_, batch_.oracle, &fallback_);
    for (SoftmaxExpert& e : fresh) {
      Expert ex(std::move(e));
      engine_->add_expert(ex, log_);
      divergences_.add_expert(ex);
      pool_.push_back(std::move(ex));
    }
  }
  engine_->set_divergences(divergences_.estimate());
}

void BatchedDUcbPolicy::begin_round(std::size_t t) {
  if (t < next_boundary_) return;
  refresh(t);
  const auto len = static_cast<std::size_t>(
      std::ceil(batch_.batch_length_multiplier * std::sqrt(static_cast<double>(t))));
  next_boundary_ = t + (len == 0 ? 1 : len);
}

Choice BatchedDUcbPolicy::choose(std::size_t t, const Context& /*context*/) {
  Choice c;
  if (t <= warm_start_rounds() || pool_.size() == 1) {
    c.expert = 0;
    c.explored = true;
    return c;
  }
  c.indices = ucb_values(engine_->indices());
  c.expert = argmax_index(c.indices);
  return c;
}

void BatchedDUcbPolicy::observe(const Sample& sample) {
  if (sample.expert >= pool_.size()) throw InputError("batched D-UCB: sample from unknown expert");
  if (static_cast<std::size_t>(sample.context.features.size()) != dim_)
    throw InputError("batched D-UCB: context feature size mismatch");
  log_.append(sample);
  engine_->observe(sample, pool_);
  divergences_.add_context(sample.context);
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

Ucb1Policy::Ucb1Policy(std::vector<Expert> pool)
    : pool_(std::move(pool)), pulls_(pool_.size(), 0), sums_(pool_.size(), 0.0) {
  check_pool(pool_);
}

std::vector<double> Ucb1Policy::indices(std::size_t t) const {
  std::vector<double> out(pool_.size(), std::numeric_limits<double>::infinity());
  const double log_t = std::log(static_cast<double>(t));
  for (std::size_t k = 0; k < pool_.size(); ++k) {
    if (pulls_[k] == 0) continue;
    const double n = static_cast<double>(pulls_[k]);
    out[k] = sums_[k] / n + std::sqrt(2.0 * log_t / n);
  }
  return out;
}

Choice Ucb1Policy::choose(std::size_t t, const Context& /*context*/) {
  Choice c;
  c.indices = indices(t);
  c.expert = argmax_index(c.indices);
  return c;
}

void Ucb1Policy::observe(const Sample& sample) { record_reward(pulls_, sums_, sample); }

EpsilonGreedyPolicy::EpsilonGreedyPolicy(std::vector<Expert> pool, double epsilon,
                                         std::uint64_t seed)
    : pool_(std::move(pool)),
      epsilon_(epsilon),
      pulls_(pool_.size(), 0),
      sums_(pool_.size(), 0.0),
      rng_(seed, Stream::Policy) {
  check_pool(pool_);
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InputError("epsilon-greedy: epsilon outside [0, 1]");
}

Choice EpsilonGreedyPolicy::choose(std::size_t /*t*/, const Context& /*context*/) {
  Choice c;
  c.indices.assign(pool_.size(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < pool_.size(); ++k)
    if (pulls_[k] > 0) c.indices[k] = sums_[k] / static_cast<double>(pulls_[k]);
  if (rng_.bernoulli(epsilon_)) {
    c.expert = rng_.index(pool_.size());
    c.explored = true;
  } else {
    c.expert = argmax_index(c.indices);
  }
  return c;
}

void EpsilonGreedyPolicy::observe(const Sample& sample) { record_reward(pulls_, sums_, sample); }

FirstPolicy::FirstPolicy(std::vector<Expert> pool, std::size_t explore_rounds, std::uint64_t seed)
    : pool_(std::move(pool)),
      explore_rounds_(explore_rounds),
      pulls_(pool_.size(), 0),
      sums_(pool_.size(), 0.0),
      rng_(seed, Stream::Policy) {
  check_pool(pool_);
}

std::vector<double> FirstPolicy::means() const {
  std::vector<double> out(pool_.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < pool_.size(); ++k)
    if (pulls_[k] > 0) out[k] = sums_[k] / static_cast<double>(pulls_[k]);
  return out;
}

Choice FirstPolicy::choose(std::size_t t, const Context& /*context*/) {
  Choice c;
  c.indices = means();
  if (t <= explore_rounds_) {
    c.expert = rng_.index(pool_.size());
    c.explored = true;
    return c;
  }
  if (!committed_) {
    committed_ = argmax_index(c.indices);
    commit_means_ = c.indices;
  }
  c.indices = commit_means_;
  c.expert = *committed_;
  return c;
}

void FirstPolicy::observe(const Sample& sample) { record_reward(pulls_, sums_, sample); }

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

double EpisodeTrace::cumulative_regret(std::size_t t) const {
  double total = 0.0;
  for (std::size_t i = 0; i < rounds.size() && i < t; ++i) total += rounds[i].regret;
  return total;
}

EpisodeTrace run_episode(Environment& env, Policy& policy, std::size_t horizon, std::uint64_t seed,
                         std::span<const double> true_means, bool keep_indices) {
  if (!true_means.empty() && true_means.size() != policy.num_experts())
    throw InputError("run_episode: true means size != pool size");
  double best = -std::numeric_limits<double>::infinity();
  for (double m : true_means) best = std::max(best, m);

  const auto start = std::chrono::steady_clock::now();
  EpisodeTrace trace;
  trace.policy = policy.name();
  trace.seed = seed;
  trace.rounds.reserve(horizon);
  Rng arm_rng(seed, Stream::Arm);

  for (std::size_t t = 1; t <= horizon; ++t) {
    std::optional<Context> ctx = env.next_context();
    if (!ctx) break;
    policy.begin_round(t);
    Choice choice = policy.choose(t, *ctx);
    const Expert& expert = policy.expert(choice.expert);
    const ArmDraw draw = sample_arm(expert, *ctx, arm_rng);
    const double reward = env.reward(*ctx, draw.arm);

    RoundRecord rec;
    rec.t = t;
    rec.expert = choice.expert;
    rec.arm = draw.arm;
    rec.reward = reward;
    rec.explored = choice.explored;
    rec.pool_size = policy.num_experts();
    rec.regret = true_means.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : best - true_means[choice.expert];
    if (keep_indices) rec.indices = std::move(choice.indices);

    Sample s;
    s.round = t;
    s.expert = choice.expert;
    s.context = std::move(*ctx);
    s.arm = draw.arm;
    s.reward = reward;
    s.behavior_prob = draw.prob;
    policy.observe(s);
    trace.rounds.push_back(std::move(rec));
  }

  trace.pulls.assign(policy.num_experts(), 0);
  for (const RoundRecord& r : trace.rounds) ++trace.pulls[r.expert];
  trace.training_fallback = policy.training_fallback();
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace ducb

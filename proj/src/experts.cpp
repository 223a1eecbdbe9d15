#include "ducb/experts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ducb/error.hpp"

namespace ducb {

namespace {

constexpr double kRowSumTol = 1e-12;

// Hyperparameter variants cycled across the experts of one batch.
struct Variant {
  double lr_scale;
  double l2;
};
constexpr Variant kVariants[] = {{1.0, 0.0}, {3.0, 1e-4}, {10.0, 1e-3}, {0.5, 0.0}};

bool lexicographic_less(const TrainingExample& a, const TrainingExample& b) {
  if (a.arm != b.arm) return a.arm < b.arm;
  const Eigen::Index n = std::min(a.features.size(), b.features.size());
  for (Eigen::Index i = 0; i < n; ++i)
    if (a.features(i) != b.features(i)) return a.features(i) < b.features(i);
  return a.features.size() < b.features.size();
}

bool same_point(const TrainingExample& a, const TrainingExample& b) {
  return a.arm == b.arm && a.features.size() == b.features.size() && a.features == b.features;
}

Eigen::VectorXd softmax_scores(const SoftmaxExpert& e, const Eigen::VectorXd& x) {
  Eigen::VectorXd z = (e.weights * x + e.bias) / e.temperature;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

}  // namespace

TabularExpert::TabularExpert(Eigen::MatrixXd table) : probs(std::move(table)) {
  if (probs.rows() == 0 || probs.cols() == 0) throw InputError("tabular expert: empty table");
  if (!probs.allFinite() || (probs.array() < 0.0).any())
    throw InputError("tabular expert: negative or non-finite probability");
  for (Eigen::Index r = 0; r < probs.rows(); ++r)
    if (std::abs(probs.row(r).sum() - 1.0) > kRowSumTol)
      throw InputError("tabular expert: row " + std::to_string(r) + " does not sum to 1");
}

SoftmaxExpert::SoftmaxExpert(Eigen::MatrixXd w, Eigen::VectorXd b, double temp, double prob_floor)
    : weights(std::move(w)), bias(std::move(b)), temperature(temp), floor(prob_floor) {
  if (weights.rows() == 0) throw InputError("softmax expert: no arms");
  if (bias.size() != weights.rows()) throw InputError("softmax expert: bias size != arm count");
  if (!(temperature > 0.0)) throw InputError("softmax expert: temperature must be positive");
  if (floor < 0.0 || floor * static_cast<double>(weights.rows()) >= 1.0)
    throw InputError("softmax expert: probability floor must satisfy 0 <= K*floor < 1");
  if (!weights.allFinite() || !bias.allFinite())
    throw InputError("softmax expert: non-finite parameters");
}

SoftmaxExpert SoftmaxExpert::uniform(std::size_t num_arms, std::size_t dim) {
  return SoftmaxExpert(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_arms),
                                             static_cast<Eigen::Index>(dim)),
                       Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_arms)));
}

std::size_t Expert::num_arms() const {
  return std::visit(
      [](const auto& e) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(e)>, TabularExpert>)
          return static_cast<std::size_t>(e.probs.cols());
        else
          return static_cast<std::size_t>(e.weights.rows());
      },
      impl_);
}

Eigen::VectorXd Expert::evaluate(const Context& context) const {
  if (const auto* t = tabular()) {
    if (context.id >= static_cast<std::size_t>(t->probs.rows()))
      throw InputError("tabular expert: context id out of range");
    return t->probs.row(static_cast<Eigen::Index>(context.id)).transpose();
  }
  const auto& s = *softmax();
  if (context.features.size() != s.weights.cols())
    throw InputError("softmax expert: feature dimension mismatch");
  const double k = static_cast<double>(s.weights.rows());
  return (1.0 - k * s.floor) * softmax_scores(s, context.features).array() + s.floor;
}

double Expert::prob(const Context& context, std::size_t arm) const {
  if (arm >= num_arms()) throw InputError("expert: arm out of range");
  if (const auto* t = tabular()) {
    if (context.id >= static_cast<std::size_t>(t->probs.rows()))
      throw InputError("tabular expert: context id out of range");
    return t->probs(static_cast<Eigen::Index>(context.id), static_cast<Eigen::Index>(arm));
  }
  return evaluate(context)(static_cast<Eigen::Index>(arm));
}

ArmDraw sample_arm(const Expert& expert, const Context& context, Rng& rng) {
  const Eigen::VectorXd p = expert.evaluate(context);
  const auto arm = rng.categorical(p);
  return {static_cast<std::size_t>(arm), p(arm)};
}

Eigen::MatrixXd conditional_table(const Expert& expert, std::size_t num_contexts) {
  Eigen::MatrixXd table(static_cast<Eigen::Index>(num_contexts),
                        static_cast<Eigen::Index>(expert.num_arms()));
  Context ctx;
  for (std::size_t c = 0; c < num_contexts; ++c) {
    ctx.id = c;
    ctx.features = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(num_contexts),
                                         static_cast<Eigen::Index>(c));
    table.row(static_cast<Eigen::Index>(c)) = expert.evaluate(ctx).transpose();
  }
  return table;
}

double true_expert_mean(const TabularEnvironment& env, const Expert& expert) {
  if (expert.num_arms() != env.num_arms()) throw InputError("true_expert_mean: arm count mismatch");
  if (const auto* t = expert.tabular()) return true_expert_mean(env, t->probs);
  return true_expert_mean(env, conditional_table(expert, env.num_contexts()));
}

double make_importance_weight(double reward, double behavior_prob, double cap) {
  if (!(behavior_prob > 0.0)) throw InputError("importance weight: behavior probability must be > 0");
  return std::min(reward / behavior_prob, cap);
}

TrainResult train_oracle(std::span<const TrainingExample> examples, std::size_t num_arms,
                         std::size_t dim, const TrainerConfig& config, std::uint64_t seed) {
  if (num_arms == 0) throw InputError("train_oracle: num_arms must be positive");
  if (config.batch_size == 0 || config.epochs < 0)
    throw InputError("train_oracle: invalid trainer configuration");

  std::vector<TrainingExample> data;
  data.reserve(examples.size());
  for (const auto& ex : examples) {
    if (!(ex.weight >= 0.0) || !std::isfinite(ex.weight))
      throw InputError("train_oracle: weights must be finite and nonnegative");
    if (ex.arm >= num_arms) throw InputError("train_oracle: arm out of range");
    if (ex.features.size() != static_cast<Eigen::Index>(dim))
      throw InputError("train_oracle: feature dimension mismatch");
    if (ex.weight > 0.0) data.push_back(ex);
  }

  TrainResult result{SoftmaxExpert::uniform(num_arms, dim), data.empty()};
  if (data.empty()) return result;

  std::sort(data.begin(), data.end(), lexicographic_less);
  std::size_t out = 0;
  for (std::size_t i = 1; i < data.size(); ++i) {
    if (same_point(data[out], data[i]))
      data[out].weight += data[i].weight;
    else
      data[++out] = std::move(data[i]);
  }
  data.resize(out + 1);

  const auto k = static_cast<Eigen::Index>(num_arms);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(dim));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd grad_w(w.rows(), w.cols());
  Eigen::VectorXd grad_b(k);

  Rng rng(seed, Stream::Training);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double inv_temp = 1.0 / config.temperature;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const double lr = config.learning_rate / std::sqrt(static_cast<double>(epoch));

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      grad_w.setZero();
      grad_b.setZero();
      double weight_sum = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = data[order[i]];
        Eigen::VectorXd z = (w * ex.features + b) * inv_temp;
        z.array() -= z.maxCoeff();
        Eigen::VectorXd p = z.array().exp();
        p /= p.sum();
        p(static_cast<Eigen::Index>(ex.arm)) -= 1.0;
        // d/dz of weighted cross-entropy is weight * (p - e_arm).
        grad_w.noalias() += (ex.weight * inv_temp) * p * ex.features.transpose();
        grad_b += (ex.weight * inv_temp) * p;
        weight_sum += ex.weight;
      }
      // Self-normalized minibatch step: the batch gradient is a weighted mean,
      // so a single large importance weight cannot blow up the step size.
      const double step = lr / weight_sum;
      w -= step * grad_w + lr * config.l2 * w;
      b -= step * grad_b;
    }
  }

  result.expert = SoftmaxExpert(std::move(w), std::move(b), config.temperature);
  return result;
}

std::vector<TrainingExample> training_set(const SampleLog& log, double weight_cap) {
  std::vector<TrainingExample> out;
  out.reserve(log.size());
  for (const auto& s : log.samples())
    out.push_back({s.context.features, s.arm,
                   make_importance_weight(s.reward, s.behavior_prob, weight_cap)});
  return out;
}

std::vector<SoftmaxExpert> spawn_batch_experts(const SampleLog& log, std::size_t count,
                                               std::uint64_t seed, std::size_t num_arms,
                                               std::size_t dim, const BatchExpertConfig& config,
                                               bool* fallback) {
  std::vector<SoftmaxExpert> experts;
  experts.reserve(count);
  if (log.empty()) {
    for (std::size_t i = 0; i < count; ++i) experts.push_back(SoftmaxExpert::uniform(num_arms, dim));
    return experts;
  }

  const auto full = training_set(log, config.weight_cap);
  const auto resample_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.bootstrap_fraction *
                                               static_cast<double>(full.size()))));
  std::vector<TrainingExample> boot;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t expert_seed = derive_seed(seed, i);
    Rng rng(expert_seed, Stream::Shuffle);
    boot.clear();
    for (std::size_t s = 0; s < resample_size; ++s) boot.push_back(full[rng.index(full.size())]);

    const Variant& v = kVariants[i % std::size(kVariants)];
    TrainerConfig cfg = config.base;
    cfg.learning_rate *= v.lr_scale;
    cfg.l2 = v.l2;
    TrainResult trained = train_oracle(boot, num_arms, dim, cfg, expert_seed);
    if (trained.fallback_uniform && fallback != nullptr) *fallback = true;
    experts.push_back(std::move(trained.expert));
  }
  return experts;
}

std::uint64_t batch_seed(std::uint64_t run_seed, std::size_t batch_index) {
  return derive_seed(run_seed, 0x0ba7c4ULL + batch_index);
}

}  // namespace ducb

#include "ragtune/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "json.hpp"
#include "ragtune/error.hpp"
#include "ragtune/rng.hpp"

namespace ragtune {

using json = nlohmann::json;

std::string_view to_string(Optimizer opt) noexcept { return opt == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::Adam;
  if (name == "sgd") return Optimizer::Sgd;
  throw Error(Errc::InvalidArgument, std::string(name), "unknown optimizer");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(Errc::InvalidArgument, "epochs", "must be >= 1");
  if (!(tau > 0.0)) throw Error(Errc::InvalidArgument, "tau", "must be > 0");
  if (!(learning_rate >= 0.0)) throw Error(Errc::InvalidArgument, "learning_rate", "must be >= 0");
  if (batch_size < 1) throw Error(Errc::InvalidArgument, "batch_size", "must be >= 1");
  if (use_inbatch_negatives && batch_size < 2)
    throw Error(Errc::InvalidArgument, "batch_size", "must be >= 2 with in-batch negatives");
}

std::vector<ResolvedTriple> resolve_triples(const TripleSet& tripleset, const Corpus& corpus) {
  std::vector<ResolvedTriple> out;
  out.reserve(tripleset.triples.size());
  for (const auto& t : tripleset.triples) {
    ResolvedTriple r;
    r.query = t.query_text;
    r.positive = {t.positive_answer_id, corpus.at(t.positive_answer_id).answer};
    for (const auto& id : t.negative_answer_ids) r.negatives.push_back({id, corpus.at(id).answer});
    out.push_back(std::move(r));
  }
  return out;
}

double SparseGradient::at(std::uint32_t row, std::uint32_t feature) const {
  auto it = std::lower_bound(features.begin(), features.end(), feature);
  if (it == features.end() || *it != feature) return 0.0;
  return values[static_cast<std::size_t>(it - features.begin()) * emb_dim + row];
}

double SparseGradient::norm() const {
  double s = 0.0;
  for (double x : values) s += x * x;
  return std::sqrt(s);
}

SparseGradient& SparseGradient::operator*=(double c) {
  for (double& x : values) x *= c;
  return *this;
}

namespace {

/// Feature lookup that can be backed by a precomputed cache during training.
class FeatureSource {
 public:
  explicit FeatureSource(const EmbeddingModel& model,
                         const std::unordered_map<std::string, FeatureVector>* cache = nullptr)
      : model_(model), cache_(cache) {}

  const FeatureVector& get(const std::string& text) {
    if (cache_) {
      if (auto it = cache_->find(text); it != cache_->end()) return it->second;
    }
    auto [it, inserted] = local_.try_emplace(text);
    if (inserted) it->second = featurize(text, model_);
    return it->second;
  }

 private:
  const EmbeddingModel& model_;
  const std::unordered_map<std::string, FeatureVector>* cache_;
  std::unordered_map<std::string, FeatureVector> local_;
};

/// Adds `delta` to projection(row, feature) for the forward pass only.
struct Perturbation {
  std::uint32_t row;
  std::uint32_t feature;
  double delta;
};

struct TextState {
  const FeatureVector* features = nullptr;
  std::vector<double> unit;  // normalized embedding
  double norm = 0.0;         // norm before normalization
  std::vector<double> grad;  // d loss / d unit
};

double loss_impl(const EmbeddingModel& model, std::span<const ResolvedTriple> batch_in,
                 const LossOptions& options, FeatureSource& source, SparseGradient* gradient,
                 const std::optional<Perturbation>& perturb) {
  if (batch_in.empty()) throw Error(Errc::InvalidArgument, "batch", "empty batch");
  if (!(options.tau > 0.0)) throw Error(Errc::InvalidArgument, "tau", "must be > 0");

  std::vector<ResolvedTriple> batch(batch_in.begin(), batch_in.end());
  std::sort(batch.begin(), batch.end());

  // Distinct texts in sorted order; every reduction below walks them in this order.
  std::map<std::string, std::size_t> text_ids;
  for (const auto& t : batch) {
    text_ids.emplace(t.query, 0);
    text_ids.emplace(t.positive.text, 0);
    for (const auto& n : t.negatives) text_ids.emplace(n.text, 0);
  }
  std::vector<TextState> texts(text_ids.size());
  const std::size_t dim = model.emb_dim();
  {
    std::size_t k = 0;
    for (auto& [text, id] : text_ids) {
      id = k;
      auto& st = texts[k++];
      st.features = &source.get(text);
      st.unit = project(model, *st.features);
      if (perturb) {
        const auto& f = *st.features;
        auto it = std::lower_bound(f.indices.begin(), f.indices.end(), perturb->feature);
        if (it != f.indices.end() && *it == perturb->feature)
          st.unit[perturb->row] += f.weights[static_cast<std::size_t>(it - f.indices.begin())] * perturb->delta;
      }
      double n2 = 0.0;
      for (double x : st.unit) n2 += x * x;
      if (n2 == 0.0) throw Error(Errc::DegenerateText, text, "zero-vector embedding");
      st.norm = std::sqrt(n2);
      for (double& x : st.unit) x /= st.norm;
      if (gradient) st.grad.assign(dim, 0.0);
    }
  }

  auto dot = [dim](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t r = 0; r < dim; ++r) s += a[r] * b[r];
    return s;
  };

  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<std::size_t> candidates;
  std::vector<double> logits;
  std::vector<std::string> used_ids;
  for (const auto& t : batch) {
    const std::size_t q = text_ids.at(t.query);
    candidates.clear();
    used_ids.clear();
    candidates.push_back(text_ids.at(t.positive.text));
    used_ids.push_back(t.positive.id);
    auto add = [&](const AnswerRef& a) {
      if (std::find(used_ids.begin(), used_ids.end(), a.id) != used_ids.end()) return;
      used_ids.push_back(a.id);
      candidates.push_back(text_ids.at(a.text));
    };
    for (const auto& neg : t.negatives) add(neg);
    if (options.use_inbatch_negatives)
      for (const auto& other : batch) add(other.positive);

    logits.resize(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c)
      logits[c] = dot(texts[q].unit, texts[candidates[c]].unit) / options.tau;

    // -log softmax of the positive, written so that it stays > 0 whenever a
    // negative exists.
    double shift = 0.0;
    for (std::size_t c = 1; c < candidates.size(); ++c) shift = std::max(shift, logits[c] - logits[0]);
    double rest = 0.0;
    for (std::size_t c = 1; c < candidates.size(); ++c) rest += std::exp(logits[c] - logits[0] - shift);
    const double item_loss = shift > 0.0 ? shift + std::log(std::exp(-shift) + rest) : std::log1p(rest);
    total += item_loss;

    if (!gradient) continue;
    const double lse = logits[0] + item_loss;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const double p = std::exp(logits[c] - lse);
      const double g = (p - (c == 0 ? 1.0 : 0.0)) / (options.tau * n);
      if (g == 0.0) continue;
      auto& gq = texts[q].grad;
      auto& gc = texts[candidates[c]].grad;
      const auto& eq = texts[q].unit;
      const auto& ec = texts[candidates[c]].unit;
      for (std::size_t r = 0; r < dim; ++r) {
        gq[r] += g * ec[r];
        gc[r] += g * eq[r];
      }
    }
  }

  if (gradient) {
    // Back through e = u / |u|, then u = P x.
    std::map<std::uint32_t, std::vector<double>> columns;
    std::vector<double> du(dim);
    for (auto& st : texts) {
      const double proj = dot(st.unit, st.grad);
      for (std::size_t r = 0; r < dim; ++r) du[r] = (st.grad[r] - st.unit[r] * proj) / st.norm;
      const auto& f = *st.features;
      for (std::size_t k = 0; k < f.size(); ++k) {
        auto& col = columns[f.indices[k]];
        if (col.empty()) col.assign(dim, 0.0);
        const double w = f.weights[k];
        for (std::size_t r = 0; r < dim; ++r) col[r] += w * du[r];
      }
    }
    gradient->emb_dim = static_cast<std::uint32_t>(dim);
    gradient->features.clear();
    gradient->values.clear();
    gradient->features.reserve(columns.size());
    gradient->values.reserve(columns.size() * dim);
    for (const auto& [feature, col] : columns) {
      gradient->features.push_back(feature);
      gradient->values.insert(gradient->values.end(), col.begin(), col.end());
    }
  }
  return total / n;
}

std::vector<std::uint32_t> touched_features(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                                            FeatureSource& source) {
  std::vector<std::uint32_t> out;
  auto take = [&](const std::string& text) {
    const auto& f = source.get(text);
    out.insert(out.end(), f.indices.begin(), f.indices.end());
  };
  for (const auto& t : batch) {
    take(t.query);
    take(t.positive.text);
    for (const auto& n : t.negatives) take(n.text);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  (void)model;
  return out;
}

}  // namespace

BatchLoss batch_loss(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                     const LossOptions& options) {
  FeatureSource source(model);
  BatchLoss out;
  out.loss = loss_impl(model, batch, options, source, &out.gradient, std::nullopt);
  return out;
}

double batch_loss_value(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                        const LossOptions& options) {
  FeatureSource source(model);
  return loss_impl(model, batch, options, source, nullptr, std::nullopt);
}

double compare_gradient(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                        const SparseGradient& analytic, const GradientCheckOptions& options) {
  if (!(options.eps > 0.0)) throw Error(Errc::InvalidArgument, "eps", "must be > 0");
  FeatureSource source(model);
  const auto features = touched_features(model, batch, source);
  const std::size_t dim = model.emb_dim();
  const std::size_t total = features.size() * dim;
  if (total == 0) return 0.0;

  Rng rng(options.seed);
  const auto picks = rng.sample_without_replacement(total, std::min(total, options.num_coords));
  double worst = 0.0;
  for (std::size_t pick : picks) {
    const auto feature = features[pick / dim];
    const auto row = static_cast<std::uint32_t>(pick % dim);
    const double plus = loss_impl(model, batch, options.loss, source, nullptr, Perturbation{row, feature, options.eps});
    const double minus = loss_impl(model, batch, options.loss, source, nullptr, Perturbation{row, feature, -options.eps});
    const double numeric = (plus - minus) / (2.0 * options.eps);
    const double a = analytic.at(row, feature);
    worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(numeric), 1e-8));
  }
  return worst;
}

double gradient_check(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                      const GradientCheckOptions& options) {
  const auto analytic = batch_loss(model, batch, options.loss).gradient;
  return compare_gradient(model, batch, analytic, options);
}

TrainResult train(EmbeddingModel model, std::span<const ResolvedTriple> triples, const TrainConfig& config) {
  config.validate();
  if (triples.empty()) throw Error(Errc::InvalidArgument, "triples", "empty training set");
  const auto started = std::chrono::steady_clock::now();

  // Featurize every text once; a text that yields no features can never embed.
  std::unordered_map<std::string, FeatureVector> cache;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    auto check = [&](const std::string& text) {
      auto [it, inserted] = cache.try_emplace(text);
      if (inserted) it->second = featurize(text, model);
      if (it->second.empty())
        throw Error(Errc::DegenerateText, "triple " + std::to_string(i),
                    "text without features: \"" + text + "\" (query \"" + t.query + "\")");
    };
    check(t.query);
    check(t.positive.text);
    for (const auto& n : t.negatives) check(n.text);
  }
  FeatureSource source(model, &cache);

  const LossOptions loss_options{config.tau, config.use_inbatch_negatives};
  const std::size_t dim = model.emb_dim();
  struct Moments {
    std::vector<double> m, v;
  };
  std::unordered_map<std::uint32_t, Moments> moments;
  std::uint64_t step = 0;

  TrainLog log;
  log.config = config;
  log.seed = config.seed;

  std::vector<std::size_t> order(triples.size());
  std::vector<ResolvedTriple> batch;
  SparseGradient grad;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(triples[order[i]]);

      double loss;
      try {
        loss = loss_impl(model, batch, loss_options, source, &grad, std::nullopt);
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateText) throw;
        throw Error(Errc::DegenerateText, e.subject(),
                    "epoch " + std::to_string(epoch) + ", batch starting at position " + std::to_string(start));
      }
      stats.mean_loss += loss;
      stats.mean_grad_norm += grad.norm();
      ++stats.batches;
      ++step;

      const double lr = config.learning_rate;
      if (config.optimizer == Optimizer::Sgd) {
        for (std::size_t k = 0; k < grad.features.size(); ++k) {
          auto col = model.mutable_column(grad.features[k]);
          const auto g = grad.column(k);
          for (std::size_t r = 0; r < dim; ++r)
            col[r] = static_cast<float>(static_cast<double>(col[r]) - lr * g[r]);
        }
      } else {
        const auto& p = config.adam;
        const double correction1 = 1.0 - std::pow(p.beta1, static_cast<double>(step));
        const double correction2 = 1.0 - std::pow(p.beta2, static_cast<double>(step));
        for (std::size_t k = 0; k < grad.features.size(); ++k) {
          auto& mom = moments[grad.features[k]];
          if (mom.m.empty()) {
            mom.m.assign(dim, 0.0);
            mom.v.assign(dim, 0.0);
          }
          auto col = model.mutable_column(grad.features[k]);
          const auto g = grad.column(k);
          for (std::size_t r = 0; r < dim; ++r) {
            mom.m[r] = p.beta1 * mom.m[r] + (1.0 - p.beta1) * g[r];
            mom.v[r] = p.beta2 * mom.v[r] + (1.0 - p.beta2) * g[r] * g[r];
            const double update = (mom.m[r] / correction1) / (std::sqrt(mom.v[r] / correction2) + p.epsilon);
            col[r] = static_cast<float>(static_cast<double>(col[r]) - lr * update);
          }
        }
      }
    }
    stats.mean_loss /= static_cast<double>(stats.batches);
    stats.mean_grad_norm /= static_cast<double>(stats.batches);
    if (!std::isfinite(stats.mean_loss))
      throw Error(Errc::InvalidArgument, "learning_rate", "training diverged (non-finite loss)");
    log.epochs.push_back(stats);
  }

  model.seal();
  log.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(log)};
}

TrainResult train(EmbeddingModel model, const TripleSet& tripleset, const Corpus& corpus,
                  const TrainConfig& config) {
  const auto resolved = resolve_triples(tripleset, corpus);
  return train(std::move(model), resolved, config);
}

void write_train_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, path.string(), "cannot open for writing");
  const auto& c = log.config;
  json header = {{"record", "config"},
                 {"epochs", c.epochs},
                 {"batch_size", c.batch_size},
                 {"learning_rate", c.learning_rate},
                 {"tau", c.tau},
                 {"use_inbatch_negatives", c.use_inbatch_negatives},
                 {"optimizer", to_string(c.optimizer)},
                 {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
                 {"seed", log.seed}};
  out << header.dump() << '\n';
  for (const auto& e : log.epochs) {
    json rec = {{"record", "epoch"},
                {"epoch", e.epoch},
                {"mean_loss", e.mean_loss},
                {"mean_grad_norm", e.mean_grad_norm},
                {"batches", e.batches}};
    out << rec.dump() << '\n';
  }
}

}  // namespace ragtune

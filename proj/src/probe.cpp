#include "avse/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "avse/error.hpp"
#include "avse/metrics.hpp"
#include "avse/parallel.hpp"

namespace avse {

namespace {

constexpr double kStdFloor = 1e-8;
constexpr std::size_t kEmbeddingChunk = 16;

struct Problem {
  Eigen::MatrixXd x;             // [dim x n], standardized
  std::vector<int> y;            // row index into the active class list
  std::vector<int> classes;      // active viseme indices
};

struct Point {
  Eigen::MatrixXd w;  // [K x dim]
  Eigen::VectorXd b;  // [K]
};

Problem make_problem(const LogRegModel& model, std::span<const ProbeExample> data) {
  Problem p;
  for (int c = 0; c < kVisemeCount; ++c)
    if (model.active[static_cast<std::size_t>(c)]) p.classes.push_back(c);
  std::vector<int> row_of(kVisemeCount, -1);
  for (std::size_t k = 0; k < p.classes.size(); ++k) row_of[static_cast<std::size_t>(p.classes[k])] = static_cast<int>(k);
  const auto dim = model.feature_mean.size();
  p.x.resize(dim, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    p.x.col(static_cast<Eigen::Index>(i)) = model.standardize(data[i].embedding);
    p.y.push_back(row_of[static_cast<std::size_t>(data[i].viseme)]);
  }
  return p;
}

// Softmax probabilities [K x n]; returns the mean cross-entropy over examples
// whose class is active.
double softmax_loss(const Point& pt, const Problem& p, Eigen::MatrixXd* probs) {
  Eigen::MatrixXd z = pt.w * p.x;
  z.colwise() += pt.b;
  double loss = 0.0;
  const auto n = z.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = z.col(i).maxCoeff();
    auto col = z.col(i);
    col = (col.array() - m).exp().matrix();
    const double s = col.sum();
    col /= s;
    const int yi = p.y[static_cast<std::size_t>(i)];
    if (yi >= 0) loss -= std::log(std::max(col(yi), 1e-300));
  }
  if (probs) *probs = std::move(z);
  return n ? loss / static_cast<double>(n) : 0.0;
}

double objective(const Point& pt, const Problem& p, double C, Eigen::MatrixXd* probs = nullptr) {
  return softmax_loss(pt, p, probs) + pt.w.squaredNorm() / (2.0 * C);
}

}  // namespace

Viseme majority_viseme(std::span<const Viseme> frame_labels) {
  if (frame_labels.empty()) throw Error("majority_viseme: no frame labels");
  std::array<int, kVisemeCount> count{};
  std::array<std::size_t, kVisemeCount> first{};
  first.fill(frame_labels.size());
  for (std::size_t i = 0; i < frame_labels.size(); ++i) {
    const auto v = static_cast<std::size_t>(frame_labels[i]);
    ++count[v];
    first[v] = std::min(first[v], i);
  }
  std::size_t best = 0;
  for (std::size_t v = 1; v < count.size(); ++v)
    if (count[v] > count[best] || (count[v] == count[best] && first[v] < first[best])) best = v;
  return static_cast<Viseme>(best);
}

std::vector<ProbeExample> extract_embeddings(const nn::Network& net, std::span<const AvSegment> segments) {
  if (net.config().mode != nn::Mode::AV) throw Error("probe needs an audio-visual model; this checkpoint is audio-only");
  if (net.optimizer_steps() == 0) throw Error("probe needs a trained model; this checkpoint has no optimizer steps");
  for (const auto& s : segments)
    if (s.video.size() != kSegmentVideoFrames * kVideoFrameBytes)
      throw Error("segment " + s.key() + " has no 12-frame video");
  std::vector<ProbeExample> out(segments.size());
  const std::size_t n_chunks = (segments.size() + kEmbeddingChunk - 1) / kEmbeddingChunk;
  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t lo = c * kEmbeddingChunk, hi = std::min(segments.size(), lo + kEmbeddingChunk);
    std::vector<const std::uint8_t*> videos;
    for (std::size_t i = lo; i < hi; ++i) videos.push_back(segments[i].video.data());
    const nn::Matrix emb = net.video_encoder_forward(videos, nn::Phase::Inference, nullptr);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto col = emb.col(static_cast<Eigen::Index>(i - lo));
      out[i].embedding.assign(col.data(), col.data() + col.size());
      out[i].viseme = majority_viseme(segments[i].frame_visemes);
      out[i].speaker_id = segments[i].speaker_id;
    }
  });
  return out;
}

ProbeSplit probe_split(std::span<const ProbeExample> examples, std::uint64_t seed) {
  std::set<std::string> ids;
  for (const auto& e : examples) ids.insert(e.speaker_id);
  if (ids.size() < 10)
    throw Error("probe split needs at least 10 speakers, got " + std::to_string(ids.size()));
  std::vector<SpeakerInfo> speakers;
  for (const auto& id : ids) speakers.push_back({id, Gender::F});
  SplitSpec spec;
  spec.stratify_by_gender = false;
  spec.seed = seed;
  const SpeakerSplit split = split_speakers(speakers, spec);
  ProbeSplit out;
  for (const auto& e : examples) {
    switch (split.partition_of(e.speaker_id)) {
      case Partition::Train: out.train.push_back(e); break;
      case Partition::Val: out.val.push_back(e); break;
      case Partition::Test: out.test.push_back(e); break;
    }
  }
  return out;
}

Eigen::VectorXd LogRegModel::standardize(std::span<const double> embedding) const {
  if (static_cast<Eigen::Index>(embedding.size()) != feature_mean.size())
    throw Error("embedding dimension " + std::to_string(embedding.size()) + " does not match the probe (" +
                std::to_string(feature_mean.size()) + ")");
  const Eigen::Map<const Eigen::VectorXd> e(embedding.data(), static_cast<Eigen::Index>(embedding.size()));
  return ((e - feature_mean).array() / feature_scale.array()).matrix();
}

Eigen::VectorXd LogRegModel::predict_proba(std::span<const double> embedding) const {
  Eigen::VectorXd z = weights * standardize(embedding) + biases;
  double m = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < kVisemeCount; ++c)
    if (active[static_cast<std::size_t>(c)]) m = std::max(m, z(c));
  double s = 0.0;
  for (int c = 0; c < kVisemeCount; ++c) {
    z(c) = active[static_cast<std::size_t>(c)] ? std::exp(z(c) - m) : 0.0;
    s += z(c);
  }
  return z / s;
}

Viseme LogRegModel::predict(std::span<const double> embedding) const {
  const Eigen::VectorXd p = predict_proba(embedding);
  Eigen::Index best = 0;
  p.maxCoeff(&best);
  return static_cast<Viseme>(best);
}

LogRegModel logreg_train(std::span<const ProbeExample> train, double C, const LogRegOptions& options,
                         LogRegTrace* trace) {
  if (!(C > 0.0) || !std::isfinite(C)) throw Error("logistic regression C must be positive");
  if (train.empty()) throw Error("logistic regression needs training examples");
  LogRegModel model;
  model.C = C;
  for (const auto& e : train) model.active[static_cast<std::size_t>(e.viseme)] = true;
  if (std::count(model.active.begin(), model.active.end(), true) < 2)
    throw Error("logistic regression needs at least two classes in the training data");

  const std::size_t dim = train.front().embedding.size();
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(train.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].embedding.size() != dim) throw Error("probe examples have inconsistent embedding sizes");
    raw.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXd>(train[i].embedding.data(), static_cast<Eigen::Index>(dim));
  }
  if (!raw.allFinite()) throw Error("probe embeddings contain non-finite values");
  model.feature_mean = raw.rowwise().mean();
  const Eigen::MatrixXd centred = raw.colwise() - model.feature_mean;
  model.feature_scale =
      (centred.array().square().rowwise().sum() / static_cast<double>(train.size())).sqrt().max(kStdFloor).matrix();

  const Problem p = make_problem(model, train);
  const auto K = static_cast<Eigen::Index>(p.classes.size());
  Point pt{Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(dim)), Eigen::VectorXd::Zero(K)};
  Eigen::MatrixXd probs;
  double f = objective(pt, p, C, &probs);
  if (trace) trace->assign(1, f);

  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(K, p.x.cols());
  for (Eigen::Index i = 0; i < p.x.cols(); ++i) onehot(p.y[static_cast<std::size_t>(i)], i) = 1.0;
  const double inv_n = 1.0 / static_cast<double>(p.x.cols());

  double step = 1.0;
  int it = 0;
  for (; it < options.max_iters; ++it) {
    const Eigen::MatrixXd resid = (probs - onehot) * inv_n;
    const Eigen::MatrixXd gw = resid * p.x.transpose() + pt.w / C;
    const Eigen::VectorXd gb = resid.rowwise().sum();
    const double g2 = gw.squaredNorm() + gb.squaredNorm();
    if (std::sqrt(g2) < options.tol) break;
    bool accepted = false;
    while (step > 1e-20) {
      Point cand{pt.w - step * gw, pt.b - step * gb};
      Eigen::MatrixXd cand_probs;
      const double fc = objective(cand, p, C, &cand_probs);
      if (fc <= f - 0.5 * step * g2) {
        pt = std::move(cand);
        probs = std::move(cand_probs);
        f = fc;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (trace) trace->push_back(f);
    step *= 2.0;
  }
  model.iterations = it;
  model.weights = Eigen::MatrixXd::Zero(kVisemeCount, static_cast<Eigen::Index>(dim));
  model.biases = Eigen::VectorXd::Zero(kVisemeCount);
  for (Eigen::Index k = 0; k < K; ++k) {
    model.weights.row(p.classes[static_cast<std::size_t>(k)]) = pt.w.row(k);
    model.biases(p.classes[static_cast<std::size_t>(k)]) = pt.b(k);
  }
  if (!model.weights.allFinite() || !model.biases.allFinite())
    throw Error("logistic regression diverged to non-finite parameters");
  return model;
}

double logreg_objective(const LogRegModel& model, std::span<const ProbeExample> data) {
  const Problem p = make_problem(model, data);
  Point pt;
  pt.w.resize(static_cast<Eigen::Index>(p.classes.size()), model.weights.cols());
  pt.b.resize(static_cast<Eigen::Index>(p.classes.size()));
  for (std::size_t k = 0; k < p.classes.size(); ++k) {
    pt.w.row(static_cast<Eigen::Index>(k)) = model.weights.row(p.classes[k]);
    pt.b(static_cast<Eigen::Index>(k)) = model.biases(p.classes[k]);
  }
  return objective(pt, p, model.C);
}

RecallReport recall_report(std::span<const Viseme> truth, std::span<const Viseme> predicted) {
  if (truth.size() != predicted.size()) throw Error("recall_report: truth and prediction counts differ");
  if (truth.empty()) throw Error("recall_report: empty test set");
  std::array<std::size_t, kVisemeCount> support{}, correct{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    ++support[t];
    if (truth[i] == predicted[i]) ++correct[t];
  }
  RecallReport r;
  r.total = truth.size();
  r.chance_pct = round1(kChanceRecallPct);
  double sum = 0.0;
  int present = 0;
  for (const Viseme v : kAllVisemes) {
    const auto i = static_cast<std::size_t>(v);
    RecallRow row{v, support[i], 0.0};
    if (support[i] > 0) {
      row.recall_pct = 100.0 * static_cast<double>(correct[i]) / static_cast<double>(support[i]);
      sum += row.recall_pct;
      ++present;
    }
    r.rows.push_back(row);
  }
  r.average_pct = sum / present;
  return r;
}

RecallReport recall_report(const LogRegModel& model, std::span<const ProbeExample> test) {
  std::vector<Viseme> truth, pred;
  for (const auto& e : test) {
    truth.push_back(e.viseme);
    pred.push_back(model.predict(e.embedding));
  }
  return recall_report(truth, pred);
}

double unweighted_average_recall(const LogRegModel& model, std::span<const ProbeExample> data) {
  return recall_report(model, data).average_pct;
}

TuneResult tune_C(std::span<const ProbeExample> train, std::span<const ProbeExample> val, std::span<const double> grid,
                  const LogRegOptions& options) {
  if (train.empty() || val.empty()) throw Error("tune_C needs nonempty train and validation sets");
  if (grid.empty()) throw Error("tune_C needs at least one C value");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  TuneResult best;
  bool have = false;
  for (const double C : sorted) {
    LogRegModel m = logreg_train(train, C, options);
    const double uar = unweighted_average_recall(m, val);
    best.val_uar.emplace_back(C, uar);
    if (!have || uar > best.best_val_uar) {
      best.best_C = C;
      best.best_val_uar = uar;
      best.model = std::move(m);
      have = true;
    }
  }
  return best;
}

void write_recall_csv(const std::filesystem::path& path, const RecallReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "viseme,support,recall_pct\n";
  out.setf(std::ios::fixed);
  out.precision(1);
  for (const auto& r : report.rows) out << viseme_name(r.viseme) << ',' << r.support << ',' << r.recall_pct << '\n';
  out << "average," << report.total << ',' << report.average_pct << '\n';
  out << "chance,," << report.chance_pct << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace avse

#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avse/mixer.hpp"
#include "avse/neural/network.hpp"
#include "avse/viseme.hpp"

namespace avse {

struct ProbeExample {
  std::vector<double> embedding;
  Viseme viseme = Viseme::SIL;
  std::string speaker_id;
};

// Most frequent label; ties go to the label that occurs first.
Viseme majority_viseme(std::span<const Viseme> frame_labels);

// Frozen video-encoder embeddings (inference mode) of every segment. The
// network must be an audio-visual model that has taken optimizer steps.
std::vector<ProbeExample> extract_embeddings(const nn::Network& net, std::span<const AvSegment> segments);

struct ProbeSplit {
  std::vector<ProbeExample> train;
  std::vector<ProbeExample> val;
  std::vector<ProbeExample> test;
};

// Speaker-level 80/10/10 over the distinct speakers of the examples.
ProbeSplit probe_split(std::span<const ProbeExample> examples, std::uint64_t seed);

struct LogRegModel {
  Eigen::MatrixXd weights;  // [13 x dim], standardized feature space
  Eigen::VectorXd biases;   // [13]
  double C = 1.0;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  // Classes seen in training; the others never win a prediction.
  std::array<bool, kVisemeCount> active{};
  int iterations = 0;

  Eigen::VectorXd standardize(std::span<const double> embedding) const;
  // Class probabilities over all 13 visemes (zero for inactive classes).
  Eigen::VectorXd predict_proba(std::span<const double> embedding) const;
  Viseme predict(std::span<const double> embedding) const;
};

struct LogRegOptions {
  int max_iters = 2000;
  double tol = 1e-6;
};

// Objective values after every accepted step, starting at the initial point.
using LogRegTrace = std::vector<double>;

// Mean multinomial cross-entropy over the active classes plus
// (1/(2C)) ||weights||^2, minimised by full-batch gradient descent with a
// backtracking (Armijo) line search. Features are standardized with the
// training mean and std (floored at 1e-8).
LogRegModel logreg_train(std::span<const ProbeExample> train, double C, const LogRegOptions& options = {},
                         LogRegTrace* trace = nullptr);

// The training objective of a model on a data set.
double logreg_objective(const LogRegModel& model, std::span<const ProbeExample> data);

// Mean of per-class recalls over the classes present in data, as a percentage.
double unweighted_average_recall(const LogRegModel& model, std::span<const ProbeExample> data);

struct TuneResult {
  double best_C = 0.0;
  LogRegModel model;
  std::vector<std::pair<double, double>> val_uar;  // (C, recall %) per grid point
  double best_val_uar = 0.0;
};

inline constexpr std::array<double, 5> kDefaultCGrid = {0.01, 0.1, 1.0, 10.0, 100.0};

// Highest validation UAR wins; ties go to the smaller C.
TuneResult tune_C(std::span<const ProbeExample> train, std::span<const ProbeExample> val,
                  std::span<const double> grid = kDefaultCGrid, const LogRegOptions& options = {});

struct RecallRow {
  Viseme viseme = Viseme::SIL;
  std::size_t support = 0;
  double recall_pct = 0.0;
};

struct RecallReport {
  std::vector<RecallRow> rows;  // every viseme, table order
  double average_pct = 0.0;     // over visemes with support
  double chance_pct = 0.0;      // 100/13 at one decimal
  std::size_t total = 0;
};

// Recall from (truth, prediction) pairs; the model form applies predict().
RecallReport recall_report(std::span<const Viseme> truth, std::span<const Viseme> predicted);
RecallReport recall_report(const LogRegModel& model, std::span<const ProbeExample> test);

void write_recall_csv(const std::filesystem::path& path, const RecallReport& report);

}  // namespace avse

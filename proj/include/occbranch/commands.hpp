#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "occbranch/config.hpp"
#include "occbranch/dataset.hpp"
#include "occbranch/metrics.hpp"

namespace occbranch::commands {

enum class ModelKind { hob, seg_visible, seg_whole };

inline constexpr ModelKind kAllModels[] = {ModelKind::hob, ModelKind::seg_visible, ModelKind::seg_whole};

std::string to_string(ModelKind m);
ModelKind parse_model(const std::string& s);

std::filesystem::path checkpoint_path(const RunConfig& config, ModelKind model);

/// Renders every scene, assigns regimes by the configured mix (largest
/// remainder rounding, shuffled with the scene seed) and CV groups, and writes
/// the samples plus manifest.json under the dataset directory.
io::Manifest cmd_generate(const RunConfig& config);

/// Ids of the training groups split into (train, validation) with the
/// validation seed.
std::pair<std::vector<std::string>, std::vector<std::string>> training_split(const RunConfig& config,
                                                                             const io::Manifest& manifest);

/// Trains one model on every group except cv_group. Writes the checkpoint, a
/// history JSON and the sorted ids seen in training batches. On divergence the
/// history so far is written before the exception propagates.
History cmd_train(const RunConfig& config, ModelKind model);

/// Regressor predictions for the held-out group, one target.csv per sample
/// under <report_dir>/predictions/hob_cnn.
void cmd_predict(const RunConfig& config);

/// Segmentation + curve fitting for the held-out group with one variant;
/// writes target.csv and fit.json per sample under
/// <report_dir>/predictions/<method>.
void cmd_baseline(const RunConfig& config, ModelKind variant);

struct Evaluation {
  std::vector<metrics::EvalRecord> records;
  metrics::EvalReport report;
};

/// Scores all three methods on the held-out group and writes report.json,
/// report.csv, buckets.csv, records.csv, worst.csv (timing-free), plus
/// timing.csv and timing.json. Throws IoError naming the method whose
/// checkpoint is missing.
Evaluation cmd_evaluate(const RunConfig& config);

/// Predictions drawn yellow, ground truth red on top, as 1-px polylines
/// joining consecutive valid scan lines.
RgbImage render_overlay(const RgbImage& image, const PositionTarget& gt, const std::vector<PositionTarget>& preds,
                        bool scan_columns = false);

/// Loads a sample and prediction CSVs and writes the overlay PNG.
void cmd_render(const RunConfig& config, const std::string& sample_id,
                const std::vector<std::filesystem::path>& prediction_csvs, const std::filesystem::path& out);

/// generate, train all three models, evaluate.
Evaluation cmd_all(const RunConfig& config);

}  // namespace occbranch::commands

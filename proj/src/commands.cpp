#include "occbranch/commands.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "occbranch/annotation.hpp"
#include "occbranch/checkpoint.hpp"
#include "occbranch/curvefit.hpp"
#include "occbranch/error.hpp"
#include "occbranch/regressor.hpp"
#include "occbranch/rng.hpp"
#include "occbranch/segbaseline.hpp"

namespace occbranch::commands {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kConditionOrder = {"none", "medium", "heavy"};

constexpr synth::OcclusionRegime kRegimes[3] = {synth::OcclusionRegime::none, synth::OcclusionRegime::medium,
                                                synth::OcclusionRegime::heavy};

seg::Variant variant_of(ModelKind m) {
  if (m == ModelKind::seg_visible) return seg::Variant::visible;
  if (m == ModelKind::seg_whole) return seg::Variant::whole;
  throw ConfigError("'" + to_string(m) + "' is not a segmentation model");
}

metrics::Method method_of(ModelKind m) {
  switch (m) {
    case ModelKind::hob: return metrics::Method::hob_cnn;
    case ModelKind::seg_visible: return metrics::Method::visible_cf;
    case ModelKind::seg_whole: return metrics::Method::whole_cf;
  }
  return metrics::Method::hob_cnn;
}

/// Largest-remainder split of `count` by `weights`.
std::array<int, 3> regime_counts(int count, const std::array<double, 3>& weights) {
  const double total = weights[0] + weights[1] + weights[2];
  std::array<int, 3> n{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = count * weights[i] / total;
    n[i] = static_cast<int>(std::floor(exact));
    rem[i] = exact - n[i];
    assigned += n[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int i = 0; assigned < count; ++i, ++assigned) ++n[order[i % 3]];
  return n;
}

std::string scene_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05d", i);
  return buf;
}

bool scans_columns(const RunConfig& config) { return config.scenes.kind == synth::TreeKind::horizontal_vine; }

int n_branches(const RunConfig& config) { return synth::branch_count(config.scenes.kind); }

std::vector<std::string> held_out_ids(const RunConfig& config, const io::Manifest& manifest) {
  if (config.cv_group > manifest.k) {
    throw ConfigError("cv_group " + std::to_string(config.cv_group) + " exceeds the dataset's " +
                      std::to_string(manifest.k) + " groups");
  }
  return manifest.ids_in_groups({config.cv_group});
}

fs::path predictions_dir(const RunConfig& config, metrics::Method m) {
  return config.report_dir / "predictions" / metrics::to_string(m);
}

void require_checkpoint(const RunConfig& config, ModelKind m) {
  const fs::path p = checkpoint_path(config, m);
  if (!fs::exists(p)) {
    throw IoError("missing checkpoint for method " + metrics::to_string(method_of(m)) + " (" + to_string(m) +
                  "): " + p.string());
  }
}

PositionTarget centre_prediction(int n, int width, int height) {
  PositionTarget t(n, width, height);
  for (int b = 0; b < n; ++b)
    for (int r = 0; r < height; ++r) t.set(b, r, (width - 1) / 2.0);
  return t;
}

curvefit::FitOptions fit_options(const RunConfig& config) {
  curvefit::FitOptions o;
  o.min_area = config.min_blob_area;
  o.order = config.poly_order;
  o.scan_columns = scans_columns(config);
  return o;
}

struct BaselineOutput {
  PositionTarget target;
  bool detected = true;
  std::string diagnostics;
  double model_ms = 0.0;
  double fit_ms = 0.0;
  double total_ms = 0.0;
};

BaselineOutput run_baseline(const RunConfig& config, seg::UNet<float>& net, const Sample& s) {
  BaselineOutput out;
  const auto total = metrics::timed("total", [&] {
    const auto mask = metrics::timed("model", [&] { return seg::segment(net, s.image, config.seg_threshold); });
    out.model_ms = mask.ms;
    const auto fit = metrics::timed("curve_fit", [&] {
      try {
        curvefit::FitResult r = curvefit::fit_mask(mask.value, n_branches(config), fit_options(config));
        out.diagnostics = r.diagnostics.to_json();
        return r.target;
      } catch (const NoBranchDetected&) {
        out.detected = false;
        out.diagnostics = "{\"no_branch_detected\": true}";
        return centre_prediction(n_branches(config), s.target.width, s.target.height);
      }
    });
    out.fit_ms = fit.ms;
    out.target = fit.value;
  });
  out.total_ms = total;
  return out;
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

/// Draws a 1-px segment between two pixel centres.
void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = steps == 0 ? 0.0 : static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (!img.inside(x, y)) continue;
    img.at(x, y, 0) = r;
    img.at(x, y, 1) = g;
    img.at(x, y, 2) = b;
  }
}

void draw_target(RgbImage& img, const PositionTarget& t, bool scan_columns, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b) {
  for (int ch = 0; ch < t.n_branches; ++ch) {
    int prev = -1;
    for (int row = 0; row < t.height; ++row) {
      if (!t.is_valid(ch, row)) {
        prev = -1;
        continue;
      }
      const int from = prev >= 0 ? prev : row;
      const double c0 = t.coord(ch, from), c1 = t.coord(ch, row);
      if (scan_columns) {
        draw_line(img, from, c0, row, c1, r, g, b);
      } else {
        draw_line(img, c0, from, c1, row, r, g, b);
      }
      prev = row;
    }
  }
}

}  // namespace

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::hob: return "hob";
    case ModelKind::seg_visible: return "seg_visible";
    case ModelKind::seg_whole: return "seg_whole";
  }
  return "?";
}

ModelKind parse_model(const std::string& s) {
  for (ModelKind m : kAllModels)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown model '" + s + "' (expected hob, seg_visible or seg_whole)");
}

fs::path checkpoint_path(const RunConfig& config, ModelKind model) {
  return config.checkpoint_dir / (to_string(model) + ".ckpt");
}

io::Manifest cmd_generate(const RunConfig& config) {
  config.validate();
  const int count = config.scenes.count;
  const auto per_regime = regime_counts(count, config.scenes.regime_mix);
  std::vector<int> regime_of;
  for (int i = 0; i < 3; ++i) regime_of.insert(regime_of.end(), per_regime[i], i);
  Rng rng(config.scenes.scene_seed);
  rng.shuffle(std::span<int>(regime_of));

  std::vector<std::string> ids;
  for (int i = 0; i < count; ++i) ids.push_back(scene_id(i));
  const auto groups = annotation::split_cv_groups(ids, config.scenes.k, config.scenes.split_seed);

  io::Manifest manifest;
  manifest.kind = synth::to_string(config.scenes.kind);
  manifest.width = config.scenes.width;
  manifest.height = config.scenes.height;
  manifest.n_branches = n_branches(config);
  manifest.k = config.scenes.k;
  manifest.scene_seed = config.scenes.scene_seed;
  manifest.split_seed = config.scenes.split_seed;
  const synth::Canvas canvas{config.scenes.width, config.scenes.height};
  for (int i = 0; i < count; ++i) {
    const auto regime = kRegimes[regime_of[i]];
    const auto scene = synth::generate_scene(config.scenes.kind, canvas, regime, mix_seed(config.scenes.scene_seed, i));
    Sample s = make_sample(ids[i], scene, synth::rasterize(scene));
    s.group = groups.at(ids[i]);
    io::write_sample(config.dataset_dir, s);
    manifest.samples.push_back({s.id, synth::to_string(regime), s.group});
  }
  io::write_manifest(config.dataset_dir, manifest);
  return manifest;
}

std::pair<std::vector<std::string>, std::vector<std::string>> training_split(const RunConfig& config,
                                                                             const io::Manifest& manifest) {
  held_out_ids(config, manifest);
  std::vector<std::string> ids = manifest.ids_excluding_group(config.cv_group);
  if (ids.empty()) throw TooFewSamples("no training samples outside group " + std::to_string(config.cv_group));
  Rng rng(config.val_seed);
  rng.shuffle(std::span<std::string>(ids));
  const auto n_val = static_cast<std::size_t>(std::lround(config.val_fraction * static_cast<double>(ids.size())));
  std::vector<std::string> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::string> train(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

History cmd_train(const RunConfig& config, ModelKind model) {
  config.validate();
  const io::Manifest manifest = io::read_manifest(config.dataset_dir);
  const auto [train_ids, val_ids] = training_split(config, manifest);
  const std::vector<Sample> train_set = io::read_samples(config.dataset_dir, train_ids);
  const std::vector<Sample> val_set = io::read_samples(config.dataset_dir, val_ids);

  const std::string name = to_string(model);
  std::set<std::string> seen;
  History progress;
  auto on_batch = [&](int, const std::vector<std::string>& ids) { seen.insert(ids.begin(), ids.end()); };
  auto on_epoch = [&](const EpochRecord& r) { progress.push_back(r); };
  auto history_json = [&](const History& h) {
    json arr = json::array();
    for (const auto& r : h) {
      arr.push_back({{"epoch", r.epoch},
                     {"train_loss", r.train_loss},
                     {"val_loss", std::isfinite(r.val_loss) ? json(r.val_loss) : json(nullptr)}});
    }
    return arr;
  };
  const fs::path history_path = config.checkpoint_dir / (name + ".history.json");
  const fs::path ids_path = config.checkpoint_dir / (name + ".train_ids.txt");
  auto write_audit = [&] {
    std::string text;
    for (const auto& id : seen) text += id + "\n";
    io::write_text(ids_path, text);
  };

  try {
    if (model == ModelKind::hob) {
      auto result = regressor::train(config.hob, train_set, val_set, config.hob_train, on_batch, on_epoch);
      checkpoint::save(checkpoint_path(config, model), result.state, config.hob_train, result.history,
                       result.best_epoch);
      write_json(history_path, {{"model", name}, {"best_epoch", result.best_epoch}, {"history", history_json(result.history)}});
      write_audit();
      return result.history;
    }
    seg::SegSpec spec = config.seg;
    spec.variant = variant_of(model);
    auto result = seg::train_seg(spec, train_set, val_set, config.seg_train, on_batch, on_epoch);
    checkpoint::save(checkpoint_path(config, model), result.state, config.seg_train, result.history,
                     result.best_epoch);
    write_json(history_path, {{"model", name}, {"best_epoch", result.best_epoch}, {"history", history_json(result.history)}});
    write_audit();
    return result.history;
  } catch (const DivergenceDetected& e) {
    write_json(history_path, {{"model", name}, {"diverged_at_epoch", e.epoch()}, {"history", history_json(progress)}});
    write_audit();
    throw;
  }
}

void cmd_predict(const RunConfig& config) {
  config.validate();
  require_checkpoint(config, ModelKind::hob);
  const io::Manifest manifest = io::read_manifest(config.dataset_dir);
  auto state = checkpoint::load_regressor(checkpoint_path(config, ModelKind::hob));
  const fs::path dir = predictions_dir(config, metrics::Method::hob_cnn);
  for (const auto& id : held_out_ids(config, manifest)) {
    const Sample s = io::read_sample(config.dataset_dir, id);
    io::write_target_csv(dir / id / "target.csv", regressor::predict_positions(*state.net, s.image));
  }
}

void cmd_baseline(const RunConfig& config, ModelKind variant) {
  config.validate();
  variant_of(variant);
  require_checkpoint(config, variant);
  const io::Manifest manifest = io::read_manifest(config.dataset_dir);
  auto state = checkpoint::load_segmodel(checkpoint_path(config, variant));
  const fs::path dir = predictions_dir(config, method_of(variant));
  for (const auto& id : held_out_ids(config, manifest)) {
    const Sample s = io::read_sample(config.dataset_dir, id);
    const BaselineOutput out = run_baseline(config, *state.net, s);
    io::write_target_csv(dir / id / "target.csv", out.target);
    io::write_text(dir / id / "fit.json", out.diagnostics + "\n");
  }
}

Evaluation cmd_evaluate(const RunConfig& config) {
  config.validate();
  for (ModelKind m : kAllModels) require_checkpoint(config, m);
  const io::Manifest manifest = io::read_manifest(config.dataset_dir);
  const std::vector<Sample> samples = io::read_samples(config.dataset_dir, held_out_ids(config, manifest));
  auto hob = checkpoint::load_regressor(checkpoint_path(config, ModelKind::hob));
  auto visible = checkpoint::load_segmodel(checkpoint_path(config, ModelKind::seg_visible));
  auto whole = checkpoint::load_segmodel(checkpoint_path(config, ModelKind::seg_whole));

  Evaluation eval;
  auto score = [&](const Sample& s, metrics::Method method, const PositionTarget& pred, bool detected,
                   const metrics::StageTimes& times) {
    metrics::EvalRecord rec;
    rec.id = s.id;
    rec.method = method;
    rec.condition = synth::to_string(s.regime);
    rec.occlusion_fraction = s.occlusion_fraction;
    rec.times = times;
    const metrics::GapFill filled = metrics::fill_gaps(s.target, pred);
    rec.gaps = filled.gaps;
    rec.rmse = metrics::rmse(s.target, filled.filled);
    try {
      rec.r = metrics::pearson_r(s.target, filled.filled);
    } catch (const DegenerateVariance&) {
      rec.r = 0.0;
      rec.tags.push_back("degenerate_r");
    }
    if (!detected) rec.tags.push_back("no_branch_detected");
    if (rec.rmse > metrics::kWorstRmse) {
      for (auto& t : metrics::error_tags(s.traits, s.occlusion_fraction)) rec.tags.push_back(t);
    }
    eval.records.push_back(rec);
  };

  for (const Sample& s : samples) {
    const auto pred = metrics::timed("model", [&] { return regressor::predict_positions(*hob.net, s.image); });
    metrics::StageTimes t;
    t.model_ms = pred.ms;
    t.total_ms = pred.ms;
    score(s, metrics::Method::hob_cnn, pred.value, true, t);
  }
  for (auto [state, method] : {std::pair{&visible, metrics::Method::visible_cf}, std::pair{&whole, metrics::Method::whole_cf}}) {
    for (const Sample& s : samples) {
      const BaselineOutput out = run_baseline(config, *state->net, s);
      metrics::StageTimes t;
      t.model_ms = out.model_ms;
      t.curve_fit_ms = out.fit_ms;
      t.has_curve_fit = true;
      t.total_ms = out.total_ms;
      score(s, method, out.target, out.detected, t);
    }
  }

  eval.report = metrics::aggregate_report(eval.records, {}, kConditionOrder, config.bucket_width);
  const fs::path dir = config.report_dir;
  io::write_text(dir / "report.json", metrics::report_json(eval.report));
  io::write_text(dir / "report.csv", metrics::report_csv(eval.report));
  io::write_text(dir / "buckets.csv", metrics::buckets_csv(eval.report));
  io::write_text(dir / "records.csv", metrics::records_csv(eval.records));
  io::write_text(dir / "worst.csv", metrics::records_csv(metrics::worst_records(eval.records)));
  io::write_text(dir / "timing.csv", metrics::timing_csv(eval.records));
  json timing = json::array();
  for (const auto& r : eval.records) {
    json row = {{"id", r.id}, {"method", metrics::to_string(r.method)}, {"model_ms", r.times.model_ms},
                {"curve_fit_ms", r.times.has_curve_fit ? json(r.times.curve_fit_ms) : json(nullptr)},
                {"total_ms", r.times.total_ms}};
    timing.push_back(row);
  }
  write_json(dir / "timing.json", timing);
  return eval;
}

RgbImage render_overlay(const RgbImage& image, const PositionTarget& gt, const std::vector<PositionTarget>& preds,
                        bool scan_columns) {
  RgbImage out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(x, y, c);
  for (const auto& p : preds) draw_target(out, p, scan_columns, 255, 255, 0);
  draw_target(out, gt, scan_columns, 255, 0, 0);
  return out;
}

void cmd_render(const RunConfig& config, const std::string& sample_id, const std::vector<fs::path>& prediction_csvs,
                const fs::path& out) {
  if (prediction_csvs.empty()) throw ConfigError("render needs at least one prediction file");
  const Sample s = io::read_sample(config.dataset_dir, sample_id);
  std::vector<PositionTarget> preds;
  for (const auto& p : prediction_csvs) preds.push_back(io::read_target_csv(p, s.target.width));
  io::write_png(out, render_overlay(s.image, s.target, preds, scans_columns(config)));
}

Evaluation cmd_all(const RunConfig& config) {
  cmd_generate(config);
  for (ModelKind m : kAllModels) cmd_train(config, m);
  return cmd_evaluate(config);
}

}  // namespace occbranch::commands

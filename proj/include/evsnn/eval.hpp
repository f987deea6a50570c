#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evsnn/ann.hpp"
#include "evsnn/convert.hpp"
#include "evsnn/preprocess.hpp"
#include "evsnn/snn.hpp"
#include "evsnn/synth.hpp"

namespace evsnn {

enum class EvalMode { ann, snn_analog, snn_poisson, snn_dvs };

std::string_view to_string(EvalMode mode);
EvalMode parse_eval_mode(std::string_view text);

/// Evaluation inputs. Frame modes read `frames`; DVS reads `samples`
/// (outlier-filtered, in recording order). Both carry ground truth.
struct EvalInputs
{
    std::span<const LabeledFrame> frames;
    std::span<const Sample> samples;
};

struct EvalConfig
{
    std::int64_t ticks = 450;  // analog and poisson runs
    double poisson_gain = 1.0;
    std::uint64_t seed = 1;  // poisson sample i uses seed + i
    RunConfig run;
    bool carry_state = false;  // DVS: membrane potentials persist across samples
};

struct SampleRecord
{
    ClassLabel truth = ClassLabel::left;
    ClassLabel prediction = ClassLabel::left;
    std::uint64_t ops = 0;
    std::int64_t ticks = 0;
    std::vector<TimelineRecord> timeline;
};

using Confusion = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;  // [truth][prediction]

struct CurvePoint
{
    double ops = 0.0;  // op budget
    double accuracy = 0.0;
};

struct RunReport
{
    EvalMode mode = EvalMode::ann;
    std::vector<SampleRecord> samples;
    double accuracy = 0.0;
    Confusion confusion{};
    double mean_ops = 0.0;
    std::uint64_t ann_ops = 0;  // frame-based cost of the same architecture
    std::vector<CurvePoint> curve;
};

RunReport evaluate_ann(const NetworkParams& params, std::span<const LabeledFrame> frames);
RunReport evaluate_snn(const SpikingNetwork& net, EvalMode mode, const EvalInputs& inputs, const EvalConfig& config = {});

/// Fills accuracy, confusion and mean ops from the per-sample records.
void summarize(RunReport& report);

/// Accuracy at each op budget, using each sample's last timeline record
/// within budget. A sample with no record yet predicts as a silent network
/// does: the lowest class index. Budgets are 0 followed by `points` - 1
/// log-spaced values between the smallest and largest recorded op counts.
std::vector<CurvePoint> accuracy_vs_ops(std::span<const SampleRecord> samples, std::size_t points = 50);

/// Accuracy at a single budget.
double accuracy_at(std::span<const SampleRecord> samples, double budget);

// ---- datasets built from recordings ----

struct PrepareOptions
{
    SubsampleMode subsample = SubsampleMode::max;
    NormOrder norm = NormOrder::clip_first;
    std::int64_t dedupe_window_us = 0;
    std::size_t sample_events = kSampleEvents;
    bool keep_samples = true;  // false: frames only
};

/// Samples are binned per recording; each recording's trailing partial
/// window is dropped.
struct PreparedSet
{
    std::vector<LabeledFrame> frames;  // from the unfiltered samples
    std::vector<Sample> samples;       // outlier-filtered, for DVS runs
    std::vector<std::size_t> recording;  // source recording of each item
};

PreparedSet prepare_recording(const Recording& recording, const PrepareOptions& options, std::size_t index = 0);
PreparedSet prepare_recordings(std::span<const Recording> recordings, const PrepareOptions& options);

/// Scene seed of recording `index`: the index-th draw of Rng(seed).
std::uint64_t recording_seed(std::uint64_t seed, std::size_t index);

struct RecordingSplit
{
    std::vector<std::size_t> train, validation, test;
};
/// Contiguous split by recording index: train first, then validation, then test.
RecordingSplit split_recordings(std::size_t count, double train_fraction, double val_fraction);

/// Loads (or generates) recording `index`. Only one recording is alive at a
/// time while preparing, which keeps full-length datasets out of memory.
using RecordingSource = std::function<Recording(std::size_t)>;

struct SplitData
{
    PreparedSet train, validation, test;
};
/// Filtered DVS samples are kept for the test split only.
SplitData prepare_split(const RecordingSource& source, const RecordingSplit& split, const PrepareOptions& options);

/// Evenly spaced subset (at most `count`) used for scale estimation.
std::vector<Frame> calibration_subset(std::span<const LabeledFrame> frames, std::size_t count);

struct ConvertOptions
{
    double percentile = 99.9;
    double threshold = 1.0;
    std::size_t calibration_frames = 1000;
};

enum class Regularization { l2, none, no_bias };

std::string_view to_string(Regularization r);

struct AblationCell
{
    SubsampleMode subsample = SubsampleMode::max;
    NormOrder norm = NormOrder::clip_first;
    Regularization regularization = Regularization::l2;
};

struct AblationRow
{
    AblationCell cell;
    double ann_accuracy = 0.0;
    double dvs_accuracy = 0.0;
    double dvs_mean_ops = 0.0;
    std::size_t test_samples = 0;
};

struct AblationSetup
{
    RecordingSource recordings;
    RecordingSplit split;
    TrainConfig train_config;  // l2 / use_biases are overridden per cell
    double l2 = 1e-4;          // used by Regularization::l2 cells
    ConvertOptions convert;
    EvalConfig eval;
    std::int64_t dedupe_window_us = 0;
    std::size_t sample_events = kSampleEvents;
};

PrepareOptions prepare_options(const AblationSetup& setup, const AblationCell& cell);

/// One trained, converted and evaluated cell.
struct CellRun
{
    AblationRow row;
    TrainResult trained;
    SpikingNetwork net;
    RunReport ann;
    RunReport dvs;
};
/// `data` must have been prepared with prepare_options(setup, cell).
CellRun run_cell(const AblationSetup& setup, const SplitData& data, const AblationCell& cell);

/// Trains, converts and evaluates (ANN and SNN_DVS) every cell with the same
/// seeds. Cells sharing preprocessing reuse one prepared split when adjacent.
std::vector<AblationRow> ablation_matrix(const AblationSetup& setup, std::span<const AblationCell> cells,
                                         const std::function<void(const AblationRow&)>& progress = {});

/// The full {max, sum} x {clip_first, scale_first} x {l2, none, no_bias} grid.
std::vector<AblationCell> full_ablation_grid();

// ---- CSV ----

void write_summary_csv(std::ostream& out, std::span<const RunReport> reports);
void write_samples_csv(std::ostream& out, const RunReport& report);
void write_confusion_csv(std::ostream& out, const RunReport& report);
void write_curve_csv(std::ostream& out, const RunReport& report);
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);
void write_history_csv(std::ostream& out, std::span<const EpochStats> history);
void write_raster_csv(std::ostream& out, std::span<const SpikeEvent> raster);
void write_timeline_csv(std::ostream& out, std::span<const TimelineRecord> timeline);

}  // namespace evsnn

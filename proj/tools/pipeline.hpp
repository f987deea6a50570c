#pragma once

// Pipeline configuration and the six CLI stages.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "evsnn/eval.hpp"

namespace evsnn::cli {

/// Everything a stage needs. Serialized as flat `key = value` lines.
struct PipelineConfig
{
    // scene
    std::uint64_t seed = 1;
    int recordings = 10;
    SceneConfig scene;  // seed ignored; each recording gets its own
    bool bursts = true;
    BurstConfig burst;

    // preprocessing
    SubsampleMode subsample = SubsampleMode::max;
    NormOrder norm = NormOrder::clip_first;
    std::size_t sample_events = kSampleEvents;
    std::int64_t dedupe_window_us = 0;
    double train_fraction = 0.8;
    double val_fraction = 0.1;

    TrainConfig train;

    ConvertOptions convert;
    double bias_warn_fraction = 0.5;

    // simulation
    EvalConfig eval;
    std::string split = "test";
    std::size_t rasters = 0;  // spike rasters written for the first N samples
    std::string ablation = "directional";

    std::filesystem::path work_dir = "evsnn_work";
};

/// Flat key list with one-line help, in file order.
struct ConfigKey
{
    std::string key;
    std::string help;
};
const std::vector<ConfigKey>& config_keys();

/// Applies `key = value`; throws ConfigError on unknown keys or bad values.
void set_value(PipelineConfig& config, const std::string& key, const std::string& value);
std::string get_value(const PipelineConfig& config, const std::string& key);

/// `#` starts a comment; blank lines are ignored; a key may appear once.
PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);
std::string format_config(const PipelineConfig& config);

/// Checks cross-field consistency (fractions, counts, positive rates).
void validate(const PipelineConfig& config);

/// Scene of recording `index`: the config's scene with its own seed and bursts.
SceneConfig scene_for(const PipelineConfig& config, std::size_t index);

struct StagePaths
{
    std::filesystem::path in;     // stage input directory (or empty: work_dir default)
    std::filesystem::path model;  // model file for run/convert
    std::filesystem::path out;    // stage output directory
    std::vector<std::filesystem::path> runs;  // report: run directories to merge
};

/// Each stage writes its declared outputs plus manifest.json and config.txt
/// into the output directory and returns the list of written files.
using StageOutputs = std::vector<std::filesystem::path>;

StageOutputs stage_synth(const PipelineConfig& config, const StagePaths& paths);
StageOutputs stage_prepare(const PipelineConfig& config, const StagePaths& paths);
StageOutputs stage_train(const PipelineConfig& config, const StagePaths& paths);
StageOutputs stage_convert(const PipelineConfig& config, const StagePaths& paths);
StageOutputs stage_run(const PipelineConfig& config, EvalMode mode, const StagePaths& paths);
StageOutputs stage_report(const PipelineConfig& config, const StagePaths& paths);

}  // namespace evsnn::cli

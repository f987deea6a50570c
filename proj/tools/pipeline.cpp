#include "pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "evsnn/errors.hpp"
#include "evsnn/io.hpp"
#include "evsnn/rng.hpp"
#include "json.hpp"

namespace evsnn::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---- value conversions ----

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v)
{
    T out{};
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end || v.empty())
        throw ConfigError("bad value '" + v + "' for " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw ConfigError("bad value '" + v + "' for " + key + " (expected true/false)");
}

// shortest text that reads back to the same double
std::string show(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T>
std::string show_int(T v)
{
    return std::to_string(v);
}

std::string show(bool v) { return v ? "true" : "false"; }

struct Entry
{
    ConfigKey doc;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

#define EVSNN_DOUBLE(name, field, help)                                                                   \
    Entry{{name, help},                                                                                   \
          [](PipelineConfig& c, const std::string& v) { c.field = parse_number<double>(name, v); },      \
          [](const PipelineConfig& c) { return show(static_cast<double>(c.field)); }}
#define EVSNN_INT(name, type, field, help)                                                             \
    Entry{{name, help},                                                                                \
          [](PipelineConfig& c, const std::string& v) { c.field = parse_number<type>(name, v); },     \
          [](const PipelineConfig& c) { return show_int(c.field); }}
#define EVSNN_BOOL(name, field, help)                                                                   \
    Entry{{name, help}, [](PipelineConfig& c, const std::string& v) { c.field = parse_bool(name, v); }, \
          [](const PipelineConfig& c) { return show(c.field); }}

const std::vector<Entry>& entries()
{
    static const std::vector<Entry> table = {
        EVSNN_INT("seed", std::uint64_t, seed, "master seed; recording i uses the i-th draw of Rng(seed)"),
        EVSNN_INT("recordings", int, recordings, "number of synthetic recordings"),
        EVSNN_INT("duration_us", std::int64_t, scene.duration_us, "length of each recording"),
        EVSNN_DOUBLE("blob_radius", scene.blob_radius, "blob contour radius, sensor pixels"),
        EVSNN_DOUBLE("blob_rate", scene.blob_rate, "blob events per us while visible"),
        EVSNN_DOUBLE("noise_rate", scene.noise_rate, "noise events per us over the sensor"),
        EVSNN_DOUBLE("blob_speed", scene.blob_speed, "pixels per ms"),
        EVSNN_DOUBLE("turn_rate", scene.turn_rate, "max heading change per ms, radians"),
        EVSNN_DOUBLE("offscreen_probability", scene.offscreen_probability, "per ms, visible -> off-screen"),
        EVSNN_DOUBLE("return_probability", scene.return_probability, "per ms, off-screen -> visible"),
        EVSNN_INT("cluster_size", int, scene.cluster_size, "events per blob arrival, sharing one timestamp"),
        EVSNN_INT("cluster_spread", int, scene.cluster_spread, "pixel jitter inside a cluster"),
        EVSNN_BOOL("bursts", bursts, "inject periodic event bursts"),
        EVSNN_INT("burst_period_us", std::int64_t, burst.period_us, "burst period"),
        EVSNN_DOUBLE("burst_multiplier", burst.rate_multiplier, "rate multiplier inside a burst"),
        EVSNN_INT("burst_length_us", std::int64_t, burst.length_us, "burst length"),
        Entry{{"subsample", "max | sum"},
              [](PipelineConfig& c, const std::string& v) { c.subsample = parse_subsample_mode(v); },
              [](const PipelineConfig& c) { return std::string(to_string(c.subsample)); }},
        Entry{{"norm", "clip_first | scale_first"},
              [](PipelineConfig& c, const std::string& v) { c.norm = parse_norm_order(v); },
              [](const PipelineConfig& c) { return std::string(to_string(c.norm)); }},
        EVSNN_INT("sample_events", std::size_t, sample_events, "events per sample"),
        EVSNN_INT("dedupe_window_us", std::int64_t, dedupe_window_us, "max subsampling dedupe window (0: exact timestamp)"),
        EVSNN_DOUBLE("train_fraction", train_fraction, "fraction of recordings used for training"),
        EVSNN_DOUBLE("val_fraction", val_fraction, "fraction of recordings used for validation"),
        EVSNN_INT("epochs", int, train.epochs, "training epochs"),
        EVSNN_INT("batch_size", int, train.batch_size, "mini-batch size"),
        EVSNN_DOUBLE("learning_rate", train.adam.learning_rate, "Adam step size"),
        EVSNN_DOUBLE("beta1", train.adam.beta1, "Adam first moment decay"),
        EVSNN_DOUBLE("beta2", train.adam.beta2, "Adam second moment decay"),
        EVSNN_DOUBLE("adam_epsilon", train.adam.epsilon, "Adam epsilon"),
        EVSNN_DOUBLE("l2", train.l2, "L2 coefficient on weights and biases"),
        EVSNN_BOOL("use_biases", train.use_biases, "train with biases"),
        EVSNN_INT("train_seed", std::uint64_t, train.seed, "initialization and shuffling seed"),
        EVSNN_DOUBLE("percentile", convert.percentile, "activation percentile for scale estimation"),
        EVSNN_DOUBLE("threshold", convert.threshold, "spiking threshold"),
        EVSNN_INT("calibration_frames", std::size_t, convert.calibration_frames, "training frames used for scales"),
        EVSNN_DOUBLE("bias_warn_fraction", bias_warn_fraction, "flag |b'| >= this fraction of the threshold"),
        EVSNN_INT("ticks", std::int64_t, eval.ticks, "ticks per frame in analog and poisson modes"),
        EVSNN_DOUBLE("poisson_gain", eval.poisson_gain, "spike probability per tick = gain * pixel"),
        EVSNN_INT("eval_seed", std::uint64_t, eval.seed, "poisson seed; sample i uses eval_seed + i"),
        Entry{{"dvs_bias", "count_matched | reference | unit"},
              [](PipelineConfig& c, const std::string& v) { c.eval.run.dvs_bias = parse_dvs_bias_mode(v); },
              [](const PipelineConfig& c) { return std::string(to_string(c.eval.run.dvs_bias)); }},
        EVSNN_DOUBLE("reference_ticks", eval.run.reference_ticks, "tick count matched by the reference bias mode"),
        EVSNN_BOOL("carry_state", eval.carry_state, "keep membrane potentials across DVS samples"),
        Entry{{"split", "train | val | test: split evaluated by run"},
              [](PipelineConfig& c, const std::string& v) {
                  if (v != "train" && v != "val" && v != "test")
                      throw ConfigError("bad value '" + v + "' for split");
                  c.split = v;
              },
              [](const PipelineConfig& c) { return c.split; }},
        EVSNN_INT("rasters", std::size_t, rasters, "spike rasters written by run for the first N samples"),
        Entry{{"ablation", "directional | full | none: cells trained by report"},
              [](PipelineConfig& c, const std::string& v) {
                  if (v != "directional" && v != "full" && v != "none")
                      throw ConfigError("bad value '" + v + "' for ablation");
                  c.ablation = v;
              },
              [](const PipelineConfig& c) { return c.ablation; }},
        Entry{{"work_dir", "default root for stage directories"},
              [](PipelineConfig& c, const std::string& v) { c.work_dir = v; },
              [](const PipelineConfig& c) { return c.work_dir.string(); }},
    };
    return table;
}

#undef EVSNN_DOUBLE
#undef EVSNN_INT
#undef EVSNN_BOOL

const Entry& find_entry(const std::string& key)
{
    for (const auto& e : entries())
        if (e.doc.key == key)
            return e;
    throw ConfigError("unknown config key '" + key + "'");
}

// ---- manifests ----

fs::path or_default(const fs::path& given, const fs::path& fallback) { return given.empty() ? fallback : given; }

json file_list(const std::vector<fs::path>& files)
{
    json out = json::array();
    for (const auto& f : files)
        out.push_back({{"path", f.string()}, {"fingerprint", file_fingerprint(f)}});
    return out;
}

// Writes config.txt and manifest.json next to the outputs and returns the
// full output list.
StageOutputs finish_stage(const std::string& stage, const PipelineConfig& config, const fs::path& out_dir,
                          const std::vector<fs::path>& inputs, StageOutputs outputs, json extra = json::object())
{
    const auto config_path = out_dir / "config.txt";
    write_text(config_path, format_config(config));
    outputs.push_back(config_path);

    json m{{"stage", stage},
           {"tool_version", "0.1.0"},
           {"config", json::object()},
           {"seeds", {{"seed", config.seed}, {"train_seed", config.train.seed}, {"eval_seed", config.eval.seed}}},
           {"inputs", file_list(inputs)},
           {"outputs", file_list(outputs)}};
    for (const auto& k : config_keys())
        m["config"][k.key] = get_value(config, k.key);
    for (auto& [k, v] : extra.items())
        m[k] = v;
    const auto manifest = out_dir / "manifest.json";
    write_text(manifest, m.dump(1) + "\n");
    outputs.push_back(manifest);
    return outputs;
}

template <typename Fn>
fs::path write_csv(const fs::path& path, Fn&& fill)
{
    std::ostringstream out;
    fill(out);
    write_text(path, out.str());
    return path;
}

std::vector<fs::path> recording_files(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw IoError("no such directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".aedat")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw IoError("no .aedat recordings in " + dir.string());
    return files;
}

Recording load_recording(const fs::path& aedat)
{
    auto labels = aedat;
    labels.replace_extension(".labels");
    return {read_stream_file(aedat), read_label_track(labels)};
}

json class_balance(std::span<const LabeledFrame> frames)
{
    json out = json::object();
    for (int c = 0; c < kNumClasses; ++c)
        out[std::string(to_string(label_from_index(c)))] = 0;
    for (const auto& f : frames)
        out[std::string(to_string(f.label))] = out[std::string(to_string(f.label))].get<int>() + 1;
    return out;
}

std::string split_file(const std::string& split, const char* what) { return split + "_" + what + ".bin"; }

}  // namespace

// ---- config ----

const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& e : entries())
            k.push_back(e.doc);
        return k;
    }();
    return keys;
}

void set_value(PipelineConfig& config, const std::string& key, const std::string& value)
{
    try
    {
        find_entry(key).set(config, trim(value));
    }
    catch (const ConfigError&)
    {
        throw;
    }
    catch (const Error& e)
    {
        // enum parsers report their own kind; a config value is a config error
        throw ConfigError(key + ": " + e.what());
    }
}

std::string get_value(const PipelineConfig& config, const std::string& key) { return find_entry(key).get(config); }

PipelineConfig parse_config(const std::string& text, PipelineConfig base)
{
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> seen;
    int number = 0;
    while (std::getline(in, line))
    {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(number) + ": expected key = value");
        const auto key = trim(std::string_view(line).substr(0, eq));
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw ConfigError("line " + std::to_string(number) + ": duplicate key '" + key + "'");
        seen.push_back(key);
        try
        {
            set_value(base, key, line.substr(eq + 1));
        }
        catch (const ConfigError& e)
        {
            throw ConfigError("line " + std::to_string(number) + ": " + e.what());
        }
    }
    return base;
}

PipelineConfig load_config(const fs::path& path) { return parse_config(read_text(path)); }

std::string format_config(const PipelineConfig& config)
{
    std::ostringstream out;
    for (const auto& k : config_keys())
        out << k.key << " = " << get_value(config, k.key) << "\n";
    return out.str();
}

void validate(const PipelineConfig& c)
{
    auto need = [](bool ok, const std::string& what) {
        if (!ok)
            throw ConfigError(what);
    };
    need(c.recordings >= 1, "recordings must be >= 1");
    need(c.scene.duration_us > 0, "duration_us must be > 0");
    need(c.scene.blob_rate >= 0 && c.scene.noise_rate >= 0, "event rates must be >= 0");
    need(c.burst.period_us > 0 && c.burst.length_us >= 0 && c.burst.length_us <= c.burst.period_us &&
             c.burst.rate_multiplier >= 1.0,
         "bursts need period > 0, 0 <= length <= period, multiplier >= 1");
    need(c.sample_events >= 1, "sample_events must be >= 1");
    need(c.dedupe_window_us >= 0, "dedupe_window_us must be >= 0");
    need(c.train_fraction > 0 && c.val_fraction >= 0 && c.train_fraction + c.val_fraction < 1.0,
         "need train_fraction > 0, val_fraction >= 0 and a nonempty test share");
    need(c.train.epochs >= 1 && c.train.batch_size >= 1 && c.train.l2 >= 0, "epochs, batch_size >= 1 and l2 >= 0");
    need(c.train.adam.learning_rate > 0, "learning_rate must be > 0");
    need(c.convert.percentile > 0 && c.convert.percentile <= 100, "percentile must be in (0, 100]");
    need(c.convert.threshold > 0, "threshold must be > 0");
    need(c.convert.calibration_frames >= 1, "calibration_frames must be >= 1");
    need(c.eval.ticks >= 1, "ticks must be >= 1");
    need(c.eval.poisson_gain >= 0, "poisson_gain must be >= 0");
    need(c.eval.run.reference_ticks > 0, "reference_ticks must be > 0");
}

SceneConfig scene_for(const PipelineConfig& config, std::size_t index)
{
    auto scene = config.scene;
    scene.seed = recording_seed(config.seed, index);
    if (config.bursts)
        scene.bursts = config.burst;
    else
        scene.bursts.reset();
    return scene;
}

// ---- stages ----

StageOutputs stage_synth(const PipelineConfig& config, const StagePaths& paths)
{
    validate(config);
    const auto out = or_default(paths.out, config.work_dir / "synth");
    fs::create_directories(out);
    StageOutputs outputs;
    json seeds = json::array();
    for (int i = 0; i < config.recordings; ++i)
    {
        const auto scene = scene_for(config, static_cast<std::size_t>(i));
        const auto rec = generate_recording(scene);
        char name[32];
        std::snprintf(name, sizeof name, "rec_%03d", i);
        const auto aedat = out / (std::string(name) + ".aedat");
        const auto labels = out / (std::string(name) + ".labels");
        write_stream_file(aedat, rec.stream);
        write_label_track(labels, rec.labels);
        outputs.push_back(aedat);
        outputs.push_back(labels);
        seeds.push_back(scene.seed);
        std::cerr << "synth: " << aedat.filename().string() << " " << rec.stream.events.size() << " events\n";
    }
    return finish_stage("synth", config, out, {}, std::move(outputs), {{"recording_seeds", seeds}});
}

StageOutputs stage_prepare(const PipelineConfig& config, const StagePaths& paths)
{
    validate(config);
    const auto in = or_default(paths.in, config.work_dir / "synth");
    const auto out = or_default(paths.out, config.work_dir / "data");
    const auto files = recording_files(in);
    const auto split = split_recordings(files.size(), config.train_fraction, config.val_fraction);
    fs::create_directories(out);

    PrepareOptions po;
    po.subsample = config.subsample;
    po.norm = config.norm;
    po.dedupe_window_us = config.dedupe_window_us;
    po.sample_events = config.sample_events;

    StageOutputs outputs;
    std::vector<fs::path> inputs;
    json dataset{{"format", "evsnn-dataset"},
                 {"geometry", {kSubsampledGeometry.width, kSubsampledGeometry.height}},
                 {"sample_events", config.sample_events},
                 {"subsample", to_string(config.subsample)},
                 {"norm", to_string(config.norm)},
                 {"splits", json::object()}};
    const std::pair<const char*, const std::vector<std::size_t>*> parts[] = {
        {"train", &split.train}, {"val", &split.validation}, {"test", &split.test}};
    for (const auto& [name, idx] : parts)
    {
        PreparedSet set;
        json recs = json::array();
        for (auto i : *idx)
        {
            auto labels = files[i];
            labels.replace_extension(".labels");
            inputs.push_back(files[i]);
            inputs.push_back(labels);
            auto part = prepare_recording(load_recording(files[i]), po, i);
            std::move(part.frames.begin(), part.frames.end(), std::back_inserter(set.frames));
            std::move(part.samples.begin(), part.samples.end(), std::back_inserter(set.samples));
            recs.push_back(files[i].filename().string());
        }
        const auto fpath = out / split_file(name, "frames");
        const auto spath = out / split_file(name, "samples");
        save_frames(fpath, set.frames);
        save_samples(spath, set.samples);
        outputs.push_back(fpath);
        outputs.push_back(spath);
        dataset["splits"][name] = {{"recordings", recs}, {"samples", set.frames.size()},
                                   {"class_balance", class_balance(set.frames)}};
        std::cerr << "prepare: " << name << " " << set.frames.size() << " samples from " << idx->size()
                  << " recordings\n";
    }
    const auto ds = out / "dataset.json";
    write_text(ds, dataset.dump(1) + "\n");
    outputs.push_back(ds);
    return finish_stage("prepare", config, out, inputs, std::move(outputs));
}

StageOutputs stage_train(const PipelineConfig& config, const StagePaths& paths)
{
    validate(config);
    const auto in = or_default(paths.in, config.work_dir / "data");
    const auto out = or_default(paths.out, config.work_dir / "model");
    const auto train_path = in / split_file("train", "frames");
    const auto val_path = in / split_file("val", "frames");
    const auto data = load_frames(train_path);
    const auto val = load_frames(val_path);
    fs::create_directories(out);

    const auto result = train(data, val, ArchSpec::steering(), config.train, [](const EpochStats& s) {
        std::cerr << "train: epoch " << s.epoch << " loss " << s.loss << " train_acc " << s.train_accuracy;
        if (s.val_accuracy >= 0)
            std::cerr << " val_acc " << s.val_accuracy;
        std::cerr << "\n";
    });
    ModelFile m;
    m.params = result.params;
    const auto model = out / "model.json";
    save_model(model, m);
    const auto history = write_csv(out / "history.csv", [&](std::ostream& o) { write_history_csv(o, result.history); });
    return finish_stage("train", config, out, {train_path, val_path}, {model, history});
}

StageOutputs stage_convert(const PipelineConfig& config, const StagePaths& paths)
{
    validate(config);
    const auto in = or_default(paths.in, config.work_dir / "data");
    const auto model_in = or_default(paths.model, config.work_dir / "model" / "model.json");
    const auto out = or_default(paths.out, config.work_dir / "converted");
    const auto train_path = in / split_file("train", "frames");
    const auto frames = load_frames(train_path);
    auto m = load_model(model_in);
    fs::create_directories(out);

    const auto calib = calibration_subset(frames, config.convert.calibration_frames);
    const auto net = convert(m.params, calib, config.convert.percentile, config.convert.threshold);
    m.conversion = net.conversion;
    m.threshold = config.convert.threshold;
    const auto model = out / "model.json";
    save_model(model, m);

    const auto audit = audit_biases(net, config.bias_warn_fraction);
    std::ostringstream text;
    text << "# bias audit: |b'| / threshold, flagged when >= " << audit.warn_fraction << "\n";
    text << "lambda:";
    for (auto l : net.conversion->scales.lambda)
        text << " " << l;
    text << "\nflagged " << audit.flagged.size() << " of " << net.neuron_count() << " units\n";
    for (std::size_t l = 0; l < audit.ratios.size(); ++l)
        if (!audit.ratios[l].empty())
            text << "layer " << l << " max ratio " << *std::max_element(audit.ratios[l].begin(), audit.ratios[l].end())
                 << "\n";
    text << "layer,neuron,ratio\n";
    for (const auto& e : audit.flagged)
        text << e.layer << "," << e.neuron << "," << e.ratio << "\n";
    const auto audit_path = out / "bias_audit.txt";
    write_text(audit_path, text.str());
    std::cerr << "convert: " << audit.flagged.size() << " bias-dominated units\n";
    return finish_stage("convert", config, out, {train_path, model_in}, {model, audit_path});
}

StageOutputs stage_run(const PipelineConfig& config, EvalMode mode, const StagePaths& paths)
{
    validate(config);
    const auto in = or_default(paths.in, config.work_dir / "data");
    const auto model_in = or_default(paths.model, config.work_dir / "converted" / "model.json");
    const auto out = or_default(paths.out, config.work_dir / ("run_" + std::string(to_string(mode))));
    const auto frames_path = in / split_file(config.split, "frames");
    const auto samples_path = in / split_file(config.split, "samples");
    const auto model = load_model(model_in);
    const auto frames = load_frames(frames_path);
    const auto samples = mode == EvalMode::snn_dvs ? load_samples(samples_path) : std::vector<Sample>{};
    fs::create_directories(out);

    RunReport report;
    std::optional<SpikingNetwork> net;
    if (mode == EvalMode::ann)
        report = evaluate_ann(model.params, frames);
    else
    {
        net = model.spiking();
        report = evaluate_snn(*net, mode, {frames, samples}, config.eval);
    }
    std::cerr << "run: " << to_string(mode) << " accuracy " << report.accuracy << " mean ops " << report.mean_ops
              << " (ann " << report.ann_ops << ")\n";

    StageOutputs outputs;
    outputs.push_back(write_csv(out / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, std::span(&report, 1)); }));
    outputs.push_back(write_csv(out / "samples.csv", [&](std::ostream& o) { write_samples_csv(o, report); }));
    outputs.push_back(write_csv(out / "confusion.csv", [&](std::ostream& o) { write_confusion_csv(o, report); }));
    outputs.push_back(write_csv(out / "curve.csv", [&](std::ostream& o) { write_curve_csv(o, report); }));

    if (net && config.rasters > 0)
    {
        // replays the first samples exactly as evaluate_snn ran them
        auto run = config.eval.run;
        run.record_raster = true;
        auto state = make_state(*net);
        const auto n = std::min(config.rasters, report.samples.size());
        for (std::size_t i = 0; i < n; ++i)
        {
            SampleResult r;
            if (mode == EvalMode::snn_analog)
                r = run_sample(*net, make_analog_driver(frames[i].frame, config.eval.ticks), run);
            else if (mode == EvalMode::snn_poisson)
                r = run_sample(*net,
                               make_poisson_driver(frames[i].frame, config.eval.poisson_gain, config.eval.seed + i,
                                                   config.eval.ticks),
                               run);
            else
            {
                if (!config.eval.carry_state)
                    state = make_state(*net);
                r = run_sample(*net, make_dvs_driver(samples[i]), run, state);
            }
            char name[40];
            std::snprintf(name, sizeof name, "raster_%04zu.csv", i);
            outputs.push_back(write_csv(out / name, [&](std::ostream& o) { write_raster_csv(o, r.raster); }));
            std::snprintf(name, sizeof name, "timeline_%04zu.csv", i);
            outputs.push_back(write_csv(out / name, [&](std::ostream& o) { write_timeline_csv(o, r.timeline); }));
        }
    }
    std::vector<fs::path> inputs{model_in, frames_path};
    if (mode == EvalMode::snn_dvs)
        inputs.push_back(samples_path);
    return finish_stage("run", config, out, inputs, std::move(outputs), {{"mode", to_string(mode)}});
}

StageOutputs stage_report(const PipelineConfig& config, const StagePaths& paths)
{
    validate(config);
    const auto out = or_default(paths.out, config.work_dir / "report");
    fs::create_directories(out);
    StageOutputs outputs;
    std::vector<fs::path> inputs;

    // merge run directories: explicit list, else every run_* under work_dir
    auto runs = paths.runs;
    if (runs.empty() && fs::is_directory(config.work_dir))
    {
        for (const auto& e : fs::directory_iterator(config.work_dir))
            if (e.is_directory() && e.path().filename().string().rfind("run_", 0) == 0)
                runs.push_back(e.path());
        std::sort(runs.begin(), runs.end());
    }
    std::ostringstream summary, curves;
    bool summary_header = false, curve_header = false;
    for (const auto& dir : runs)
    {
        for (auto [name, stream, header] : {std::tuple{"summary.csv", &summary, &summary_header},
                                            std::tuple{"curve.csv", &curves, &curve_header}})
        {
            const auto file = dir / name;
            inputs.push_back(file);
            std::istringstream text(read_text(file));
            std::string line;
            bool first = true;
            while (std::getline(text, line))
            {
                if (first && *header)
                {
                    first = false;
                    continue;
                }
                first = false;
                *header = true;
                *stream << line << "\n";
            }
        }
    }
    if (!runs.empty())
    {
        write_text(out / "summary.csv", summary.str());
        write_text(out / "curves.csv", curves.str());
        outputs.push_back(out / "summary.csv");
        outputs.push_back(out / "curves.csv");
    }

    std::vector<AblationRow> rows;
    if (config.ablation != "none")
    {
        const auto in = or_default(paths.in, config.work_dir / "synth");
        const auto files = recording_files(in);
        inputs.insert(inputs.end(), files.begin(), files.end());
        AblationSetup setup;
        setup.recordings = [&files](std::size_t i) { return load_recording(files.at(i)); };
        setup.split = split_recordings(files.size(), config.train_fraction, config.val_fraction);
        setup.train_config = config.train;
        setup.l2 = config.train.l2 > 0 ? config.train.l2 : 1e-4;
        setup.convert = config.convert;
        setup.eval = config.eval;
        setup.dedupe_window_us = config.dedupe_window_us;
        setup.sample_events = config.sample_events;
        std::vector<AblationCell> cells;
        if (config.ablation == "full")
            cells = full_ablation_grid();
        else
            cells = {{SubsampleMode::max, NormOrder::clip_first, Regularization::l2},
                     {SubsampleMode::max, NormOrder::clip_first, Regularization::none},
                     {SubsampleMode::sum, NormOrder::clip_first, Regularization::l2},
                     {SubsampleMode::max, NormOrder::scale_first, Regularization::l2}};
        rows = ablation_matrix(setup, cells, [](const AblationRow& r) {
            std::cerr << "report: " << to_string(r.cell.subsample) << "/" << to_string(r.cell.norm) << "/"
                      << to_string(r.cell.regularization) << " ann " << r.ann_accuracy << " snn_dvs "
                      << r.dvs_accuracy << "\n";
        });
        outputs.push_back(write_csv(out / "ablation.csv", [&](std::ostream& o) { write_ablation_csv(o, rows); }));
    }

    std::ostringstream text;
    text << "# evsnn report\n";
    if (!runs.empty())
        text << "runs merged: " << runs.size() << " (summary.csv, curves.csv)\n";
    if (!rows.empty())
    {
        text << "ablation cells: " << rows.size() << " (ablation.csv)\n";
        text << std::left << std::setw(10) << "subsample" << std::setw(13) << "norm" << std::setw(9) << "reg"
             << std::setw(9) << "ann" << std::setw(9) << "snn_dvs" << "mean_ops\n";
        for (const auto& r : rows)
            text << std::left << std::setw(10) << to_string(r.cell.subsample) << std::setw(13) << to_string(r.cell.norm)
                 << std::setw(9) << to_string(r.cell.regularization) << std::setw(9) << std::setprecision(4)
                 << r.ann_accuracy << std::setw(9) << r.dvs_accuracy << r.dvs_mean_ops << "\n";
    }
    text << "\nfull-scale reference figures (real recordings, not reproduced here):\n"
            "  ANN accuracy 88.25% (max subsampling) vs 88.04% (sum)\n"
            "  SNN_DVS accuracy 85.19% (max) vs 78.24% (sum)\n"
            "  SNN accuracy drops by about 30% when frames are scaled before clipping\n"
            "  SNN accuracy rises by about 43% with L2 on weights and biases\n"
            "  about 12x fewer operations for SNN_DVS than the ANN\n";
    write_text(out / "report.txt", text.str());
    outputs.push_back(out / "report.txt");
    return finish_stage("report", config, out, inputs, std::move(outputs));
}

}  // namespace evsnn::cli

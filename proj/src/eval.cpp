#include "evsnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>

#include "evsnn/errors.hpp"
#include "evsnn/rng.hpp"

namespace evsnn {

std::string_view to_string(EvalMode mode)
{
    switch (mode)
    {
        case EvalMode::ann: return "ann";
        case EvalMode::snn_analog: return "snn_analog";
        case EvalMode::snn_poisson: return "snn_poisson";
        case EvalMode::snn_dvs: return "snn_dvs";
    }
    return "?";
}

EvalMode parse_eval_mode(std::string_view text)
{
    for (auto m : {EvalMode::ann, EvalMode::snn_analog, EvalMode::snn_poisson, EvalMode::snn_dvs})
        if (text == to_string(m) || (text.size() > 0 && "snn_" + std::string(text) == to_string(m)))
            return m;
    throw ConfigError("unknown evaluation mode '" + std::string(text) + "'");
}

std::string_view to_string(Regularization r)
{
    switch (r)
    {
        case Regularization::l2: return "l2";
        case Regularization::none: return "none";
        case Regularization::no_bias: return "no_bias";
    }
    return "?";
}

void summarize(RunReport& report)
{
    report.confusion = {};
    double ops = 0.0;
    std::uint64_t correct = 0;
    for (const auto& s : report.samples)
    {
        ++report.confusion[static_cast<std::size_t>(index_of(s.truth))][static_cast<std::size_t>(index_of(s.prediction))];
        correct += s.truth == s.prediction;
        ops += static_cast<double>(s.ops);
    }
    const auto n = static_cast<double>(report.samples.size());
    report.accuracy = report.samples.empty() ? 0.0 : static_cast<double>(correct) / n;
    report.mean_ops = report.samples.empty() ? 0.0 : ops / n;
}

RunReport evaluate_ann(const NetworkParams& params, std::span<const LabeledFrame> frames)
{
    RunReport r;
    r.mode = EvalMode::ann;
    r.ann_ops = ann_op_count(params.arch);
    for (const auto& f : frames)
    {
        SampleRecord s;
        s.truth = f.label;
        s.prediction = predict(params, f.frame);
        s.ops = r.ann_ops;
        s.timeline.push_back({0, r.ann_ops, s.prediction});
        r.samples.push_back(std::move(s));
    }
    summarize(r);
    r.curve = {{static_cast<double>(r.ann_ops), r.accuracy}};
    return r;
}

RunReport evaluate_snn(const SpikingNetwork& net, EvalMode mode, const EvalInputs& inputs, const EvalConfig& config)
{
    RunReport r;
    r.mode = mode;
    r.ann_ops = ann_op_count(net.params.arch);
    auto keep = [&r](ClassLabel truth, SampleResult&& res) {
        r.samples.push_back({truth, res.prediction, res.ops, res.ticks, std::move(res.timeline)});
    };
    switch (mode)
    {
        case EvalMode::ann: throw ConfigError("evaluate_snn needs a spiking mode");
        case EvalMode::snn_analog:
            for (const auto& f : inputs.frames)
                keep(f.label, run_sample(net, make_analog_driver(f.frame, config.ticks), config.run));
            break;
        case EvalMode::snn_poisson:
            for (std::size_t i = 0; i < inputs.frames.size(); ++i)
            {
                const auto& f = inputs.frames[i];
                keep(f.label, run_sample(net, make_poisson_driver(f.frame, config.poisson_gain, config.seed + i,
                                                                  config.ticks),
                                         config.run));
            }
            break;
        case EvalMode::snn_dvs:
        {
            auto state = make_state(net);
            for (const auto& s : inputs.samples)
            {
                if (!config.carry_state)
                    state = make_state(net);
                keep(s.label, run_sample(net, make_dvs_driver(s), config.run, state));
            }
            break;
        }
    }
    summarize(r);
    r.curve = accuracy_vs_ops(r.samples);
    return r;
}

double accuracy_at(std::span<const SampleRecord> samples, double budget)
{
    if (samples.empty())
        return 0.0;
    std::size_t correct = 0;
    for (const auto& s : samples)
    {
        const auto it = std::upper_bound(s.timeline.begin(), s.timeline.end(), budget,
                                         [](double b, const TimelineRecord& t) { return b < static_cast<double>(t.ops); });
        const auto pred = it == s.timeline.begin() ? ClassLabel::left : std::prev(it)->prediction;
        correct += pred == s.truth;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<CurvePoint> accuracy_vs_ops(std::span<const SampleRecord> samples, std::size_t points)
{
    std::vector<CurvePoint> curve{{0.0, accuracy_at(samples, 0.0)}};
    std::uint64_t lo = 0, hi = 0;
    for (const auto& s : samples)
        for (const auto& t : s.timeline)
        {
            if (t.ops > 0 && (lo == 0 || t.ops < lo))
                lo = t.ops;
            hi = std::max(hi, t.ops);
        }
    if (hi == 0 || points < 2)
        return curve;
    const auto steps = points - 1;
    for (std::size_t i = 0; i < steps; ++i)
    {
        // pin the last budget to hi exactly
        const double b = i + 1 == steps || steps == 1
                             ? static_cast<double>(hi)
                             : static_cast<double>(lo) * std::pow(static_cast<double>(hi) / static_cast<double>(lo),
                                                                 static_cast<double>(i) / static_cast<double>(steps - 1));
        curve.push_back({b, accuracy_at(samples, b)});
    }
    return curve;
}

PreparedSet prepare_recording(const Recording& recording, const PrepareOptions& options, std::size_t index)
{
    const auto sub = subsample_stream(recording.stream, options.subsample, options.dedupe_window_us);
    const auto& track = recording.labels;
    const auto samples =
        bin_samples(sub, static_cast<int>(options.sample_events), [&track](std::int64_t t) { return track.lookup(t); });
    PreparedSet out;
    for (const auto& s : samples)
    {
        out.frames.push_back({make_training_frame(s, options.norm), s.label});
        if (options.keep_samples)
            out.samples.push_back(filter_outlier_events(s));
        out.recording.push_back(index);
    }
    return out;
}

PreparedSet prepare_recordings(std::span<const Recording> recordings, const PrepareOptions& options)
{
    PreparedSet out;
    for (std::size_t i = 0; i < recordings.size(); ++i)
    {
        auto part = prepare_recording(recordings[i], options, i);
        std::move(part.frames.begin(), part.frames.end(), std::back_inserter(out.frames));
        std::move(part.samples.begin(), part.samples.end(), std::back_inserter(out.samples));
        out.recording.insert(out.recording.end(), part.recording.begin(), part.recording.end());
    }
    return out;
}

std::uint64_t recording_seed(std::uint64_t seed, std::size_t index)
{
    Rng rng(seed);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i <= index; ++i)
        v = rng.next();
    return v;
}

RecordingSplit split_recordings(std::size_t count, double train_fraction, double val_fraction)
{
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(count)));
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(count)));
    n_train = std::max<std::size_t>(1, n_train);
    if (n_train + n_val >= count)
    {
        if (count < 2)
            throw ConfigError("need at least 2 recordings for a train/test split");
        n_val = count - n_train >= 2 ? n_val : 0;
        if (n_train + n_val >= count)
            n_train = count - n_val - 1;
    }
    RecordingSplit s;
    for (std::size_t i = 0; i < count; ++i)
        (i < n_train ? s.train : i < n_train + n_val ? s.validation : s.test).push_back(i);
    return s;
}

SplitData prepare_split(const RecordingSource& source, const RecordingSplit& split, const PrepareOptions& options)
{
    auto build = [&](const std::vector<std::size_t>& ids, bool samples) {
        auto po = options;
        po.keep_samples = samples && options.keep_samples;
        PreparedSet out;
        for (auto id : ids)
        {
            auto part = prepare_recording(source(id), po, id);
            std::move(part.frames.begin(), part.frames.end(), std::back_inserter(out.frames));
            std::move(part.samples.begin(), part.samples.end(), std::back_inserter(out.samples));
            out.recording.insert(out.recording.end(), part.recording.begin(), part.recording.end());
        }
        return out;
    };
    return {build(split.train, false), build(split.validation, false), build(split.test, true)};
}

std::vector<Frame> calibration_subset(std::span<const LabeledFrame> frames, std::size_t count)
{
    std::vector<Frame> out;
    if (frames.empty() || count == 0)
        return out;
    const auto n = std::min(count, frames.size());
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(frames[i * frames.size() / n].frame);
    return out;
}

std::vector<AblationCell> full_ablation_grid()
{
    std::vector<AblationCell> cells;
    for (auto s : {SubsampleMode::max, SubsampleMode::sum})
        for (auto n : {NormOrder::clip_first, NormOrder::scale_first})
            for (auto r : {Regularization::l2, Regularization::none, Regularization::no_bias})
                cells.push_back({s, n, r});
    return cells;
}

PrepareOptions prepare_options(const AblationSetup& setup, const AblationCell& cell)
{
    PrepareOptions po;
    po.subsample = cell.subsample;
    po.norm = cell.norm;
    po.dedupe_window_us = setup.dedupe_window_us;
    po.sample_events = setup.sample_events;
    return po;
}

CellRun run_cell(const AblationSetup& setup, const SplitData& data, const AblationCell& cell)
{
    auto tc = setup.train_config;
    tc.l2 = cell.regularization == Regularization::none ? 0.0 : setup.l2;
    tc.use_biases = cell.regularization != Regularization::no_bias;
    auto trained = train(data.train.frames, data.validation.frames, ArchSpec::steering(), tc);
    const auto calib = calibration_subset(data.train.frames, setup.convert.calibration_frames);
    auto net = convert(trained.params, calib, setup.convert.percentile, setup.convert.threshold);
    auto ann = evaluate_ann(trained.params, data.test.frames);
    auto dvs = evaluate_snn(net, EvalMode::snn_dvs, {{}, data.test.samples}, setup.eval);
    AblationRow row{cell, ann.accuracy, dvs.accuracy, dvs.mean_ops, data.test.samples.size()};
    return {row, std::move(trained), std::move(net), std::move(ann), std::move(dvs)};
}

std::vector<AblationRow> ablation_matrix(const AblationSetup& setup, std::span<const AblationCell> cells,
                                         const std::function<void(const AblationRow&)>& progress)
{
    std::optional<std::pair<SubsampleMode, NormOrder>> key;
    SplitData data;
    std::vector<AblationRow> rows;
    for (const auto& cell : cells)
    {
        if (!key || key->first != cell.subsample || key->second != cell.norm)
        {
            data = {};  // free the previous split before building the next
            data = prepare_split(setup.recordings, setup.split, prepare_options(setup, cell));
            key = std::make_pair(cell.subsample, cell.norm);
        }
        rows.push_back(run_cell(setup, data, cell).row);
        if (progress)
            progress(rows.back());
    }
    return rows;
}

void write_summary_csv(std::ostream& out, std::span<const RunReport> reports)
{
    out << "mode,samples,accuracy,mean_ops,ann_ops,op_ratio\n";
    for (const auto& r : reports)
        out << to_string(r.mode) << ',' << r.samples.size() << ',' << r.accuracy << ',' << r.mean_ops << ','
            << r.ann_ops << ',' << (r.mean_ops > 0 ? static_cast<double>(r.ann_ops) / r.mean_ops : 0.0) << '\n';
}

void write_samples_csv(std::ostream& out, const RunReport& report)
{
    out << "index,truth,prediction,ops,ticks\n";
    for (std::size_t i = 0; i < report.samples.size(); ++i)
    {
        const auto& s = report.samples[i];
        out << i << ',' << to_string(s.truth) << ',' << to_string(s.prediction) << ',' << s.ops << ',' << s.ticks << '\n';
    }
}

void write_confusion_csv(std::ostream& out, const RunReport& report)
{
    out << "truth";
    for (auto l : kAllLabels)
        out << ",pred_" << to_string(l);
    out << '\n';
    for (auto t : kAllLabels)
    {
        out << to_string(t);
        for (auto p : kAllLabels)
            out << ',' << report.confusion[static_cast<std::size_t>(index_of(t))][static_cast<std::size_t>(index_of(p))];
        out << '\n';
    }
}

void write_curve_csv(std::ostream& out, const RunReport& report)
{
    out << "mode,ops,accuracy\n";
    for (const auto& p : report.curve)
        out << to_string(report.mode) << ',' << p.ops << ',' << p.accuracy << '\n';
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows)
{
    out << "subsample,norm,regularization,ann_accuracy,snn_dvs_accuracy,snn_dvs_mean_ops,test_samples\n";
    for (const auto& r : rows)
        out << to_string(r.cell.subsample) << ',' << to_string(r.cell.norm) << ',' << to_string(r.cell.regularization)
            << ',' << r.ann_accuracy << ',' << r.dvs_accuracy << ',' << r.dvs_mean_ops << ',' << r.test_samples << '\n';
}

void write_history_csv(std::ostream& out, std::span<const EpochStats> history)
{
    out << "epoch,loss,train_acc,val_acc\n";
    for (const auto& h : history)
    {
        out << h.epoch << ',' << h.loss << ',' << h.train_accuracy << ',';
        if (h.val_accuracy >= 0)
            out << h.val_accuracy;
        out << '\n';
    }
}

void write_raster_csv(std::ostream& out, std::span<const SpikeEvent> raster)
{
    out << "tick,layer,neuron\n";
    for (const auto& e : raster)
    {
        out << e.tick << ',';
        if (e.layer < 0)
            out << "input";
        else
            out << e.layer;
        out << ',' << e.neuron << '\n';
    }
}

void write_timeline_csv(std::ostream& out, std::span<const TimelineRecord> timeline)
{
    out << "tick,cumulative_ops,prediction\n";
    for (const auto& t : timeline)
        out << t.tick << ',' << t.ops << ',' << to_string(t.prediction) << '\n';
}

}  // namespace evsnn

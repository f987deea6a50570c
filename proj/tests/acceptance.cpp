// Acceptance run: one PASS/FAIL line per criterion.
//
//   evsnn_acceptance [--config desk.cfg] [--out dir] [--only 1,2,...] [--expect-fail 8]
//
// Exit status is 0 when every criterion ends as expected: listed criteria may
// fail (and are reported as such), everything else must pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evsnn/aedat.hpp"
#include "evsnn/errors.hpp"
#include "evsnn/eval.hpp"
#include "gradient_oracle.hpp"
#include "pipeline.hpp"
#include "sample_fixtures.hpp"
#include "snn_fixtures.hpp"

namespace fs = std::filesystem;
using namespace evsnn;
using namespace evsnn::testing;

namespace {

struct Verdict
{
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4)
{
    std::ostringstream o;
    o.precision(digits);
    o << v;
    return o.str();
}

double pearson(const std::vector<double>& a, const std::vector<double>& b)
{
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

Verdict architecture_identity()
{
    const auto a = ArchSpec::steering();
    const auto params = a.parameter_count();
    const auto neurons = a.neuron_count();
    return {params == 6472 && neurons == 5884,
            "parameters " + std::to_string(params) + ", neurons " + std::to_string(neurons)};
}

Verdict gradient_correctness()
{
    Rng rng(2);
    double worst = 0, worst_abs = 0;
    std::size_t failures = 0, checked = 0;
    auto run = [&](const NetworkParams& p, int inputs, int batch) {
        std::vector<std::vector<double>> xs;
        std::vector<ClassLabel> ys;
        for (int s = 0; s < batch; ++s)
        {
            std::vector<double> x(static_cast<std::size_t>(inputs));
            for (auto& v : x)
                v = rng.uniform();
            xs.push_back(std::move(x));
            ys.push_back(label_from_index(static_cast<int>(rng.uniform_int(kNumClasses))));
        }
        const auto c = check_gradients(p, xs, ys, 1e-3);
        worst = std::max(worst, c.worst_relative);
        worst_abs = std::max(worst_abs, c.worst_absolute);
        failures += c.failures;
        checked += c.checked;
    };
    for (int net = 0; net < 20; ++net)
    {
        ArchSpec a;
        const int size = 6 + static_cast<int>(rng.uniform_int(5));
        a.input = {size, size, 1};
        a.layers = {LayerSpec::conv(1 + static_cast<int>(rng.uniform_int(3)), 3), LayerSpec::maxpool(2)};
        if (net % 2 == 0)
            a.layers.push_back(LayerSpec::dense(3 + static_cast<int>(rng.uniform_int(5))));
        a.layers.push_back(LayerSpec::dense(kNumClasses));
        auto p = random_params(a, rng, 0.6, 0.2);
        run(p, size * size, 3);
    }
    auto full = init_params(ArchSpec::steering(), 5);
    for (auto& l : full.layers)
        for (auto& b : l.biases)
            b = rng.uniform(-0.05, 0.05);
    run(full, 36 * 36, 2);
    return {failures == 0 && worst <= 1e-4, std::to_string(checked) + " components, worst relative error " +
                                                 fmt(worst, 3) + " (worst absolute " + fmt(worst_abs, 3) +
                                                 "), failures " + std::to_string(failures)};
}

Verdict rate_coding()
{
    Rng rng(3);
    double worst = 0, min_corr = 1;
    int dead = 0;
    for (int done = 0; done < 10;)
    {
        ArchSpec a;
        const int side = 4 + static_cast<int>(rng.uniform_int(3));
        a.input = {side, side, 1};
        const int hidden = 1 + static_cast<int>(rng.uniform_int(2));  // 2 or 3 weight layers
        for (int h = 0; h < hidden; ++h)
            a.layers.push_back(LayerSpec::dense(8 + static_cast<int>(rng.uniform_int(9))));
        a.layers.push_back(LayerSpec::dense(kNumClasses));
        auto p = random_params(a, rng, 0.5, 0.0);
        Frame f(side, side);
        for (auto& c : f.cells)
            c = static_cast<float>(rng.uniform());
        const std::vector<std::vector<double>> calib{to_input(f)};
        ScaleFactors scales;
        try
        {
            scales = estimate_scales(p, calib, 100);
        }
        catch (const DeadLayerError&)
        {
            ++dead;  // a layer that never activates has no rate to compare
            continue;
        }
        ++done;
        const auto scaled = rescale(p, scales);
        const auto net = build_spiking(scaled);
        const auto ref = forward(scaled, f);
        auto st = make_state(net);
        run_sample(net, make_analog_driver(f, 2000), {}, st);
        std::vector<double> rates, acts;
        for (std::size_t l = 0; l < net.layers.size(); ++l)
            for (std::size_t n = 0; n < net.layers[l].size(); ++n)
            {
                rates.push_back(st.counts[l][n] / 2000.0);
                acts.push_back(std::max(0.0, ref.activations[l][n]));
                worst = std::max(worst, std::abs(rates.back() - acts.back()));
            }
        min_corr = std::min(min_corr, pearson(rates, acts));
    }
    return {worst <= 0.02 && min_corr >= 0.99, "10 nets (" + std::to_string(dead) + " dead redrawn), max |rate - a| " +
                                                   fmt(worst, 3) + ", min correlation " + fmt(min_corr, 6)};
}

Verdict fast_forward_exactness()
{
    Rng rng(4);
    int mismatches = 0;
    std::int64_t longest = 0;
    for (int trial = 0; trial < 100; ++trial)
    {
        const bool conv = trial % 4 == 0;
        const auto arch = conv ? small_conv_arch() : random_dense_arch(rng, 6, 1 + trial % 3);
        const auto net = build_spiking(random_params(arch, rng, 0.8, 0.05));
        const auto pixels = static_cast<std::uint32_t>(arch.input.size());
        auto naive = make_state(net);
        auto fast = make_state(net);
        const double bias_scale = rng.uniform(0.0, 1.5);
        set_drive(net, naive, bias_scale, {}, trial % 2);
        set_drive(net, fast, bias_scale, {}, trial % 2);
        bool same = true;
        for (int burst = 0; burst < 3 && same; ++burst)
        {
            const auto gap = static_cast<std::int64_t>(rng.uniform_int(10'001));
            longest = std::max(longest, gap);
            const auto input = random_input(rng, pixels, 0.3, 3);
            for (std::int64_t i = 0; i < gap; ++i)
                step(net, naive);
            step(net, naive, input);
            inject(net, fast, fast.now + gap + 1, input);
            same = same_state(naive, fast);
        }
        const std::int64_t tail = trial % 10 == 0 ? 10'000 : static_cast<std::int64_t>(rng.uniform_int(10'001));
        longest = std::max(longest, tail);
        for (std::int64_t i = 0; i < tail; ++i)
            step(net, naive);
        fast_forward(net, fast, tail);
        if (!same || !same_state(naive, fast))
            ++mismatches;
    }
    return {mismatches == 0,
            "100 trials, longest jump " + std::to_string(longest) + " ticks, mismatches " + std::to_string(mismatches)};
}

Verdict aedat_round_trip()
{
    int bad = 0;
    std::size_t events = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
    {
        SceneConfig cfg;
        cfg.duration_us = 1'000'000;
        cfg.seed = seed;
        if (seed != 2)
            cfg.bursts = BurstConfig{};
        const auto rec = generate_recording(cfg);
        events += rec.stream.events.size();
        const auto bytes = write_stream(rec.stream);
        const auto back = read_stream(bytes);
        bad += !(back == rec.stream);
        bad += !(write_stream(back) == bytes);
    }
    int addr_bad = 0, combos = 0;
    std::set<std::uint32_t> words;
    for (int x = 0; x < kSensorGeometry.width; ++x)
        for (int y = 0; y < kSensorGeometry.height; ++y)
            for (auto p : {Polarity::off, Polarity::on})
            {
                ++combos;
                const auto w = encode_address(x, y, p);
                words.insert(w);
                const auto d = decode_address(w);
                addr_bad += d.x != x || d.y != y || d.polarity != p;
            }
    const bool ok = bad == 0 && addr_bad == 0 && combos == 86'400 && words.size() == 86'400;
    return {ok, "3 recordings (" + std::to_string(events) + " events) identical both ways; " + std::to_string(combos) +
                    " addresses, " + std::to_string(words.size()) + " distinct words, " + std::to_string(addr_bad) +
                    " decode mismatches"};
}

Verdict normalization_consistency()
{
    Rng rng(6);
    int bad = 0;
    for (int i = 0; i < 1000; ++i)
    {
        const auto s = random_sample(rng, 500 + static_cast<int>(rng.uniform_int(4501)));
        bad += !(count_frame(filter_outlier_events(s)) == sigma_clip(count_frame(s)).clipped);
    }
    return {bad == 0, "1000 samples, " + std::to_string(bad) + " mismatches"};
}

Verdict burst_asymmetry()
{
    auto p = dense_params(2, {1});
    p.layers[0].weights = {0.5, -0.5};
    const auto net = build_spiking(p);
    const int n = 10;
    auto exc_first = make_state(net);
    set_drive(net, exc_first, 1.0);
    for (int i = 0; i < n; ++i)
        step(net, exc_first, std::vector<InputSpike>{{0, 1}});
    for (int i = 0; i < n; ++i)
        step(net, exc_first, std::vector<InputSpike>{{1, 1}});
    auto mixed = make_state(net);
    set_drive(net, mixed, 1.0);
    for (int i = 0; i < n; ++i)
    {
        step(net, mixed, std::vector<InputSpike>{{0, 1}});
        step(net, mixed, std::vector<InputSpike>{{1, 1}});
    }
    const auto a = exc_first.counts[0][0];
    const auto b = mixed.counts[0][0];
    return {a >= 1 && b == 0 && exc_first.input_spikes == mixed.input_spikes,
            "excitatory-first " + std::to_string(a) + " spikes, interleaved " + std::to_string(b) + ", inputs " +
                std::to_string(exc_first.input_spikes) + "/" + std::to_string(mixed.input_spikes)};
}

// ---- desk-scale run: criteria 7, 8, 9 ----

struct DeskResults
{
    Verdict end_to_end, ops, ablations;
};

template <class F>
void write_file(const fs::path& path, F body)
{
    std::ofstream out(path);
    body(out);
}

DeskResults desk_run(const cli::PipelineConfig& config, const fs::path& out)
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto seconds = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

    AblationSetup setup;
    setup.recordings = [&config](std::size_t i) { return generate_recording(cli::scene_for(config, i)); };
    setup.split = split_recordings(static_cast<std::size_t>(config.recordings), config.train_fraction,
                                   config.val_fraction);
    setup.train_config = config.train;
    setup.l2 = config.train.l2;
    setup.convert = config.convert;
    setup.eval = config.eval;
    setup.dedupe_window_us = config.dedupe_window_us;
    setup.sample_events = config.sample_events;

    const AblationCell base{config.subsample, config.norm, Regularization::l2};
    const auto data = prepare_split(setup.recordings, setup.split, prepare_options(setup, base));
    std::cerr << "desk: " << data.train.frames.size() << " train / " << data.validation.frames.size() << " val / "
              << data.test.frames.size() << " test frames (" << fmt(seconds(), 3) << " s)\n";

    const auto run = run_cell(setup, data, base);
    std::cerr << "desk: base cell trained, ann " << run.ann.accuracy << " snn_dvs " << run.dvs.accuracy << " ("
              << fmt(seconds(), 3) << " s)\n";
    const auto analog = evaluate_snn(run.net, EvalMode::snn_analog, {data.test.frames, {}}, config.eval);
    auto ref_eval = config.eval;
    ref_eval.run.dvs_bias = DvsBiasMode::reference;
    const auto dvs_reference = evaluate_snn(run.net, EvalMode::snn_dvs, {{}, data.test.samples}, ref_eval);
    std::cerr << "desk: analog " << analog.accuracy << ", dvs (reference bias) " << dvs_reference.accuracy << " ("
              << fmt(seconds(), 3) << " s)\n";

    const std::vector<RunReport> reports{run.ann, analog, run.dvs};
    write_file(out / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, reports); });
    write_file(out / "curves.csv", [&](std::ostream& o) {
        std::ostringstream body;
        for (const auto& r : {analog, run.dvs})
        {
            std::ostringstream one;
            write_curve_csv(one, r);
            auto text = one.str();
            body << (body.tellp() > 0 ? text.substr(text.find('\n') + 1) : text);
        }
        o << body.str();
    });
    write_file(out / "history.csv", [&](std::ostream& o) { write_history_csv(o, run.trained.history); });
    write_file(out / "confusion_snn_dvs.csv", [&](std::ostream& o) { write_confusion_csv(o, run.dvs); });

    DeskResults r;
    const double ann = run.ann.accuracy;
    const double gap_analog = 100 * (ann - analog.accuracy);
    const double gap_dvs = 100 * (ann - run.dvs.accuracy);
    r.end_to_end.pass = ann >= 0.90 && std::abs(gap_analog) <= 2.0 && gap_dvs <= 6.0;
    r.end_to_end.detail = std::to_string(data.train.frames.size() + data.validation.frames.size() +
                                         data.test.frames.size()) +
                          " frames, ann " + fmt(ann) + ", snn_analog " + fmt(analog.accuracy) + " (gap " +
                          fmt(gap_analog, 3) + " pts), snn_dvs " + fmt(run.dvs.accuracy) + " (gap " +
                          fmt(gap_dvs, 3) + " pts); reference-bias snn_dvs " + fmt(dvs_reference.accuracy);

    const double ratio = static_cast<double>(run.dvs.ann_ops) / run.dvs.mean_ops;
    r.ops.pass = ratio >= 3.0;
    r.ops.detail = "ann " + std::to_string(run.dvs.ann_ops) + " ops/frame, snn_dvs mean " + fmt(run.dvs.mean_ops, 6) +
                   " ops/sample, ratio " + fmt(ratio, 3);

    // directional ablations; the base row is shared
    std::vector<AblationRow> rows{run.row};
    const AblationCell no_l2{config.subsample, config.norm, Regularization::none};
    rows.push_back(run_cell(setup, data, no_l2).row);
    std::cerr << "desk: l2 off, snn_dvs " << rows.back().dvs_accuracy << " (" << fmt(seconds(), 3) << " s)\n";
    for (const AblationCell cell : {AblationCell{SubsampleMode::sum, config.norm, Regularization::l2},
                                    AblationCell{config.subsample, NormOrder::scale_first, Regularization::l2}})
    {
        const auto other = prepare_split(setup.recordings, setup.split, prepare_options(setup, cell));
        rows.push_back(run_cell(setup, other, cell).row);
        std::cerr << "desk: " << to_string(cell.subsample) << "/" << to_string(cell.norm) << ", snn_dvs "
                  << rows.back().dvs_accuracy << " (" << fmt(seconds(), 3) << " s)\n";
    }
    write_file(out / "ablation.csv", [&](std::ostream& o) { write_ablation_csv(o, rows); });

    const double b = rows[0].dvs_accuracy;
    const bool l2_ok = b >= rows[1].dvs_accuracy;
    const bool max_ok = b >= rows[2].dvs_accuracy;
    const bool clip_ok = b >= rows[3].dvs_accuracy;
    r.ablations.pass = l2_ok && max_ok && clip_ok;
    r.ablations.detail = "snn_dvs max " + fmt(b) + (max_ok ? " >= " : " < ") + "sum " + fmt(rows[2].dvs_accuracy) +
                         "; clip_first " + fmt(b) + (clip_ok ? " >= " : " < ") + "scale_first " +
                         fmt(rows[3].dvs_accuracy) + "; l2 " + fmt(b) + (l2_ok ? " >= " : " < ") + "none " +
                         fmt(rows[1].dvs_accuracy);
    std::cerr << "desk: done in " << fmt(seconds(), 4) << " s\n";
    return r;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria, one PASS/FAIL line each."};
    std::string config_path = EVSNN_DESK_CONFIG;
    fs::path out = "acceptance_out";
    std::vector<int> only;
    std::vector<int> expect_fail;
    app.add_option("-c,--config", config_path, "pipeline config of the desk-scale run")->check(CLI::ExistingFile);
    app.add_option("--out", out, "directory for CSV artifacts and the verdict file");
    app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 10));
    app.add_option("--expect-fail", expect_fail, "criteria allowed to fail")->delimiter(',')->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    const std::set<int> selected(only.begin(), only.end());
    const std::set<int> allowed(expect_fail.begin(), expect_fail.end());
    auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

    try
    {
        fs::create_directories(out);
        std::ofstream verdicts(out / "acceptance.txt");
        int unexpected = 0;
        auto report = [&](int id, const char* name, const Verdict& v) {
            std::ostringstream line;
            line << (v.pass ? "PASS" : "FAIL") << "  " << id << "  " << name << ": " << v.detail;
            if (!v.pass && allowed.count(id))
                line << " [expected]";
            std::cout << line.str() << std::endl;
            verdicts << line.str() << "\n";
            unexpected += !v.pass && !allowed.count(id);
        };

        if (wanted(1))
            report(1, "architecture identity", architecture_identity());
        if (wanted(2))
            report(2, "gradient correctness", gradient_correctness());
        if (wanted(3))
            report(3, "rate-coding fidelity", rate_coding());
        if (wanted(4))
            report(4, "fast-forward exactness", fast_forward_exactness());
        if (wanted(5))
            report(5, "AEDAT round trip", aedat_round_trip());
        if (wanted(6))
            report(6, "normalization consistency", normalization_consistency());
        if (wanted(7) || wanted(8) || wanted(9))
        {
            const auto config = cli::load_config(config_path);
            cli::validate(config);
            const auto desk = desk_run(config, out);
            if (wanted(7))
                report(7, "end-to-end desk run", desk.end_to_end);
            if (wanted(8))
                report(8, "operation reduction", desk.ops);
            if (wanted(9))
                report(9, "directional ablations", desk.ablations);
        }
        if (wanted(10))
            report(10, "burst asymmetry", burst_asymmetry());
        return unexpected == 0 ? 0 : 1;
    }
    catch (const std::exception& e)
    {
        std::cerr << "acceptance: " << e.what() << "\n";
        return 1;
    }
}

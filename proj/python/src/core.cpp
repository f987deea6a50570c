// Python bindings: data generation, file formats, model evaluation and the
// pipeline stages. Events cross the boundary as numpy structured arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "evsnn/aedat.hpp"
#include "evsnn/errors.hpp"
#include "evsnn/eval.hpp"
#include "evsnn/io.hpp"
#include "pipeline.hpp"

namespace py = pybind11;
using namespace evsnn;

namespace {

struct EventRecord
{
    std::int64_t t;
    std::uint16_t x;
    std::uint16_t y;
    std::uint8_t p;
};

py::array_t<EventRecord> to_array(std::span<const DvsEvent> events)
{
    py::array_t<EventRecord> out(static_cast<py::ssize_t>(events.size()));
    auto* r = out.mutable_data();
    for (std::size_t i = 0; i < events.size(); ++i)
        r[i] = {events[i].timestamp_us, events[i].x, events[i].y, static_cast<std::uint8_t>(events[i].polarity)};
    return out;
}

std::vector<DvsEvent> from_array(const py::array_t<EventRecord, py::array::c_style | py::array::forcecast>& a)
{
    std::vector<DvsEvent> out(static_cast<std::size_t>(a.size()));
    const auto* r = a.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = {r[i].t, r[i].x, r[i].y, r[i].p ? Polarity::on : Polarity::off};
    return out;
}

py::array_t<float> frame_array(const Frame& f)
{
    py::array_t<float> out({f.height, f.width});
    std::copy(f.cells.begin(), f.cells.end(), out.mutable_data());
    return out;
}

Frame to_frame(const py::array_t<float, py::array::c_style | py::array::forcecast>& a)
{
    if (a.ndim() != 2)
        throw ConfigError("frame must be a 2-d array");
    Frame f(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), f.cells.begin());
    return f;
}

py::dict result_dict(const SampleResult& r)
{
    py::dict d;
    d["prediction"] = std::string(to_string(r.prediction));
    d["output_counts"] = r.output_counts;
    d["ops"] = r.ops;
    d["ticks"] = r.ticks;
    d["input_spikes"] = r.input_spikes;
    d["bias_scale"] = r.bias_scale;
    py::list timeline;
    for (const auto& t : r.timeline)
        timeline.append(py::make_tuple(t.tick, t.ops, std::string(to_string(t.prediction))));
    d["timeline"] = timeline;
    return d;
}

cli::PipelineConfig config_from(const std::optional<std::string>& text, const py::dict& overrides)
{
    auto c = text ? cli::parse_config(*text) : cli::PipelineConfig{};
    for (const auto& [k, v] : overrides)
        cli::set_value(c, py::str(k), py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false")
                                                                   : std::string(py::str(v)));
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "evsnn core: DVS event data, CNN to spiking network conversion and evaluation";
    PYBIND11_NUMPY_DTYPE(EventRecord, t, x, y, p);

    py::register_exception<Error>(m, "EvsnnError");

    m.attr("ARCH_PARAMETERS") = ArchSpec::steering().parameter_count();
    m.attr("ARCH_NEURONS") = ArchSpec::steering().neuron_count();
    m.attr("ANN_OPS") = ann_op_count(ArchSpec::steering());
    m.attr("SAMPLE_EVENTS") = kSampleEvents;

    m.def("decode_address", [](std::uint32_t word) {
        const auto a = decode_address(word);
        return py::make_tuple(a.x, a.y, static_cast<int>(a.polarity));
    });
    m.def("encode_address", [](int x, int y, int p) { return encode_address(x, y, p ? Polarity::on : Polarity::off); });

    m.def(
        "read_aedat", [](const std::filesystem::path& path) { return to_array(read_stream_file(path).events); },
        "Events of an AEDAT file as a structured array (t, x, y, p).");
    m.def(
        "write_aedat",
        [](const std::filesystem::path& path, const py::array_t<EventRecord>& events) {
            EventStream s;
            s.events = from_array(events);
            write_stream_file(path, s);
        },
        py::arg("path"), py::arg("events"));

    m.def(
        "generate_recording",
        [](std::optional<std::string> config, py::dict overrides, int index) {
            const auto c = config_from(config, overrides);
            const auto rec = generate_recording(cli::scene_for(c, static_cast<std::size_t>(index)));
            py::list labels;
            for (const auto& iv : rec.labels.intervals())
                labels.append(py::make_tuple(iv.start_us, iv.end_us, std::string(to_string(iv.label))));
            return py::make_tuple(to_array(rec.stream.events), labels);
        },
        py::arg("config") = py::none(), py::arg("overrides") = py::dict(), py::arg("index") = 0,
        "Synthetic recording `index` of a pipeline config: (events, [(start_us, end_us, label)]).");

    m.def(
        "training_frame",
        [](const py::array_t<EventRecord>& events, const std::string& norm) {
            Sample s;
            s.events = from_array(events);
            return frame_array(make_training_frame(s, parse_norm_order(norm)));
        },
        py::arg("events"), py::arg("norm") = "clip_first", "Normalized 36x36 frame of one sample.");
    m.def(
        "filter_outliers",
        [](const py::array_t<EventRecord>& events) {
            Sample s;
            s.events = from_array(events);
            return to_array(filter_outlier_events(s).events);
        },
        py::arg("events"));

    py::class_<ModelFile>(m, "Model")
        .def_static("load", &load_model, py::arg("path"))
        .def("save", [](const ModelFile& mf, const std::filesystem::path& p) { save_model(p, mf); })
        .def_property_readonly("converted", [](const ModelFile& mf) { return mf.conversion.has_value(); })
        .def_property_readonly("lambdas",
                               [](const ModelFile& mf) {
                                   return mf.conversion ? mf.conversion->scales.lambda : std::vector<double>{};
                               })
        .def(
            "predict",
            [](const ModelFile& mf, const py::array_t<float>& frame) {
                return std::string(to_string(predict(mf.params, to_frame(frame))));
            },
            py::arg("frame"))
        .def(
            "logits",
            [](const ModelFile& mf, const py::array_t<float>& frame) {
                return forward(mf.params, to_frame(frame)).pre.back();
            },
            py::arg("frame"))
        .def(
            "run_frame",
            [](const ModelFile& mf, const py::array_t<float>& frame, const std::string& mode, std::int64_t ticks,
               double gain, std::uint64_t seed) {
                const auto net = mf.spiking();
                const auto f = to_frame(frame);
                const auto m = parse_eval_mode(mode);
                if (m == EvalMode::snn_analog)
                    return result_dict(run_sample(net, make_analog_driver(f, ticks), {}));
                if (m == EvalMode::snn_poisson)
                    return result_dict(run_sample(net, make_poisson_driver(f, gain, seed, ticks), {}));
                throw ConfigError("run_frame takes analog or poisson");
            },
            py::arg("frame"), py::arg("mode") = "analog", py::arg("ticks") = 450, py::arg("gain") = 1.0,
            py::arg("seed") = 1)
        .def(
            "run_events",
            [](const ModelFile& mf, const py::array_t<EventRecord>& events, const std::string& bias) {
                Sample s;
                s.events = from_array(events);
                RunConfig cfg;
                cfg.dvs_bias = parse_dvs_bias_mode(bias);
                return result_dict(run_sample(mf.spiking(), make_dvs_driver(s), cfg));
            },
            py::arg("events"), py::arg("dvs_bias") = "count_matched",
            "Replays outlier-filtered 36x36 events through the spiking network.");

    m.def(
        "run_stage",
        [](const std::string& stage, std::optional<std::string> config, py::dict overrides, std::string mode,
           std::filesystem::path in, std::filesystem::path model, std::filesystem::path out) {
            const auto c = config_from(config, overrides);
            const cli::StagePaths paths{in, model, out, {}};
            cli::StageOutputs files;
            if (stage == "synth")
                files = cli::stage_synth(c, paths);
            else if (stage == "prepare")
                files = cli::stage_prepare(c, paths);
            else if (stage == "train")
                files = cli::stage_train(c, paths);
            else if (stage == "convert")
                files = cli::stage_convert(c, paths);
            else if (stage == "run")
                files = cli::stage_run(c, parse_eval_mode(mode), paths);
            else if (stage == "report")
                files = cli::stage_report(c, paths);
            else
                throw ConfigError("unknown stage '" + stage + "'");
            std::vector<std::string> names;
            for (const auto& f : files)
                names.push_back(f.string());
            return names;
        },
        py::arg("stage"), py::arg("config") = py::none(), py::arg("overrides") = py::dict(), py::arg("mode") = "dvs",
        py::arg("in_dir") = "", py::arg("model") = "", py::arg("out_dir") = "",
        "Runs one pipeline stage; config is the text of a config file, overrides a dict of keys.");
}

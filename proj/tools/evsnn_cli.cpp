// evsnn: synth | prepare | train | convert | run | report

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evsnn/errors.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace evsnn;
using namespace evsnn::cli;

namespace {

enum Exit : int
{
    ok = 0,
    other = 1,
    usage = 2,
    parse = 3,
    config = 4,
    numeric = 5,
    labeling = 6,
    io = 7,
};

int exit_code(ErrorKind kind)
{
    switch (kind)
    {
        case ErrorKind::parse: return parse;
        case ErrorKind::config:
        case ErrorKind::range:
        case ErrorKind::unsupported:
        case ErrorKind::build: return config;
        case ErrorKind::numeric: return numeric;
        case ErrorKind::labeling: return labeling;
        case ErrorKind::io: return io;
    }
    return other;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Event-camera steering pipeline: synthetic DVS data, CNN training, spiking conversion and evaluation.\n"
                 "Config precedence: built-in defaults < --config file < --set key=value < --<key> flags."};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> sets;
    app.add_option("-c,--config", config_file, "flat key = value config file");
    app.add_option("--set", sets, "override one config key (key=value), repeatable");

    // every config key doubles as a flag
    std::map<std::string, std::string> flag_values;
    auto* keys = app.add_option_group("config keys");
    for (const auto& k : config_keys())
        keys->add_option("--" + k.key, flag_values[k.key], k.help);

    StagePaths paths;
    std::string mode_text;
    auto add_io = [&paths](CLI::App* sub, bool in, bool model) {
        if (in)
            sub->add_option("--in", paths.in, "input directory (default under work_dir)");
        if (model)
            sub->add_option("--model", paths.model, "model file (default under work_dir)");
        sub->add_option("--out", paths.out, "output directory (default under work_dir)");
        sub->fallthrough();
    };
    auto* synth = app.add_subcommand("synth", "generate synthetic recordings (.aedat + .labels)");
    add_io(synth, false, false);
    auto* prepare = app.add_subcommand("prepare", "subsample, bin and normalize recordings into frame/sample sets");
    add_io(prepare, true, false);
    auto* train = app.add_subcommand("train", "train the CNN on the training frames");
    add_io(train, true, false);
    auto* conv = app.add_subcommand("convert", "scale the trained CNN into a spiking network and audit biases");
    add_io(conv, true, true);
    auto* run = app.add_subcommand("run", "evaluate one mode on a prepared split");
    add_io(run, true, true);
    run->add_option("--mode", mode_text, "ann | analog | poisson | dvs")->required();
    auto* report = app.add_subcommand("report", "merge run results and train the ablation cells");
    add_io(report, true, false);
    report->add_option("--runs", paths.runs, "run directories to merge (default: work_dir/run_*)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return usage;
    }

    try
    {
        PipelineConfig cfg;
        if (!config_file.empty())
            cfg = load_config(config_file);
        for (const auto& s : sets)
        {
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + s + "'");
            set_value(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& k : config_keys())
            if (keys->get_option("--" + k.key)->count() > 0)
                set_value(cfg, k.key, flag_values[k.key]);

        StageOutputs outputs;
        if (*synth)
            outputs = stage_synth(cfg, paths);
        else if (*prepare)
            outputs = stage_prepare(cfg, paths);
        else if (*train)
            outputs = stage_train(cfg, paths);
        else if (*conv)
            outputs = stage_convert(cfg, paths);
        else if (*run)
            outputs = stage_run(cfg, parse_eval_mode(mode_text), paths);
        else
            outputs = stage_report(cfg, paths);

        for (const auto& f : outputs)
            if (!fs::exists(f))
            {
                std::cerr << "error: declared output missing: " << f << "\n";
                return io;
            }
        for (const auto& f : outputs)
            std::cout << f.string() << "\n";
        return ok;
    }
    catch (const Error& e)
    {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    }
    catch (const fs::filesystem_error& e)
    {
        std::cerr << "error (io): " << e.what() << "\n";
        return io;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return other;
    }
}

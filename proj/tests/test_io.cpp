#include <unistd.h>

#include <filesystem>
#include <vector>

#include "doctest.h"
#include "evsnn/errors.hpp"
#include "evsnn/io.hpp"
#include "evsnn/rng.hpp"

using namespace evsnn;

namespace {

NetworkParams awkward_params(std::uint64_t seed)
{
    auto p = init_params(ArchSpec::steering(), seed);
    Rng rng(seed);
    // values that do not survive a lossy decimal round trip
    for (auto& l : p.layers)
        for (auto& b : l.biases)
            b = rng.uniform(-1, 1) / 3.0;
    p.layers[0].weights[0] = 1e-300;
    p.layers[0].weights[1] = -0.1;
    return p;
}

std::vector<LabeledFrame> some_frames(int n)
{
    Rng rng(5);
    std::vector<LabeledFrame> out;
    for (int i = 0; i < n; ++i)
    {
        LabeledFrame lf;
        lf.frame = Frame(36, 36);
        for (auto& c : lf.frame.cells)
            c = static_cast<float>(rng.uniform());
        lf.label = label_from_index(i % kNumClasses);
        out.push_back(std::move(lf));
    }
    return out;
}

std::vector<Sample> some_samples()
{
    Rng rng(6);
    std::vector<Sample> out(3);
    std::int64_t t = 17;
    for (std::size_t i = 0; i < out.size(); ++i)
    {
        auto& s = out[i];
        s.label = label_from_index(static_cast<int>(i));
        s.start_us = t;
        for (int k = 0; k < 50 * static_cast<int>(i); ++k)
        {
            t += static_cast<std::int64_t>(rng.uniform_int(9));
            s.events.push_back({t, static_cast<std::uint16_t>(rng.uniform_int(36)),
                                static_cast<std::uint16_t>(rng.uniform_int(36)),
                                rng.bernoulli(0.5) ? Polarity::on : Polarity::off});
        }
        s.end_us = t;
    }
    return out;
}

struct TempDir
{
    std::filesystem::path path;
    TempDir() : path(std::filesystem::temp_directory_path() / ("evsnn_io_" + std::to_string(::getpid())))
    {
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("model text round trip is exact")
{
    ModelFile m;
    m.params = awkward_params(3);
    CHECK(parse_model(format_model(m)).params == m.params);
    CHECK(!parse_model(format_model(m)).conversion);

    const std::vector<Frame> calib{some_frames(4)[0].frame, some_frames(4)[1].frame};
    const auto net = convert(m.params, calib, 99.0, 0.5);
    m.conversion = net.conversion;
    m.threshold = 0.5;
    const auto back = parse_model(format_model(m));
    REQUIRE(back.conversion);
    CHECK(back.conversion->scales.lambda == m.conversion->scales.lambda);
    CHECK(back.conversion->scales.percentile == 99.0);
    CHECK(back.conversion->calibration_fingerprint == m.conversion->calibration_fingerprint);
    CHECK(back.conversion->calibration_frames == 2);
    CHECK(back.threshold == 0.5);
    CHECK(format_model(back) == format_model(m));

    // the stored model rebuilds the same spiking network
    const auto rebuilt = back.spiking();
    REQUIRE(rebuilt.layers.size() == net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i)
    {
        CHECK(rebuilt.layers[i].weights == net.layers[i].weights);
        CHECK(rebuilt.layers[i].biases == net.layers[i].biases);
    }
    CHECK(rebuilt.threshold_fixed == net.threshold_fixed);
}

TEST_CASE("unconverted model cannot be simulated")
{
    ModelFile m;
    m.params = init_params(ArchSpec::steering(), 1);
    CHECK_THROWS_AS(m.spiking(), BuildError);
}

TEST_CASE("malformed model files")
{
    ModelFile m;
    m.params = init_params(ArchSpec::steering(), 1);
    const auto good = format_model(m);
    CHECK_THROWS_AS(parse_model("{not json"), ParseError);
    CHECK_THROWS_AS(parse_model("{}"), ConfigError);
    CHECK_THROWS_AS(parse_model("[1,2]"), ConfigError);

    auto edit = [&good](const std::string& from, const std::string& to) {
        auto s = good;
        const auto at = s.find(from);
        REQUIRE(at != std::string::npos);
        return s.replace(at, from.size(), to);
    };
    CHECK_THROWS_AS(parse_model(edit("\"evsnn-model\"", "\"other\"")), ConfigError);
    CHECK_THROWS_AS(parse_model(edit("\"version\": 1", "\"version\": 7")), ConfigError);
    CHECK_THROWS_AS(parse_model(edit("\"dense\"", "\"recurrent\"")), ConfigError);

    // a layer with the wrong weight count
    auto small = m;
    small.params.layers[4].weights.pop_back();
    CHECK_THROWS_AS(parse_model(format_model(small)), ConfigError);

    auto converted = m;
    converted.conversion = ConversionInfo{};
    converted.conversion->scales.lambda.assign(m.params.arch.layers.size(), 1.0);
    const auto with_conv = format_model(converted);
    auto bad = with_conv;
    bad.replace(bad.find("\"0000000000000000\""), 18, "\"zz\"");
    CHECK_THROWS_AS(parse_model(bad), ConfigError);
}

TEST_CASE("frame set round trip")
{
    const auto frames = some_frames(5);
    const auto bytes = encode_frames(frames);
    CHECK(bytes.size() == 8 + 4 * 4 + 5 * (36 * 36 * 4 + 1));
    const auto back = decode_frames(bytes);
    REQUIRE(back.size() == 5);
    for (std::size_t i = 0; i < 5; ++i)
    {
        CHECK(back[i].frame == frames[i].frame);
        CHECK(back[i].label == frames[i].label);
    }
    CHECK(encode_frames(back) == bytes);
    CHECK(decode_frames(encode_frames({})).empty());

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_frames(truncated), ParseError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_frames(trailing), ParseError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_frames(magic), ParseError);
    auto label = bytes;
    label.back() = 9;
    CHECK_THROWS_AS(decode_frames(label), ParseError);

    auto mixed = frames;
    mixed[1].frame = Frame(4, 4);
    CHECK_THROWS_AS(encode_frames(mixed), ConfigError);
}

TEST_CASE("sample set round trip")
{
    const auto samples = some_samples();
    const auto bytes = encode_samples(samples);
    const auto back = decode_samples(bytes);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
    {
        CHECK(back[i].events == samples[i].events);
        CHECK(back[i].start_us == samples[i].start_us);
        CHECK(back[i].end_us == samples[i].end_us);
        CHECK(back[i].label == samples[i].label);
    }
    CHECK(encode_samples(back) == bytes);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(decode_samples(truncated), ParseError);
    auto version = bytes;
    version[8] = 2;
    CHECK_THROWS_AS(decode_samples(version), ParseError);
}

TEST_CASE("files and fingerprints")
{
    TempDir dir;
    const auto frames = some_frames(2);
    save_frames(dir.path / "f.bin", frames);
    CHECK(load_frames(dir.path / "f.bin").size() == 2);
    save_samples(dir.path / "s.bin", some_samples());
    CHECK(load_samples(dir.path / "s.bin").size() == 3);

    ModelFile m;
    m.params = awkward_params(9);
    save_model(dir.path / "m.json", m);
    CHECK(load_model(dir.path / "m.json").params == m.params);

    write_text(dir.path / "a.txt", "abc");
    write_text(dir.path / "b.txt", "abd");
    CHECK(read_text(dir.path / "a.txt") == "abc");
    const auto fa = file_fingerprint(dir.path / "a.txt");
    CHECK(fa.size() == 16);
    CHECK(fa == file_fingerprint(dir.path / "a.txt"));
    CHECK(fa != file_fingerprint(dir.path / "b.txt"));
    // FNV-1a 64 of the empty string
    write_text(dir.path / "e.txt", "");
    CHECK(file_fingerprint(dir.path / "e.txt") == "cbf29ce484222325");
    CHECK(hex64(255) == "00000000000000ff");

    CHECK_THROWS_AS(read_file(dir.path / "missing"), IoError);
    CHECK_THROWS_AS(write_text(dir.path / "no" / "such" / "dir.txt", "x"), IoError);
}

#include "evsnn/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>

#include "evsnn/errors.hpp"
#include "json.hpp"

namespace evsnn {

using nlohmann::json;

namespace {

json arch_json(const ArchSpec& arch)
{
    json layers = json::array();
    for (const auto& l : arch.layers)
    {
        json j{{"kind", to_string(l.kind)}};
        if (l.kind == LayerKind::conv)
        {
            j["units"] = l.units;
            j["kernel"] = l.kernel;
        }
        else if (l.kind == LayerKind::dense)
            j["units"] = l.units;
        else
            j["pool"] = l.pool;
        layers.push_back(j);
    }
    return {{"input", {arch.input.height, arch.input.width, arch.input.channels}}, {"layers", layers}};
}

ArchSpec arch_from(const json& j)
{
    ArchSpec a;
    const auto& in = j.at("input");
    a.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
    for (const auto& l : j.at("layers"))
    {
        const auto kind = l.at("kind").get<std::string>();
        if (kind == "conv")
            a.layers.push_back(LayerSpec::conv(l.at("units").get<int>(), l.at("kernel").get<int>()));
        else if (kind == "maxpool")
            a.layers.push_back(LayerSpec::maxpool(l.at("pool").get<int>()));
        else if (kind == "dense")
            a.layers.push_back(LayerSpec::dense(l.at("units").get<int>()));
        else
            throw ConfigError("unknown layer kind '" + kind + "'");
    }
    a.validate();
    return a;
}

std::uint64_t parse_hex64(const std::string& s)
{
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (ec != std::errc{} || end != s.data() + s.size() || s.empty())
        throw ConfigError("bad fingerprint '" + s + "'");
    return v;
}

// little-endian byte buffer helpers
struct Writer
{
    std::vector<std::uint8_t> bytes;

    template <typename T>
    void put(T value)
    {
        static_assert(std::is_trivially_copyable_v<T>);
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(raw, raw + sizeof(T));
        bytes.insert(bytes.end(), raw, raw + sizeof(T));
    }
    void magic(const char (&m)[9]) { bytes.insert(bytes.end(), m, m + 8); }
};

struct Reader
{
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const
    {
        if (bytes.size() - pos < n)
            throw ParseError("truncated file", pos);
    }
    template <typename T>
    T get()
    {
        need(sizeof(T));
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, bytes.data() + pos, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(raw, raw + sizeof(T));
        pos += sizeof(T);
        T v;
        std::memcpy(&v, raw, sizeof(T));
        return v;
    }
    void magic(const char (&m)[9])
    {
        need(8);
        if (std::memcmp(bytes.data() + pos, m, 8) != 0)
            throw ParseError(std::string("missing ") + m + " magic", pos);
        pos += 8;
    }
    ClassLabel label()
    {
        const auto at = pos;
        const auto b = get<std::uint8_t>();
        if (b >= kNumClasses)
            throw ParseError("bad label byte " + std::to_string(b), at);
        return label_from_index(b);
    }
};

}  // namespace

std::string hex64(std::uint64_t value)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

SpikingNetwork ModelFile::spiking() const
{
    if (!conversion)
        throw BuildError("model has no conversion section; run convert first");
    auto net = build_spiking(rescale(params, conversion->scales), threshold);
    net.conversion = conversion;
    return net;
}

std::string format_model(const ModelFile& model)
{
    const auto& p = model.params;
    json layers = json::array();
    for (const auto& l : p.layers)
        layers.push_back({{"weights", l.weights}, {"biases", l.biases}});
    json j{{"format", "evsnn-model"},
           {"version", kModelVersion},
           {"arch", arch_json(p.arch)},
           {"flatten_order", p.flatten_order},
           {"weight_layout", {{"conv", "ky,kx,in,out"}, {"dense", "in,out"}}},
           {"use_biases", p.use_biases},
           {"layers", layers}};
    if (model.conversion)
    {
        const auto& c = *model.conversion;
        j["conversion"] = {{"lambda", c.scales.lambda},
                           {"percentile", c.scales.percentile},
                           {"threshold", model.threshold},
                           {"calibration_frames", c.calibration_frames},
                           {"calibration_fingerprint", hex64(c.calibration_fingerprint)}};
    }
    return j.dump(1) + "\n";
}

ModelFile parse_model(const std::string& text)
{
    json j;
    try
    {
        j = json::parse(text);
    }
    catch (const json::parse_error& e)
    {
        throw ParseError(std::string("model file is not valid JSON: ") + e.what(), e.byte);
    }
    try
    {
        if (j.at("format") != "evsnn-model")
            throw ConfigError("not an evsnn model file");
        if (j.at("version").get<int>() != kModelVersion)
            throw ConfigError("unsupported model file version " + j.at("version").dump());
        ModelFile m;
        m.params.arch = arch_from(j.at("arch"));
        m.params.flatten_order = j.value("flatten_order", std::string{});
        m.params.use_biases = j.value("use_biases", true);
        const auto& layers = j.at("layers");
        if (layers.size() != m.params.arch.layers.size())
            throw ConfigError("model file layer count does not match its architecture");
        for (std::size_t i = 0; i < layers.size(); ++i)
        {
            LayerParams lp{layers[i].at("weights").get<std::vector<double>>(),
                           layers[i].at("biases").get<std::vector<double>>()};
            if (lp.weights.size() != m.params.arch.weight_count(i) || lp.biases.size() != m.params.arch.bias_count(i))
                throw ConfigError("layer " + std::to_string(i) + " arrays do not match the architecture");
            m.params.layers.push_back(std::move(lp));
        }
        if (j.contains("conversion"))
        {
            const auto& c = j.at("conversion");
            ConversionInfo info;
            info.scales.lambda = c.at("lambda").get<std::vector<double>>();
            info.scales.percentile = c.at("percentile").get<double>();
            info.calibration_frames = c.at("calibration_frames").get<std::size_t>();
            info.calibration_fingerprint = parse_hex64(c.at("calibration_fingerprint").get<std::string>());
            if (info.scales.lambda.size() != m.params.arch.layers.size())
                throw ConfigError("conversion lambdas do not match the architecture");
            m.threshold = c.at("threshold").get<double>();
            m.conversion = std::move(info);
        }
        return m;
    }
    catch (const json::exception& e)
    {
        throw ConfigError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const ModelFile& model) { write_text(path, format_model(model)); }

ModelFile load_model(const std::filesystem::path& path) { return parse_model(read_text(path)); }

std::vector<std::uint8_t> encode_frames(std::span<const LabeledFrame> frames)
{
    Writer w;
    w.magic("DVSFRAME");
    w.put(kFramesVersion);
    w.put(static_cast<std::uint32_t>(frames.size()));
    const auto h = frames.empty() ? 36 : frames.front().frame.height;
    const auto wd = frames.empty() ? 36 : frames.front().frame.width;
    w.put(static_cast<std::uint32_t>(h));
    w.put(static_cast<std::uint32_t>(wd));
    for (const auto& f : frames)
    {
        if (f.frame.height != h || f.frame.width != wd)
            throw ConfigError("all frames in a set must share one size");
        for (auto c : f.frame.cells)
            w.put(c);
        w.put(static_cast<std::uint8_t>(index_of(f.label)));
    }
    return std::move(w.bytes);
}

std::vector<LabeledFrame> decode_frames(std::span<const std::uint8_t> bytes)
{
    Reader r{bytes};
    r.magic("DVSFRAME");
    if (const auto v = r.get<std::uint32_t>(); v != kFramesVersion)
        throw ParseError("unsupported frame set version " + std::to_string(v), 8);
    const auto count = r.get<std::uint32_t>();
    const auto h = static_cast<int>(r.get<std::uint32_t>());
    const auto w = static_cast<int>(r.get<std::uint32_t>());
    const auto per = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    r.need(static_cast<std::size_t>(count) * (per * 4 + 1));
    std::vector<LabeledFrame> out(count);
    for (auto& f : out)
    {
        f.frame = Frame(w, h);
        for (auto& c : f.frame.cells)
            c = r.get<float>();
        f.label = r.label();
    }
    if (r.pos != bytes.size())
        throw ParseError("trailing bytes after frame set", r.pos);
    return out;
}

void save_frames(const std::filesystem::path& path, std::span<const LabeledFrame> frames)
{
    write_file(path, encode_frames(frames));
}

std::vector<LabeledFrame> load_frames(const std::filesystem::path& path) { return decode_frames(read_file(path)); }

std::vector<std::uint8_t> encode_samples(std::span<const Sample> samples)
{
    Writer w;
    w.magic("DVSSAMPL");
    w.put(kSamplesVersion);
    w.put(static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples)
    {
        w.put(static_cast<std::uint8_t>(index_of(s.label)));
        w.put(static_cast<std::int64_t>(s.start_us));
        w.put(static_cast<std::int64_t>(s.end_us));
        w.put(static_cast<std::uint32_t>(s.events.size()));
        for (const auto& e : s.events)
        {
            w.put(static_cast<std::int64_t>(e.timestamp_us));
            w.put(e.x);
            w.put(e.y);
            w.put(static_cast<std::uint8_t>(e.polarity == Polarity::on ? 1 : 0));
        }
    }
    return std::move(w.bytes);
}

std::vector<Sample> decode_samples(std::span<const std::uint8_t> bytes)
{
    Reader r{bytes};
    r.magic("DVSSAMPL");
    if (const auto v = r.get<std::uint32_t>(); v != kSamplesVersion)
        throw ParseError("unsupported sample set version " + std::to_string(v), 8);
    const auto count = r.get<std::uint32_t>();
    std::vector<Sample> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i)
    {
        Sample s;
        s.label = r.label();
        s.start_us = r.get<std::int64_t>();
        s.end_us = r.get<std::int64_t>();
        const auto n = r.get<std::uint32_t>();
        r.need(static_cast<std::size_t>(n) * 13);
        s.events.resize(n);
        for (auto& e : s.events)
        {
            e.timestamp_us = r.get<std::int64_t>();
            e.x = r.get<std::uint16_t>();
            e.y = r.get<std::uint16_t>();
            e.polarity = r.get<std::uint8_t>() ? Polarity::on : Polarity::off;
        }
        out.push_back(std::move(s));
    }
    if (r.pos != bytes.size())
        throw ParseError("trailing bytes after sample set", r.pos);
    return out;
}

void save_samples(const std::filesystem::path& path, std::span<const Sample> samples)
{
    write_file(path, encode_samples(samples));
}

std::vector<Sample> load_samples(const std::filesystem::path& path) { return decode_samples(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

std::string file_fingerprint(const std::filesystem::path& path)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto b : read_file(path))
    {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return hex64(h);
}

}  // namespace evsnn

#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <span>
#include <variant>
#include <vector>

#include "evsnn/aedat.hpp"
#include "evsnn/convert.hpp"
#include "evsnn/labels.hpp"
#include "evsnn/preprocess.hpp"

namespace evsnn {

/// `count` simultaneous unit spikes from one input pixel (row-major index).
struct InputSpike
{
    std::uint32_t pixel = 0;
    std::uint32_t count = 1;
};

struct TimelineRecord
{
    std::int64_t tick = 0;
    std::uint64_t ops = 0;
    ClassLabel prediction = ClassLabel::left;

    bool operator==(const TimelineRecord&) const = default;
};

/// layer -1 is the input plane.
struct SpikeEvent
{
    std::int64_t tick = 0;
    int layer = 0;
    std::uint32_t neuron = 0;
};

namespace detail {

struct Schedule
{
    using Entry = std::pair<std::int64_t, std::uint32_t>;  // (tick, neuron)
    using Heap = std::priority_queue<Entry, std::vector<Entry>, std::greater<>>;

    bool valid = false;
    std::vector<std::vector<std::int64_t>> next;  // kNever when no spike is pending
    std::vector<Heap> heaps;
};

}  // namespace detail

/// Mutable simulation state for one network. Potentials are stored lazily:
/// potential[l][n] is the settled value at the end of tick
/// potential_tick[l][n]; in between, the neuron is known to integrate only
/// its constant drift. Use potentials() for values at the current tick.
struct SimState
{
    std::int64_t now = 0;
    std::vector<std::vector<std::int64_t>> potential;  // empty for pool layers
    std::vector<std::vector<std::int64_t>> potential_tick;
    std::vector<std::vector<std::int64_t>> drift;  // per-tick constant charge (bias or analog current)
    std::vector<std::vector<std::uint32_t>> counts;
    std::uint64_t ops = 0;
    std::uint64_t per_tick_ops = 0;  // charged every tick regardless of spikes
    std::uint64_t input_spikes = 0;
    std::vector<TimelineRecord> timeline;
    std::vector<SpikeEvent>* raster = nullptr;

    detail::Schedule schedule;
};

SimState make_state(const SpikingNetwork& net);

/// Potentials at the current tick, fixed point.
std::vector<std::vector<std::int64_t>> potentials(const SimState& state);

/// Compares everything observable: tick, potentials, counts, ops, timeline.
bool same_state(const SimState& a, const SimState& b);

/// Sets every IF neuron's per-tick charge to bias_scale * b'. When
/// `layer0_currents` is given it replaces layer 0's charge outright (analog
/// input, currents already include the bias).
void set_drive(const SpikingNetwork& net, SimState& state, double bias_scale,
               std::span<const double> layer0_currents = {}, std::uint64_t per_tick_ops = 0);

/// Per-layer indices of the units that spiked in one tick.
using TickSpikes = std::vector<std::vector<std::uint32_t>>;

/// Reference update: advances one tick touching every neuron. Layers update
/// in order, so a spike reaches the next layer within the same tick.
TickSpikes step(const SpikingNetwork& net, SimState& state, std::span<const InputSpike> input = {});

/// Advances `ticks` ticks without input, jumping between the exact ticks at
/// which drift alone makes a neuron cross threshold. Bitwise equal to
/// calling step() `ticks` times with no input.
void fast_forward(const SpikingNetwork& net, SimState& state, std::int64_t ticks);

/// Event-driven counterpart of step(): fast-forwards to tick - 1, then
/// processes `tick` with the given input. tick must be > state.now.
void inject(const SpikingNetwork& net, SimState& state, std::int64_t tick, std::span<const InputSpike> input);

/// Count argmax with the lowest index on ties; when no output neuron has
/// spiked, the largest output potential (again lowest index on ties).
ClassLabel current_prediction(const SpikingNetwork& net, const SimState& state);

struct AnalogInput
{
    Frame frame;
    std::int64_t ticks = 450;
};

struct PoissonInput
{
    Frame frame;
    double gain = 1.0;
    std::uint64_t seed = 1;
    std::int64_t ticks = 450;
};

struct DvsInput
{
    std::vector<DvsEvent> events;  // outlier-filtered, 36x36, time ordered
};

using InputDriver = std::variant<AnalogInput, PoissonInput, DvsInput>;

InputDriver make_analog_driver(const Frame& frame, std::int64_t ticks = 450);
InputDriver make_poisson_driver(const Frame& frame, double gain, std::uint64_t seed, std::int64_t ticks = 450);
InputDriver make_dvs_driver(const Sample& filtered_sample);

/// How bias currents are scaled per tick when replaying DVS events.
/// reference: reference_ticks / duration, so a sample receives the bias
///   charge of a reference_ticks-long frame run.
/// count_matched: max pixel count / duration, matching the bias charge to
///   the event charge the way frame normalization divides counts by the max.
/// unit: the raw bias every tick.
enum class DvsBiasMode { reference, count_matched, unit };

std::string_view to_string(DvsBiasMode mode);
DvsBiasMode parse_dvs_bias_mode(std::string_view text);

struct RunConfig
{
    // count_matched by default: reference scaling lets biases swamp short samples
    DvsBiasMode dvs_bias = DvsBiasMode::count_matched;
    double reference_ticks = 450.0;
    bool record_raster = false;
};

struct SampleResult
{
    ClassLabel prediction = ClassLabel::left;
    std::vector<std::uint32_t> output_counts;
    std::vector<double> output_potentials;
    std::vector<std::uint64_t> layer_spikes;
    std::uint64_t input_spikes = 0;
    std::uint64_t ops = 0;
    std::int64_t ticks = 0;
    double bias_scale = 1.0;
    std::vector<TimelineRecord> timeline;
    std::vector<SpikeEvent> raster;
};

/// Runs one sample from a zeroed state.
SampleResult run_sample(const SpikingNetwork& net, const InputDriver& driver, const RunConfig& config = {});

/// Continuous operation: membrane potentials in `state` carry over from the
/// previous sample; counts, ops, tick and timeline restart.
SampleResult run_sample(const SpikingNetwork& net, const InputDriver& driver, const RunConfig& config,
                        SimState& state);

/// Ops charged by the analog driver up front: 2 * MACs of layer 0.
std::uint64_t analog_setup_ops(const SpikingNetwork& net);

}  // namespace evsnn
